"""Run every study config in scripts/configs through the CLI and collect the reports.

    python scripts/run_studies.py [--out results] [--threads 1] [--check] [names ...]
"""
import argparse
from pathlib import Path

from flowwalk.cli import cli_main

HERE = Path(__file__).resolve().parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()
    names = args.names or sorted(p.stem for p in HERE.glob("*.json"))
    codes = {}
    for name in names:
        print(f"== {name}")
        argv = ["study", "--config", str(HERE / f"{name}.json"), "--out", str(Path(args.out) / name),
                "--threads", str(args.threads)]
        if args.check:
            argv.append("--check")
        codes[name] = cli_main(argv)
    print()
    for name, code in codes.items():
        print(f"{name:<16} exit {code}")
    return max(codes.values(), default=0)


if __name__ == "__main__":
    raise SystemExit(main())
