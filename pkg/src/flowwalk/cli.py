"""Command line: ``flowwalk {partition,graph,run,study,oracle,audit} --config cfg.json``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure, 3 ``study --check`` failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, eval_points, is_mc, load_config, reference_of, run_config
from .flow import audit_conditions
from .proximity import build_graph
from .semigroup import prepare, simulate
from .study import check_report, emit_report, run_study

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("flowwalk")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this CLI reserves 2 for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON study configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--dump-graph", action="store_true", help="write graph.csv to --out")
    common.add_argument("--dump-operator", action="store_true", help="write operator.csv to --out")
    common.add_argument("--rho", type=float, help="rho for single-scale commands (default: first in config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="flowwalk", description="Random walks in a flow approximating e^{-tA} f.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("partition", parents=[common], help="build the partition and dump its cells")
    sub.add_parser("graph", parents=[common], help="build the proximity graph and dump its edges")
    sub.add_parser("run", parents=[common], help="one semigroup run at a single rho")
    st = sub.add_parser("study", parents=[common], help="rho sweep with slope fit and reports")
    st.add_argument("--check", action="store_true", help="apply the config's check thresholds")
    sub.add_parser("oracle", parents=[common], help="evaluate the reference solution alone")
    sub.add_parser("audit", parents=[common], help="sampled drift/potential condition margins")
    return p


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rho(args, cfg) -> float:
    return float(args.rho if args.rho is not None else cfg["rho"][0])


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", cfg.get("mc", {}).get("seed", 0)))


def _dump(args, G=None, L=None):
    if args.dump_graph and G is not None:
        G.to_csv(_out(args) / "graph.csv")
    if args.dump_operator and L is not None:
        L.to_csv(_out(args) / "operator.csv")


def cmd_partition(args, cfg):
    rc = run_config(cfg, args.threads)
    P = rc.partition(_rho(args, cfg))
    if args.out:
        P.to_csv(_out(args) / "partition.csv")
    if args.dump_graph:
        _dump(args, G=build_graph(P, _rho(args, cfg)))
    print(json.dumps(P.describe()))
    return EXIT_OK


def cmd_graph(args, cfg):
    rc = run_config(cfg, args.threads)
    rho = _rho(args, cfg)
    G = build_graph(rc.partition(rho), rho)
    if args.out:
        G.to_csv(_out(args) / "graph.csv")
    deg = G.degrees()
    print(json.dumps({"cells": len(deg), "rho": rho, "edges": int(deg.sum()),
                      "min_degree": int(deg.min()), "max_degree": int(deg.max())}))
    return EXIT_OK


def cmd_run(args, cfg):
    rc = run_config(cfg, args.threads)
    rho = _rho(args, cfg)
    r = simulate(rc, rho)
    _dump(args, r.graph, r.operator)
    summary = {"rho": rho, "mesh": r.partition.mesh, "cells": len(r.partition), "steps": r.steps,
               "delta": r.scale.delta, "window_kill_mass": r.window_kill_mass, **r.operator.counts()}
    pts = eval_points(cfg, rc)
    if pts:
        ids = r.partition.locate_many(pts)
        summary["values"] = [None if i < 0 else float(r.function.values[i]) for i in ids]
    if args.out:
        out = _out(args)
        with open(out / "run.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            d = r.partition.dim
            w.writerow(["cell_id"] + [f"ref{i}" for i in range(d)] + ["value"])
            for i, (x, v) in enumerate(zip(r.partition.ref, r.function.values)):
                w.writerow([i, *map(repr, x.tolist()), repr(float(v))])
        (out / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_study(args, cfg):
    rep = run_study(cfg, seed=_seed(args, cfg), threads=args.threads)
    if args.out:
        emit_report(rep, _out(args))
    if args.dump_graph or args.dump_operator:
        rc = run_config(cfg, args.threads)
        _, _, G, L = prepare(rc, rep.records[-1]["rho"])
        _dump(args, G, L)
    for r in rep.records:
        print(f"rho={r['rho']:<8g} cells={r['cells']:<9d} steps={r['steps']:<6d} sup_error={r['sup_error']}")
    f = rep.fit
    print(f"slope={f.slope} r2={f.r2} ({f.status})")
    if args.check:
        fails = check_report(rep)
        for m in fails:
            print(f"CHECK FAILED: {m}", file=sys.stderr)
        if fails:
            return EXIT_CHECK
        print("check passed")
    return EXIT_OK


def cmd_oracle(args, cfg):
    rc = run_config(cfg, args.threads)
    ref = reference_of(cfg, rc, seed=_seed(args, cfg), threads=args.threads)
    if ref is None:
        raise ConfigError("config has no reference")
    pts = eval_points(cfg, rc)
    if not pts:
        raise ConfigError("oracle needs eval_points in the config")
    x = np.asarray(pts, dtype=float)
    x = x[:, 0] if x.shape[1] == 1 and not is_mc(ref) else x
    out = {"kind": ref.kind, "points": pts, "mean": ref(x).tolist(), "se": ref.se(x).tolist()}
    print(json.dumps(out))
    if args.out:
        (_out(args) / "oracle.json").write_text(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def cmd_audit(args, cfg):
    rc = run_config(cfg, args.threads)
    a = cfg.get("audit", {})
    win = a.get("window", rc.window)
    rep = audit_conditions(rc.manifold, rc.b, rc.V, p=float(a.get("p", rc.p)), kappa=a.get("kappa", "1"),
                           samples=int(a.get("samples", 1001)), window=win)
    print(json.dumps(rep.to_dict()))
    if args.out:
        (_out(args) / "audit.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"partition": cmd_partition, "graph": cmd_graph, "run": cmd_run, "study": cmd_study,
            "oracle": cmd_oracle, "audit": cmd_audit}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, OSError, RuntimeError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
