"""Drift rate vs the rounding phase of the flow step.

Each walk step moves the reference point by ``c * delta`` and snaps it to the cell that
contains it. On a uniform circle grid that is a shift of ``c * delta / h`` cells, and its
fractional part ``phi`` is a bias that piles up over ``t / delta`` steps. With the stock
mesh law ``phi`` changes from one rho to the next and the log-log slope wanders; pinning
``phi`` through K shows the underlying rate.

    python scripts/drift_rounding.py [--phi 0 0.25 0.5] [--rho 0.2 0.1 0.05]
"""
import argparse
import math
from pathlib import Path

from flowwalk.config import load_config
from flowwalk.study import fit_slope, run_study

CFG = Path(__file__).resolve().parent / "configs" / "circle_drift.json"


def phase(K, rho, c=1.0):
    x = K * c * rho * rho / 6 / (2 * math.pi)
    return x - math.floor(x)


def k_for_phase(rho, phi, tol=0.01, c=1.0):
    K = math.ceil(2 * math.pi / rho**3)
    while True:
        f = phase(K, rho, c)
        if min(abs(f - phi), 1 - abs(f - phi)) < tol:
            return K
        K += 1


def sweep(base, rhos, K_of):
    errs, Ks = [], []
    for rho in rhos:
        K = K_of(rho)
        part = {"a": 1.0} if K is None else {"a": 1.0, "K": K}
        cfg = dict(base, rho=[rho], partition=part, residual=False, study="convergence")
        rec = run_study(cfg).records[0]
        errs.append(rec["sup_error"])
        Ks.append(rec["cells"])
    return errs, Ks, fit_slope(rhos, errs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phi", type=float, nargs="+", default=[0.0, 0.25, 0.5])
    ap.add_argument("--rho", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    args = ap.parse_args()
    base = load_config(CFG)
    errs, Ks, fit = sweep(base, args.rho, lambda r: None)
    phis = ", ".join(f"{phase(K, r):.3f}" for K, r in zip(Ks, args.rho))
    print(f"stock mesh law  phi = [{phis}]  errors {['%.5f' % e for e in errs]}  slope {fit.slope:.3f}")
    for phi in args.phi:
        errs, Ks, fit = sweep(base, args.rho, lambda r: k_for_phase(r, phi))
        print(f"phi pinned {phi:<5}  K = {Ks}  errors {['%.5f' % e for e in errs]}  slope {fit.slope:.3f}")


if __name__ == "__main__":
    main()
