"""Generator residual at a fixed rho as the circle mesh is refined.

The neighbourhood of a cell is a whole number of cells, so its half-width ``w`` jumps
with ``rho / h``. The second-moment error ``w^2 / rho^2 - 1`` then oscillates under a
``h / rho`` envelope instead of falling linearly in the mesh.

    python scripts/residual_phase.py [--rho 0.3] [--K 400 800 1600 3200 6400 12800]
"""
import argparse
import math

import numpy as np

from flowwalk.fields import fourier_scalar
from flowwalk.geometry import Manifold
from flowwalk.semigroup import RunConfig, generator_residual


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rho", type=float, default=0.3)
    ap.add_argument("--K", type=int, nargs="+", default=[400, 800, 1600, 3200, 6400, 12800])
    args = ap.parse_args()
    rho = args.rho
    mesh, res = [], []
    print(f"{'K':>7} {'mesh':>10} {'residual':>10} {'|w^2/rho^2 - 1 - rho^2/20|':>26}")
    for K in args.K:
        h = 2 * math.pi / K
        cfg = RunConfig(Manifold.circle(), fourier_scalar([[1, 1.0, 0.0]]), 0.5, partition_override={"K": K})
        r = generator_residual(cfg, rho).sup
        D = math.ceil(rho / h) - 1
        w = (D + 0.5) * h
        model = abs(w * w / rho**2 - 1 - rho**2 / 20)
        mesh.append(h)
        res.append(r)
        print(f"{K:>7} {h:>10.6f} {r:>10.6f} {model:>26.6f}")
    x, y = np.array(mesh), np.array(res)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r2 = 1 - np.sum((y - A @ coef) ** 2) / np.sum((y - y.mean()) ** 2)
    print(f"linear fit in mesh: slope {coef[0]:.4f} intercept {coef[1]:.5f} R2 {r2:.3f}")


if __name__ == "__main__":
    main()
