"""Independent oracles for ``e^{-tA} f``: closed forms, Hermite quadrature, Feynman-Kac Monte Carlo.

The diffusion behind ``A = -Lap - b + V`` is ``dX = b(X) dt + sqrt(2) dW`` (generator
``Lap + b``), so the heat kernel is ``(4 pi t)^(-1/2) exp(-|x-y|^2 / 4t)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_hermite

from .fields import ScalarField, VectorField, as_points
from .geometry import TWO_PI, Manifold

MC_STEPS = 512
MC_BLOCK = 4096
HERMITE_NODES = 200


@dataclass(eq=False)
class ReferenceSolution:
    """Evaluator ``x -> e^{-tA} f(x)`` with a kind tag; MC oracles also report standard errors."""

    kind: str
    params: dict
    evaluator: Callable
    se_evaluator: Optional[Callable] = None

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(x)

    def se(self, x) -> np.ndarray:
        if self.se_evaluator is None:
            return np.zeros(len(np.atleast_1d(np.asarray(x, dtype=float))))
        return self.se_evaluator(x)


# ---------------------------------------------------------------------------
# closed forms


def ref_circle(terms, c: float = 0.0, v: float = 0.0, t: float = 0.0) -> ReferenceSolution:
    """``u_t = u'' + c u' - v u`` for ``f = sum a_m cos(m theta) + b_m sin(m theta)``.

    ``terms`` is a list of ``(m, a_m, b_m)``.
    """
    T = np.asarray(terms, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(T)):
        raise ValueError("non-finite Fourier coefficients")
    m, a, b = T[:, 0], T[:, 1], T[:, 2]
    decay = np.exp(-(m * m + v) * t)

    def ev(x):
        th = np.asarray(x, dtype=float).reshape(-1, 1) + c * t
        return np.sum(decay * (a * np.cos(m * th) + b * np.sin(m * th)), axis=1)

    return ReferenceSolution("fourier_circle", {"terms": T.tolist(), "c": c, "v": v, "t": t}, ev)


def _hermite(n: int):
    # scipy's asymptotic rule stays finite at 400 nodes where numpy's overflows
    z, w = roots_hermite(n)
    return z, w / math.sqrt(math.pi)


def _gauss_expect(g: Callable, nodes: int = HERMITE_NODES, check: bool = True):
    """``E g(Z)`` for ``Z ~ N(0, 1/2)`` via Gauss-Hermite, refined once as a convergence check."""
    z, w = _hermite(nodes)
    val = g(z) @ w
    if check:
        z2, w2 = _hermite(2 * nodes)
        val2 = g(z2) @ w2
        gap = np.abs(val - val2)
        if not np.all(gap <= 1e-8):
            # smooth cut-offs are not analytic and converge slowly near the cut
            raise ArithmeticError(f"Hermite quadrature not converged ({np.max(gap):.2e} between "
                                  f"{nodes} and {2 * nodes} nodes)")
    return val


def ref_line_gaussian(f: ScalarField, c: float = 0.0, v: float = 0.0, t: float = 1.0,
                      nodes: int = HERMITE_NODES) -> ReferenceSolution:
    """``e^{-vt} int (4 pi t)^(-1/2) exp(-(x + ct - y)^2 / 4t) f(y) dy`` with ``y = x + ct + 2 sqrt(t) z``."""
    if t < 0:
        raise ValueError("t must be nonnegative")

    def ev(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if t == 0:
            return f(x[:, None])
        g = lambda z: f((x[:, None] + c * t + 2 * math.sqrt(t) * z[None, :]).reshape(-1, 1)).reshape(len(x), -1)
        return math.exp(-v * t) * _gauss_expect(g, nodes)

    return ReferenceSolution("gaussian_line", {"c": c, "v": v, "t": t, "f": f.spec}, ev)


def ref_line_ou(f: ScalarField, theta: float, t: float, nodes: int = HERMITE_NODES) -> ReferenceSolution:
    """``E f(x e^{-theta t} + sigma_t N)`` with ``sigma_t^2 = (1 - e^{-2 theta t}) / theta``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    decay = math.exp(-theta * t)
    sig = math.sqrt((1 - math.exp(-2 * theta * t)) / theta)

    def ev(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        # N = sqrt(2) z with z ~ N(0, 1/2)
        g = lambda z: f((x[:, None] * decay + sig * math.sqrt(2) * z[None, :]).reshape(-1, 1)).reshape(len(x), -1)
        return _gauss_expect(g, nodes)

    return ReferenceSolution("ou_line", {"theta": theta, "t": t, "f": f.spec}, ev)


# ---------------------------------------------------------------------------
# Feynman-Kac Monte Carlo


@dataclass
class MCEstimate:
    mean: np.ndarray
    se: np.ndarray
    paths: int
    h: float
    seed: int
    killed_fraction: np.ndarray = field(default=None)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "se": self.se.tolist(), "paths": self.paths, "h": self.h,
                "seed": self.seed, "killed_fraction": self.killed_fraction.tolist()}


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of paths: Philox keyed by ``seed``, jumped ``block`` times."""
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(block)))


def _mc_block(M: Manifold, b: VectorField, V: ScalarField, f: ScalarField, t: float, X0: np.ndarray,
              n_paths: int, rng: np.random.Generator, steps: int, window):
    d = M.dim
    m = len(X0)
    h = t / steps
    sq = math.sqrt(2 * h)
    noise = rng.standard_normal((steps, n_paths, d))
    X = np.repeat(X0[:, None, :], n_paths, axis=1).reshape(-1, d)  # point-major, shared noise
    logw = np.zeros(m * n_paths)
    alive = np.ones(m * n_paths, dtype=bool)
    for k in range(steps):
        logw -= h * V(X)
        X = X + h * b(X) + sq * np.tile(noise[k], (m, 1))
        if M.kind == "circle":
            X = np.mod(X, TWO_PI)
        elif window is not None:
            alive &= window(X)
    val = np.where(alive, np.exp(logw) * f(X), 0.0).reshape(m, n_paths)
    return val.sum(axis=1), (val * val).sum(axis=1), (~alive).reshape(m, n_paths).sum(axis=1)


def _box_window(box):
    lo = np.array([a for a, _ in box], dtype=float)
    hi = np.array([b for _, b in box], dtype=float)
    return lambda X: np.all((X >= lo) & (X < hi), axis=1)


def feynman_kac_mc(M: Manifold, b: VectorField, V: ScalarField, f: ScalarField, t: float, x,
                   paths: int = 100_000, seed: int = 0, window=None, steps: int = MC_STEPS,
                   threads: int = 1) -> MCEstimate:
    """Euler-Maruyama estimate of ``E[exp(-int V) f(X_t); t < exit time]`` at the points ``x``.

    Paths come in fixed blocks of ``MC_BLOCK``; block ``j`` always draws from the same
    counter-based stream and block sums are combined in block order with ``math.fsum``, so
    the estimate is independent of ``threads``. All points share the same noise.
    """
    if paths < 1000:
        raise ValueError("need at least 1000 paths")
    if M.kind == "model2d":
        raise ValueError("Monte Carlo oracle supports Euclidean and circle geometries only")
    X0 = np.array(as_points(x, M.dim), dtype=float)
    if window is None and M.kind == "euclidean" and M.box is not None:
        window = M.box
    win = _box_window(window) if window is not None and not callable(window) else window
    nblocks = -(-paths // MC_BLOCK)

    def work(j):
        n = min(MC_BLOCK, paths - j * MC_BLOCK)
        return _mc_block(M, b, V, f, t, X0, n, block_rng(seed, j), steps, win)

    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(nblocks)))
    else:
        parts = [work(j) for j in range(nblocks)]
    m = len(X0)
    s1 = np.array([math.fsum(p[0][i] for p in parts) for i in range(m)])
    s2 = np.array([math.fsum(p[1][i] for p in parts) for i in range(m)])
    killed = np.array([sum(int(p[2][i]) for p in parts) for i in range(m)])
    mean = s1 / paths
    var = np.maximum(s2 / paths - mean * mean, 0.0) * paths / (paths - 1)
    return MCEstimate(mean, np.sqrt(var / paths), paths, t / steps, seed, killed / paths)


def ref_feynman_kac_mc(M: Manifold, b: VectorField, V: ScalarField, f: ScalarField, t: float,
                       paths: int = 100_000, seed: int = 0, window=None, steps: int = MC_STEPS,
                       threads: int = 1) -> ReferenceSolution:
    """Feynman-Kac oracle; evaluations at the same points are cached."""
    if paths < 1000:
        raise ValueError("need at least 1000 paths")
    cache = {}

    def est(x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in cache:
            cache[key] = feynman_kac_mc(M, b, V, f, t, x, paths, seed, window, steps, threads)
        return cache[key]

    params = {"paths": paths, "seed": seed, "t": t, "h": t / steps}
    return ReferenceSolution("feynman_kac_mc", params, lambda x: est(x).mean, lambda x: est(x).se)
