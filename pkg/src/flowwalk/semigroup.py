"""Discrete semigroup ``L_delta^steps [f]`` with ``delta = rho^2 / (2(n+2))`` and its diagnostics."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import ScalarField, VectorField, as_points, zero_field, zero_scalar
from .geometry import Manifold, apply_A, box_integral, distance, is_cemetery
from .kernel import GraphFunction, TransitionOperator, build_operator
from .partition import CELL_LIMIT, Partition, circle_partition, grid_partition, model2d_partition
from .proximity import ProximityGraph, build_graph

log = logging.getLogger(__name__)

_SNAP = 1e-9


@dataclass(frozen=True)
class ScaleParams:
    rho: float
    n: int
    delta: float

    def steps(self, t: float) -> int:
        """``floor(t / delta)``, snapping quotients within ``1e-9`` of an integer.

        Without the snap ``t / delta`` for ``rho = 0.1`` lands a few ulps below 600.
        """
        if t < 0:
            raise ValueError("t must be nonnegative")
        q = t / self.delta
        r = round(q)
        if abs(q - r) <= _SNAP * max(1.0, q):
            return int(r)
        return int(math.floor(q))


def scale(rho: float, n: int) -> ScaleParams:
    if not rho > 0:
        raise ValueError("rho must be positive")
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return ScaleParams(float(rho), int(n), rho * rho / (2 * (n + 2)))


# ---------------------------------------------------------------------------
# discretisation maps


def discretize_pointwise(f: ScalarField, P: Partition) -> GraphFunction:
    """``[f](X) = f(x(X))``."""
    return GraphFunction(f(P.ref), P)


def _cell_average_block(P: Partition, f: ScalarField, sl: slice) -> np.ndarray:
    M = P.manifold
    lo, hi = P.lo[sl], P.hi[sl]
    if P.kind == "model2d":
        dens = lambda X: f(X) * M.psi.psi(X[:, 0])
    elif M.weight is not None:
        dens = lambda X: f(X) * np.exp(-M.weight.func(X))
    else:
        dens = lambda X: f(X)
    return box_integral(dens, lo, hi, rtol=1e-9) / P.volume[sl]


def discretize_mean(f: ScalarField, P: Partition, block: int = 2048) -> GraphFunction:
    """Cell averages ``(1/m(X)) int_X f dm`` by tensor Gauss-Legendre quadrature."""
    out = np.empty(len(P))
    for a in range(0, len(P), block):
        sl = slice(a, min(a + block, len(P)))
        out[sl] = _cell_average_block(P, f, sl)
    return GraphFunction(out, P)


def lp_norm(values, P: Partition, p: float = 2.0) -> float:
    """``(sum |F(X)|^p m(X))^(1/p)``."""
    v = np.abs(np.asarray(values, dtype=float))
    if math.isinf(p):
        return float(v.max(initial=0.0))
    return math.fsum(v**p * P.volume) ** (1.0 / p)


def pointwise_eval(F: GraphFunction, P: Partition, x) -> float:
    """Value of ``F`` on the cell containing ``x``."""
    if is_cemetery(x):
        raise ValueError("cannot evaluate at the cemetery")
    i = int(P.locate_many(x)[0])
    if i < 0:
        raise ValueError(f"point {x} lies outside the computational window")
    return float(F.values[i])


def mean_eval(F: GraphFunction, P: Partition, U) -> float:
    """``sum_{X in U} F(X) m(X)``."""
    ids = np.unique(np.asarray(list(U), dtype=np.int64))
    if len(ids) == 0:
        raise ValueError("empty cell set")
    return math.fsum(F.values[ids] * P.volume[ids])


# ---------------------------------------------------------------------------
# run configuration and mesh law


def manifold_dimension(M: Manifold) -> int:
    return {"euclidean": M.n, "circle": 1, "model2d": 2}[M.kind]


def mesh_target(rho: float, a: float) -> float:
    """``rho^(2+a)`` for ``a > 0``; ``rho^2 / log(1/rho)`` (still ``o(rho^2)``) for ``a = 0``."""
    if a > 0:
        return rho ** (2 + a)
    if not rho < 1:
        raise ValueError("the a = 0 law needs rho < 1")
    return rho * rho / math.log(1.0 / rho)


@dataclass
class RunConfig:
    manifold: Manifold
    f: ScalarField
    t: float
    b: Optional[VectorField] = None
    V: Optional[ScalarField] = None
    v0: float = 0.0
    mesh_exponent: float = 1.0  # a in |X| ~ rho^(2+a)
    window: Optional[Sequence] = None  # Euclidean box or model2d r_max
    track: str = "pointwise"  # or "mean"
    p: float = 2.0
    support: Optional[tuple] = None  # (center, radius) of supp f when compact
    partition_override: Optional[dict] = None
    threads: int = 1

    def __post_init__(self):
        d = self.manifold.dim
        if self.b is None:
            self.b = zero_field(d)
        if self.V is None:
            self.V = zero_scalar(d)
        if self.track not in ("pointwise", "mean"):
            raise ValueError(f"unknown track {self.track!r}")
        if self.t < 0:
            raise ValueError("t must be nonnegative")

    @property
    def n(self) -> int:
        return manifold_dimension(self.manifold)

    def partition(self, rho: float) -> Partition:
        M = self.manifold
        ov = self.partition_override or {}
        target = mesh_target(rho, self.mesh_exponent)
        if M.kind == "circle":
            K = int(ov.get("K", math.ceil(2 * math.pi / target)))
            if K > CELL_LIMIT:
                raise ValueError(f"mesh law needs K={K} arcs, above the {CELL_LIMIT} cell limit")
            return circle_partition(K, M)
        if M.kind == "euclidean":
            k = int(ov.get("k", math.ceil(math.sqrt(M.n) / target)))
            window = self.window if self.window is not None else M.box
            if window is None:
                raise ValueError("Euclidean runs need a window")
            snapped = [(math.floor(a * k + 1e-9) / k, math.ceil(b * k - 1e-9) / k) for a, b in window]
            cells = math.prod(round((b - a) * k) for a, b in snapped)
            if cells > CELL_LIMIT:
                raise ValueError(f"mesh law needs {cells} cells, above the {CELL_LIMIT} cell limit")
            return grid_partition(M.n, k, snapped, M)
        l = int(ov.get("l", math.ceil(2.0 / target)))
        r_max = float(self.window) if self.window is not None else M.r0
        r_max = math.floor(r_max * l + 1e-9) / l
        return model2d_partition(M, l, r_max)


@dataclass(eq=False)
class RunResult:
    function: GraphFunction
    partition: Partition
    graph: ProximityGraph
    operator: TransitionOperator
    scale: ScaleParams
    steps: int
    runtime_ms: float
    initial: GraphFunction

    @property
    def window_kill_mass(self) -> float:
        return self.operator.window_kill_mass()


def check_window(cfg: RunConfig, rho: float, P: Partition) -> Optional[str]:
    """Warn when the window misses the ``3(|b|t + sqrt t + 1)`` neighbourhood of ``supp f``."""
    if cfg.manifold.kind != "euclidean":
        return None
    if cfg.support is None:
        msg = "test function has no declared compact support; window adequacy unchecked"
        log.info(msg)
        return msg
    center, radius = cfg.support
    bmax = float(np.max(np.linalg.norm(cfg.b(P.ref), axis=1))) if not cfg.b.is_zero else 0.0
    reach = radius + 3 * (bmax * cfg.t + math.sqrt(cfg.t) + 1)
    c = np.atleast_1d(np.asarray(center, dtype=float))
    lo, hi = P.lo.min(axis=0), P.hi.max(axis=0)
    if np.any(c - reach < lo) or np.any(c + reach > hi):
        msg = f"window {list(zip(lo.tolist(), hi.tolist()))} does not contain the radius-{reach:.3g} neighbourhood of supp f"
        log.warning(msg)
        return msg
    return None


def prepare(cfg: RunConfig, rho: float, P: Optional[Partition] = None):
    """Partition, graph and operator for one ``rho`` (mesh must stay below ``rho/3``)."""
    sc = scale(rho, cfg.n)
    if P is None:
        P = cfg.partition(rho)
    if not P.mesh < rho / 3:
        raise ValueError(f"mesh {P.mesh:.4g} must be < rho/3 = {rho / 3:.4g} for the generator estimate")
    check_window(cfg, rho, P)
    G = build_graph(P, rho)
    L = build_operator(G, cfg.b, cfg.V, sc.delta, sc.delta, v0=cfg.v0, threads=cfg.threads)
    return sc, P, G, L


def iterate(L: TransitionOperator, F: np.ndarray, steps: int) -> np.ndarray:
    F = np.array(F, dtype=float)
    for _ in range(steps):
        F = L.apply_array(F)
    return F


def simulate(cfg: RunConfig, rho: float, P: Optional[Partition] = None) -> RunResult:
    t0 = time.perf_counter()
    sc, P, G, L = prepare(cfg, rho, P)
    F0 = discretize_pointwise(cfg.f, P) if cfg.track == "pointwise" else discretize_mean(cfg.f, P)
    steps = sc.steps(cfg.t)
    F = iterate(L, F0.values, steps)
    if cfg.v0 != 0.0:
        F = F * math.exp(cfg.v0 * sc.delta * steps)
    ms = (time.perf_counter() - t0) * 1e3
    return RunResult(GraphFunction(F, P), P, G, L, sc, steps, ms, F0)


def run_semigroup(cfg: RunConfig, rho: float) -> GraphFunction:
    """``L_delta^floor(t/delta)`` applied to ``[f]`` (or to the cell averages on the mean track)."""
    return simulate(cfg, rho).function


# ---------------------------------------------------------------------------
# generator residual


@dataclass
class ResidualResult:
    sup: float
    per_cell: np.ndarray  # NaN outside the evaluated region
    region: np.ndarray  # boolean mask of evaluated cells
    mesh: float
    rho: float


def generator_residual(cfg: RunConfig, rho: float, P: Optional[Partition] = None,
                       prepared=None) -> ResidualResult:
    """``(1/delta)(I - L_delta)[f] - [Af]`` on the cells near ``supp f``.

    Requires ``delta <= min(1, 1/max V)`` on the window. ``prepared`` reuses the output of
    :func:`prepare` for the same ``rho``.
    """
    sc, P, G, L = prepared if prepared is not None else prepare(cfg, rho, P)
    Vref = cfg.V(P.ref) + cfg.v0
    vmax = float(Vref.max(initial=0.0))
    if sc.delta > min(1.0, 1.0 / vmax if vmax > 0 else math.inf):
        raise ValueError(f"delta={sc.delta:.3g} exceeds min(1, 1/max V) = {min(1.0, 1.0 / vmax):.3g}")
    F = cfg.f(P.ref)
    gen = (F - L.apply_array(F)) / sc.delta
    Af = apply_A(P.manifold, cfg.b, cfg.V, cfg.f, P.ref)
    if cfg.v0:
        Af = Af + cfg.v0 * F
    region = L.status == 0
    if cfg.support is not None:
        center, radius = cfg.support
        c = as_points(center, P.dim)
        region &= np.asarray(distance(P.manifold, P.ref, np.repeat(c, len(P), axis=0))) < radius + 2
    res = np.full(len(P), np.nan)
    res[region] = gen[region] - Af[region]
    sup = float(np.max(np.abs(res[region]))) if region.any() else 0.0
    return ResidualResult(sup, res, region, P.mesh, rho)


# ---------------------------------------------------------------------------
# second moments of the uniform ball


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def ball_moment_exact(n: int, rho: float) -> np.ndarray:
    """``int_{B(rho)} u_j u_k du = delta_jk omega_n rho^(n+2) / (n+2)``."""
    return np.eye(n) * unit_ball_volume(n) * rho ** (n + 2) / (n + 2)


def ball_moment_mc(n: int, rho: float, samples: int = 200_000, seed: int = 0):
    """Monte Carlo estimate and standard errors of the ball second-moment matrix."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    g = rng.standard_normal((samples, n))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    u *= rho * rng.random(samples)[:, None] ** (1.0 / n)
    vol = unit_ball_volume(n) * rho**n
    prod = vol * u[:, :, None] * u[:, None, :]
    est = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(samples)
    return est, se


def ball_moment_quadrature(n: int, rho: float, nodes: int = 16) -> np.ndarray:
    """Radial Gauss-Legendre times the sphere average ``delta_jk / n`` of ``u_j u_k``."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    if n == 1:
        r = rho * (x + 1) / 2
        m = 2 * np.sum(w * rho / 2 * r * r)
        return np.array([[m]])
    r = rho * (x + 1) / 2
    wr = w * rho / 2
    radial = np.sum(wr * r ** (n + 1))  # int r^2 r^(n-1) dr
    # angular average of u_j u_k over the sphere is delta_jk / n
    area = n * unit_ball_volume(n)
    return np.eye(n) * radial * area / n
