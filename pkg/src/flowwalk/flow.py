"""Drift flows ``d phi/ds = b(phi)``: fixed-step RK4, explosion detection, condition audits."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fields import ScalarField, VectorField, as_points
from .geometry import CEMETERY, Manifold, divergence, is_cemetery

DELTA_DEFAULT = 1e-3
B_MAX = 1e8
CHUNK = 4096

OK, EXPLODED, WINDOW = 0, 1, 2

# fast relative growth triggers the blow-up tail estimate
_TAIL_TRIGGER = 0.05
_TAIL_MIN_POWER = 1.1


@dataclass(frozen=True)
class FlowResult:
    endpoint: object  # chart point or CEMETERY
    exploded: bool
    s_exit: Optional[float] = None
    cause: str = ""  # "explosion" | "window" | ""
    err: float = 0.0  # Richardson estimate |z_h - z_{h/2}| / 15


def step_size(s: float) -> float:
    return min(s, DELTA_DEFAULT) / 8


def rk4(M: Manifold, b: VectorField, X, s: float, n_steps: int, window: Optional[Callable] = None):
    """Integrate ``n_steps`` equal RK4 steps for every row of ``X``.

    Returns ``(Z, status, s_exit)`` with ``status`` 0 = alive, 1 = explosion or exit from
    the manifold, 2 = left the computational window. Dead rows keep their last state.
    """
    Z = np.array(as_points(X, M.dim), dtype=float)
    N = len(Z)
    status = np.zeros(N, dtype=np.int8)
    s_exit = np.full(N, np.nan)
    if s == 0 or n_steps == 0 or b.is_zero:
        return _check_domain(M, Z, status, s_exit, 0.0, window)
    h = s / n_steps
    euclid = M.kind == "euclidean"
    prev_nz = np.full(N, np.nan)
    prev_nb = np.full(N, np.nan)
    idx = np.arange(N)
    for k in range(n_steps):
        t = k * h
        if len(idx) == 0:
            break
        z = Z[idx]
        with np.errstate(all="ignore"):
            k1 = b(z)
            k2 = b(z + 0.5 * h * k1)
            k3 = b(z + 0.5 * h * k2)
            k4 = b(z + h * k3)
            znew = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            big = np.maximum(np.maximum(np.abs(k1), np.abs(k2)), np.maximum(np.abs(k3), np.abs(k4))).max(axis=1)
        bad = ~(big <= B_MAX) | ~np.isfinite(znew).all(axis=1)
        if euclid:
            nz = np.sqrt(np.einsum("ij,ij->i", z, z))
            nb = np.sqrt(np.einsum("ij,ij->i", k1, k1))
            tail = _tail_time(prev_nz[idx], prev_nb[idx], nz, nb, h)
            prev_nz[idx] = nz
            prev_nb[idx] = nb
            # near a blow-up the growth-law tail dates the exit far better than the |b| cap
            boom = bad | (t + tail <= s)
            if boom.any():
                status[idx[boom]] = EXPLODED
                s_exit[idx[boom]] = np.where(np.isfinite(tail[boom]), t + tail[boom], t)
                bad = boom
        elif bad.any():
            status[idx[bad]] = EXPLODED
            s_exit[idx[bad]] = t
        keep = idx[~bad]
        Z[keep] = znew[~bad]
        if M.kind != "euclidean":
            Z[keep] = M.canonical(Z[keep])
        if window is not None or M.box is not None or M.kind == "model2d":
            sub = np.zeros(len(keep), dtype=np.int8)
            sub_exit = np.full(len(keep), np.nan)
            _check_domain(M, Z[keep], sub, sub_exit, t + h, window)
            status[keep] = sub
            s_exit[keep] = sub_exit
            keep = keep[sub == 0]
        idx = keep
    return Z, status, s_exit


def _tail_time(nz0, nb0, nz1, nb1, h):
    """Remaining time to blow-up for ``|b| ~ |z|^p`` growth, ``inf`` when not applicable."""
    out = np.full(len(nz1), np.inf)
    fast = h * nb1 > _TAIL_TRIGGER * nz1
    if not fast.any():
        return out
    with np.errstate(all="ignore"):
        fast &= (nz1 > nz0 * (1 + 1e-6)) & (nb1 > nb0) & (nb0 > 0)
        p = np.log(nb1 / nb0) / np.log(nz1 / nz0)
        ok = fast & (p > _TAIL_MIN_POWER) & np.isfinite(p)
        out[ok] = nz1[ok] / ((p[ok] - 1.0) * nb1[ok])
    return out


def _check_domain(M, Z, status, s_exit, t, window):
    if len(Z) == 0:
        return Z, status, s_exit
    alive = status == 0
    out_m = alive & ~M.in_domain(Z)
    status[out_m] = EXPLODED
    s_exit[out_m] = t
    if window is not None:
        out_w = (status == 0) & ~np.asarray(window(Z), dtype=bool)
        status[out_w] = WINDOW
        s_exit[out_w] = t
    return Z, status, s_exit


def _n_steps(s: float) -> int:
    if s <= 0:
        return 0
    return int(math.ceil(s / step_size(s) - 1e-9))


def flow_many(M: Manifold, b: VectorField, X, s: float, window=None, threads: int = 1,
              richardson: bool = True):
    """Flow every row of ``X`` for time ``s``.

    Runs RK4 with ``h = min(s, 1e-3)/8`` and again with ``h/2``; the ``h/2`` result is
    returned together with the Richardson error estimate. Work is split into fixed
    chunks so the output does not depend on ``threads``.
    """
    X = np.array(as_points(X, M.dim), dtype=float)
    n = _n_steps(s)

    def work(sl):
        xs = X[sl]
        if richardson and n > 0:
            z1, st1, _ = rk4(M, b, xs, s, n, window)
            z2, st2, ex2 = rk4(M, b, xs, s, 2 * n, window)
            err = np.where((st1 == 0) & (st2 == 0), _chart_diff(M, z1, z2) / 15.0, 0.0)
        else:
            z2, st2, ex2 = rk4(M, b, xs, s, n, window)
            err = np.zeros(len(xs))
        return z2, st2, ex2, err

    chunks = [slice(i, min(i + CHUNK, len(X))) for i in range(0, len(X), CHUNK)] or [slice(0, 0)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    Z, status, s_exit, err = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return Z, status, s_exit, err


def _chart_diff(M, A, B):
    d = A - B
    if M.kind == "circle":
        d = np.mod(d + math.pi, 2 * math.pi) - math.pi
    elif M.kind == "model2d":
        d[:, 1] = np.mod(d[:, 1] + math.pi, 2 * math.pi) - math.pi
    return np.linalg.norm(d, axis=1)


def flow(M: Manifold, b: VectorField, x, s: float, window=None) -> FlowResult:
    """``phi_s(x)``; the cemetery when the flow explodes or leaves ``window`` before ``s``."""
    if is_cemetery(x):
        raise ValueError("cannot flow the cemetery point")
    if s < 0:
        raise ValueError("flow duration must be nonnegative")
    Z, st, ex, err = flow_many(M, b, x, s, window)
    if st[0] == OK:
        return FlowResult(Z[0].copy(), False, None, "", float(err[0]))
    cause = "explosion" if st[0] == EXPLODED else "window"
    return FlowResult(CEMETERY, True, float(ex[0]), cause)


def explosion_time(M: Manifold, b: VectorField, x, horizon: float, window=None) -> float:
    """Bisection estimate of the first exit time, ``inf`` meaning ``>= horizon``.

    The bracket shrinks to ``1e-6 * horizon``; every probe restarts from the latest
    surviving checkpoint, so the total work is a small multiple of one flow.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not flow(M, b, x, horizon, window).exploded:
        return math.inf
    lo, hi = 0.0, float(horizon)
    z = np.array(as_points(x, M.dim)[0])
    tol = 1e-6 * horizon
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r = flow(M, b, z, mid - lo, window)
        if not r.exploded:
            lo, z = mid, np.asarray(r.endpoint)
        elif lo + r.s_exit <= mid:
            hi = mid
        else:
            # the |b| cap fired before the extrapolated exit; that estimate is the answer
            return lo + r.s_exit
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# sufficient-condition audit

KAPPA_PROFILES = {
    # name: (kappa, threshold R, integral of the profile extended by kappa(R) on [0, R])
    "1": (lambda r: np.ones_like(r), 0.0, lambda r: r),
    "1/r": (lambda r: 1.0 / r, 1.0, lambda r: 1.0 + np.log(r)),
    "1/(r log r)": (lambda r: 1.0 / (r * np.log(r)), math.e, lambda r: 1.0 + np.log(np.log(r))),
}


@dataclass
class AuditReport:
    """Sampled margins of the divergence and radial drift inequalities (evidence, not proof)."""

    p: float
    kappa: str
    samples: int
    skipped: int
    lambda_hat: float
    C_hat: float
    C_A_hat: float
    worst_points: dict = field(default_factory=dict)
    note: str = "sampled numerical evidence only; no inequality is proven"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("p", "kappa", "samples", "skipped", "lambda_hat", "C_hat", "C_A_hat", "worst_points", "note")}


def audit_grid(M: Manifold, samples: int, window=None) -> np.ndarray:
    """Tensor sample grid (endpoints included) with about ``samples`` points."""
    if M.kind == "circle":
        return np.linspace(0, 2 * math.pi, samples, endpoint=False)[:, None]
    if M.kind == "model2d":
        r_max = window if window is not None else (M.r0 if math.isfinite(M.r0) else 5.0)
        m = max(2, int(math.ceil(math.sqrt(samples))))
        R, T = np.meshgrid(np.linspace(r_max / m, r_max, m), np.linspace(0, 2 * math.pi, m, endpoint=False),
                           indexing="ij")
        return np.stack([R.ravel(), T.ravel()], axis=1)
    n = M.n
    if window is None:
        window = M.box if M.box is not None else [(-3.0, 3.0)] * n
    m = max(2, int(math.ceil(samples ** (1.0 / n))))
    axes = [np.linspace(a, b, m) for a, b in window]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def audit_conditions(M: Manifold, b: VectorField, V: ScalarField, p: float = 2.0, kappa: str = "1",
                     samples: int = 1001, window=None) -> AuditReport:
    """Empirical constants for the divergence / radial drift sufficient conditions.

    ``lambda_hat = max(0, -min(div b / p + V))``,
    ``C_hat = max(0, -min kappa(r) b.grad r)`` and
    ``C_A_hat = max(0, -min kappa(r)(Lap r + b.grad r) / int_0^r kappa)``.
    Samples with ``r`` at or below the profile threshold are skipped and counted.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if kappa not in KAPPA_PROFILES:
        raise ValueError(f"unknown kappa profile {kappa!r}; use one of {sorted(KAPPA_PROFILES)}")
    X = audit_grid(M, samples, window)
    term = divergence(M, b, X) / p + V(X)
    i = int(np.argmin(term))
    lam = max(0.0, -float(term[i]))
    worst = {"divergence": X[i].tolist()}
    if M.kind == "circle":
        return AuditReport(p, kappa, len(X), 0, lam, 0.0, 0.0, worst, AuditReport.note + " (compact: radial terms vacuous)")
    B = b(X)
    if M.kind == "euclidean":
        r = np.linalg.norm(X, axis=1)
        with np.errstate(all="ignore"):
            br = np.sum(B * X, axis=1) / r
            lap_r = (M.n - 1) / r
    else:
        r = X[:, 0]
        br = B[:, 0]
        lap_r = M.psi.dpsi(r) / M.psi.psi(r)
    kfun, thr, kint = KAPPA_PROFILES[kappa]
    use = r > thr
    skipped = int(np.sum(~use))
    if not use.any():
        return AuditReport(p, kappa, len(X), skipped, lam, 0.0, 0.0, worst)
    ru = r[use]
    k = kfun(ru)
    radial = k * br[use]
    integ = k * (lap_r[use] + br[use]) / kint(ru)
    j, j2 = int(np.argmin(radial)), int(np.argmin(integ))
    worst["radial"] = X[use][j].tolist()
    worst["integrated"] = X[use][j2].tolist()
    return AuditReport(p, kappa, len(X), skipped, lam, max(0.0, -float(radial[j])), max(0.0, -float(integ[j2])), worst)
