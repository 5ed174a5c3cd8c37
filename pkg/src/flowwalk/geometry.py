"""Supported manifolds: Euclidean boxes / R^n, the circle, rotationally symmetric surfaces.

Points are chart coordinates; the cemetery point is the singleton ``CEMETERY``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fields import ScalarField, VectorField, as_points, scalar_from_config

TWO_PI = 2.0 * math.pi


class _Cemetery:
    """The absorbing point added to the manifold."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "CEMETERY"

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()


def is_cemetery(x) -> bool:
    return x is CEMETERY


# ---------------------------------------------------------------------------
# weight functions of model surfaces


@dataclass(frozen=True)
class WeightFn:
    """Closed-form warping function ``psi`` with analytic first and second derivatives.

    ``form`` is one of ``r``, ``sin``, ``sinh``, ``polynomial`` (``C1 r^alpha``) or
    ``exponential`` (``C1 exp(alpha r^beta)``).
    """

    form: str
    C1: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.form not in ("r", "sin", "sinh", "polynomial", "exponential"):
            raise ValueError(f"unknown psi form {self.form!r}")

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "r":
            return r.copy()
        if self.form == "sin":
            return np.sin(r)
        if self.form == "sinh":
            return np.sinh(r)
        if self.form == "polynomial":
            return self.C1 * r**self.alpha
        return self.C1 * np.exp(self.alpha * r**self.beta)

    def dpsi(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "r":
            return np.ones_like(r)
        if self.form == "sin":
            return np.cos(r)
        if self.form == "sinh":
            return np.cosh(r)
        if self.form == "polynomial":
            return self.C1 * self.alpha * r ** (self.alpha - 1)
        a, b = self.alpha, self.beta
        return self.psi(r) * a * b * r ** (b - 1)

    def ddpsi(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "r":
            return np.zeros_like(r)
        if self.form == "sin":
            return -np.sin(r)
        if self.form == "sinh":
            return np.sinh(r)
        if self.form == "polynomial":
            a = self.alpha
            return self.C1 * a * (a - 1) * r ** (a - 2)
        a, b = self.alpha, self.beta
        g = a * b * r ** (b - 1)
        return self.psi(r) * (g * g + a * b * (b - 1) * r ** (b - 2))

    def max_on(self, lo, hi):
        """Exact ``max psi`` over ``[lo, hi]`` (all supported forms are monotone or unimodal)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        m = np.maximum(self.psi(lo), self.psi(hi))
        if self.form == "sin":
            peak = (lo <= math.pi / 2) & (hi >= math.pi / 2)
            m = np.where(peak, 1.0, m)
        return m

    def to_config(self) -> dict:
        out = {"form": self.form}
        if self.form in ("polynomial", "exponential"):
            out.update(C1=self.C1, alpha=self.alpha)
        if self.form == "exponential":
            out["beta"] = self.beta
        return out

    @classmethod
    def from_config(cls, spec: dict) -> "WeightFn":
        return cls(spec["form"], float(spec.get("C1", 1.0)), float(spec.get("alpha", 1.0)),
                   float(spec.get("beta", 1.0)))


def ricci_lower_bound(psi: WeightFn, r):
    """Two-dimensional model surface: ``Ric >= -psi''/psi``."""
    return -psi.ddpsi(r) / psi.psi(r)


# ---------------------------------------------------------------------------
# manifolds


@dataclass(frozen=True, eq=False)
class Manifold:
    kind: str  # "euclidean" | "circle" | "model2d"
    n: int
    box: Optional[tuple] = None  # Euclidean domain, None = all of R^n
    psi: Optional[WeightFn] = None
    r0: float = math.inf
    weight: Optional[ScalarField] = None

    @classmethod
    def euclidean(cls, n: int, box: Optional[Sequence] = None, weight: Optional[ScalarField] = None):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if box is not None:
            box = tuple((float(a), float(b)) for a, b in box)
            if len(box) != n or any(a >= b for a, b in box):
                raise ValueError(f"invalid box {box} for n={n}")
        return cls("euclidean", n, box=box, weight=weight)

    @classmethod
    def circle(cls, weight: Optional[ScalarField] = None):
        return cls("circle", 1, weight=weight)

    @classmethod
    def model2d(cls, psi: WeightFn, r0: float = math.inf, check_pole: bool = True):
        if not r0 > 0:
            raise ValueError("r0 must be positive")
        if check_pole:
            eps = 1e-6
            if not (abs(float(psi.psi(eps))) < 1e-3 and abs(float(psi.dpsi(eps)) - 1.0) < 1e-3):
                raise ValueError(f"psi={psi.form} is singular at the pole (need psi->0, psi'->1)")
            rs = np.linspace(0, min(r0, 50.0), 2001)[1:-1]
            if np.any(psi.psi(rs) <= 0):
                raise ValueError("psi must be positive on (0, r0)")
        return cls("model2d", 2, psi=psi, r0=float(r0))

    @property
    def dim(self) -> int:
        """Number of chart coordinates."""
        return {"euclidean": self.n, "circle": 1, "model2d": 2}[self.kind]

    @property
    def pole_at_r0(self) -> bool:
        """Model surface closing up at ``r0`` (second pole, e.g. the sphere)."""
        return self.kind == "model2d" and math.isfinite(self.r0) and abs(float(self.psi.psi(self.r0))) < 1e-9

    def canonical(self, X):
        """Canonical chart representatives (angles in [0, 2pi), r >= 0)."""
        X = np.array(as_points(X, self.dim), dtype=float)
        if self.kind == "circle":
            X[:, 0] = np.mod(X[:, 0], TWO_PI)
        elif self.kind == "model2d":
            neg = X[:, 0] < 0
            X[neg, 0] = -X[neg, 0]
            X[neg, 1] += math.pi
            if self.pole_at_r0:
                over = X[:, 0] > self.r0
                X[over, 0] = 2 * self.r0 - X[over, 0]
                X[over, 1] += math.pi
            X[:, 1] = np.mod(X[:, 1], TWO_PI)
        return X

    def in_domain(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        if self.kind == "euclidean" and self.box is not None:
            lo = np.array([a for a, _ in self.box])
            hi = np.array([b for _, b in self.box])
            return np.all((X >= lo) & (X < hi), axis=1)
        if self.kind == "model2d":
            return (X[:, 0] >= 0) & (X[:, 0] < self.r0)
        return np.ones(len(X), dtype=bool)

    def to_config(self) -> dict:
        if self.kind == "euclidean":
            out = {"kind": "euclidean", "n": self.n}
            if self.box is not None:
                out["box"] = [list(b) for b in self.box]
        elif self.kind == "circle":
            out = {"kind": "circle"}
        else:
            out = {"kind": "model2d", "psi": self.psi.to_config(),
                   "r0": self.r0 if math.isfinite(self.r0) else "inf"}
        if self.weight is not None:
            out["weight"] = self.weight.spec
        return out

    @classmethod
    def from_config(cls, spec: dict) -> "Manifold":
        kind = spec["kind"]
        if kind == "euclidean":
            n = int(spec["n"])
            w = scalar_from_config(spec["weight"], n) if spec.get("weight") else None
            return cls.euclidean(n, spec.get("box"), weight=w)
        if kind == "circle":
            w = scalar_from_config(spec["weight"], 1) if spec.get("weight") else None
            return cls.circle(weight=w)
        if kind == "model2d":
            if spec.get("weight"):
                raise ValueError("weighted measures are supported on euclidean and circle only")
            r0 = spec.get("r0", math.inf)
            r0 = math.inf if r0 in ("inf", None) else float(r0)
            return cls.model2d(WeightFn.from_config(spec["psi"]), r0, check_pole=spec.get("check_pole", True))
        raise ValueError(f"unknown manifold kind {kind!r}")


# ---------------------------------------------------------------------------
# cell shapes (chart rectangles, half-open on the upper face)


@dataclass(frozen=True)
class HalfOpenBox:
    lo: tuple
    hi: tuple

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all((x >= np.asarray(self.lo)) & (x < np.asarray(self.hi))))


@dataclass(frozen=True)
class Arc:
    a: float
    b: float

    def contains(self, x) -> bool:
        t = float(np.mod(np.asarray(x, dtype=float).ravel()[0], TWO_PI))
        return self.a <= t < self.b


@dataclass(frozen=True)
class PolarRect:
    r_lo: float
    r_hi: float
    a: float
    b: float

    def contains(self, x) -> bool:
        r, t = np.asarray(x, dtype=float).ravel()[:2]
        t = float(np.mod(t, TWO_PI))
        return self.r_lo <= r < self.r_hi and self.a <= t < self.b


CellShape = (HalfOpenBox, Arc, PolarRect)


# ---------------------------------------------------------------------------
# distances


def _ang(d):
    d = np.mod(np.abs(d), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def distance(M: Manifold, x, y):
    """Geodesic distance; ``inf`` whenever either argument is the cemetery.

    Model surfaces use the closed forms of the plane, sphere and hyperbolic plane;
    other ``psi`` fall back to :func:`surrogate_distance` (not a metric in general).
    """
    if is_cemetery(x) or is_cemetery(y):
        return math.inf
    X = as_points(x, M.dim)
    Y = as_points(y, M.dim)
    if M.kind == "euclidean":
        d = np.linalg.norm(X - Y, axis=1)
    elif M.kind == "circle":
        d = _ang(X[:, 0] - Y[:, 0])
    else:
        r1, t1, r2, t2 = X[:, 0], X[:, 1], Y[:, 0], Y[:, 1]
        s2 = np.sin(_ang(t1 - t2) / 2) ** 2
        f = M.psi.form
        if f == "r":
            d = np.sqrt((r1 - r2) ** 2 + 4 * r1 * r2 * s2)
        elif f == "sin":
            d = 2 * np.arcsin(np.sqrt(np.clip(np.sin((r1 - r2) / 2) ** 2 + np.sin(r1) * np.sin(r2) * s2, 0, 1)))
        elif f == "sinh":
            d = 2 * np.arcsinh(np.sqrt(np.sinh((r1 - r2) / 2) ** 2 + np.sinh(r1) * np.sinh(r2) * s2))
        else:
            return surrogate_distance(M, x, y)
    return float(d[0]) if len(d) == 1 else d


def surrogate_distance(M: Manifold, x, y):
    """Cheap chart distance used for proximity on model surfaces.

    ``|r1 - r2| + angle(theta1, theta2) * max psi on [min r, max r]``; equals the
    geodesic distance on the Euclidean and circle geometries.
    """
    if is_cemetery(x) or is_cemetery(y):
        return math.inf
    if M.kind != "model2d":
        return distance(M, x, y)
    X = as_points(x, 2)
    Y = as_points(y, 2)
    lo = np.minimum(X[:, 0], Y[:, 0])
    hi = np.maximum(X[:, 0], Y[:, 0])
    d = (hi - lo) + _ang(X[:, 1] - Y[:, 1]) * M.psi.max_on(lo, hi)
    return float(d[0]) if len(d) == 1 else d


# ---------------------------------------------------------------------------
# volumes

_GL16 = np.polynomial.legendre.leggauss(16)


def _gl_composite_1d(func, lo, hi, panels):
    """Composite 16-node Gauss-Legendre of a vectorised integrand over many intervals."""
    x, w = _GL16
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    total = np.zeros(np.broadcast(lo, hi).shape)
    width = (hi - lo) / panels
    for p in range(panels):
        a = lo + p * width
        mid = a + width / 2
        pts = mid[..., None] + (width / 2)[..., None] * x
        total = total + (width / 2) * np.sum(func(pts) * w, axis=-1)
    return total


def integrate_1d(func, lo, hi, rtol=1e-9, max_panels=64):
    """Gauss-Legendre with 16 nodes, panels doubled until successive values agree."""
    prev = _gl_composite_1d(func, lo, hi, 1)
    panels = 2
    while panels <= max_panels:
        cur = _gl_composite_1d(func, lo, hi, panels)
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(np.abs(cur), 1e-300)):
            return cur
        prev = cur
        panels *= 2
    raise ArithmeticError("quadrature did not converge")


def _tensor_gl(func, lo, hi, panels):
    """Tensor 16-node Gauss-Legendre per panel over boxes ``lo``/``hi`` of shape (N, d)."""
    x, w = _GL16
    N, d = lo.shape
    q = len(x)
    # per-axis nodes (N, d, panels*q) and weights
    edges = lo[:, :, None] + (hi - lo)[:, :, None] * (np.arange(panels) / panels)
    width = ((hi - lo) / panels)[:, :, None, None]
    nodes = (edges[:, :, :, None] + width / 2 * (x + 1)).reshape(N, d, panels * q)
    wts = np.broadcast_to(width / 2 * w, (N, d, panels, q)).reshape(N, d, panels * q)
    grids = np.meshgrid(*[np.arange(panels * q)] * d, indexing="ij")
    idx = [g.ravel() for g in grids]
    pts = np.stack([nodes[:, i, idx[i]] for i in range(d)], axis=-1)  # (N, Q, d)
    wt = np.prod(np.stack([wts[:, i, idx[i]] for i in range(d)], axis=-1), axis=-1)
    vals = func(pts.reshape(-1, d)).reshape(N, -1)
    return np.sum(vals * wt, axis=1)


def box_integral(func, lo, hi, rtol=1e-9, max_panels=8):
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    prev = _tensor_gl(func, lo, hi, 1)
    panels = 2
    while panels <= max_panels:
        cur = _tensor_gl(func, lo, hi, panels)
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(np.abs(cur), 1e-300)):
            return cur
        prev = cur
        panels *= 2
    raise ArithmeticError("quadrature did not converge")


def _weight_density(M: Manifold):
    if M.weight is None:
        return None
    U = M.weight
    return lambda P: np.exp(-U.func(P))


def cell_volumes(M: Manifold, kind: str, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Volumes of many chart rectangles at once (``kind`` is box / arc / polar)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dens = _weight_density(M)
    if kind == "polar":
        if dens is not None:
            raise ValueError("weighted measures are not supported on model surfaces")
        radial = integrate_1d(M.psi.psi, lo[:, 0], hi[:, 0])
        return radial * (hi[:, 1] - lo[:, 1])
    if dens is None:
        return np.prod(hi - lo, axis=1)
    return box_integral(dens, lo, hi)


def _shape_bounds(M: Manifold, region):
    if isinstance(region, HalfOpenBox):
        if M.kind != "euclidean":
            raise ValueError("boxes live on Euclidean manifolds")
        lo, hi = np.asarray(region.lo, dtype=float), np.asarray(region.hi, dtype=float)
        if len(lo) != M.n or np.any(hi <= lo):
            raise ValueError(f"bad box {region}")
        if M.box is not None:
            blo = np.array([a for a, _ in M.box])
            bhi = np.array([b for _, b in M.box])
            if np.any(lo < blo) or np.any(hi > bhi):
                raise ValueError(f"{region} lies outside the domain")
        return "box", lo, hi
    if isinstance(region, Arc):
        if M.kind != "circle":
            raise ValueError("arcs live on the circle")
        if not (0 <= region.a < region.b <= TWO_PI + 1e-12):
            raise ValueError(f"{region} is not inside [0, 2pi)")
        return "box", np.array([region.a]), np.array([region.b])
    if isinstance(region, PolarRect):
        if M.kind != "model2d":
            raise ValueError("polar rectangles live on model surfaces")
        if not (0 <= region.r_lo < region.r_hi <= M.r0) or not (0 <= region.a < region.b <= TWO_PI + 1e-12):
            raise ValueError(f"{region} lies outside the chart domain")
        return "polar", np.array([region.r_lo, region.a]), np.array([region.r_hi, region.b])
    raise TypeError(f"unsupported region {region!r}")


def volume_integral(M: Manifold, region) -> float:
    """Riemannian (or weighted ``e^{-U}``) volume of a chart rectangle."""
    kind, lo, hi = _shape_bounds(M, region)
    return float(cell_volumes(M, kind, lo[None], hi[None])[0])


# ---------------------------------------------------------------------------
# the drifted Schroedinger operator


def laplacian(M: Manifold, f: ScalarField, X, analytic: bool = True) -> np.ndarray:
    """Chart Laplacian (weighted when ``M.weight`` is set)."""
    X = as_points(X, M.dim)
    H = f.hess_diag(X, analytic)
    if M.kind == "model2d":
        r = X[:, 0]
        g = f.grad(X, analytic)
        p = M.psi.psi(r)
        out = H[:, 0] + M.psi.dpsi(r) / p * g[:, 0] + H[:, 1] / p**2
    else:
        out = H.sum(axis=1)
    if M.weight is not None:
        out = out - np.sum(M.weight.grad(X) * f.grad(X, analytic), axis=1)
    return out


def apply_A(M: Manifold, b: VectorField, V: ScalarField, f: ScalarField, x, analytic: bool = True):
    """``-Laplacian f - b.grad f + V f`` evaluated at chart point(s) ``x``.

    Uses the closed-form derivatives of ``f`` when available, otherwise 5-point central
    differences (``analytic=False`` forces the difference path).
    """
    if is_cemetery(x):
        raise ValueError("the operator is not defined at the cemetery point")
    scalar = np.ndim(x) == 0 or (np.ndim(x) == 1 and M.dim > 1 and len(x) == M.dim)
    X = as_points(x, M.dim)
    bf = np.sum(b(X) * f.grad(X, analytic), axis=1)
    out = -laplacian(M, f, X, analytic) - bf + V(X) * f(X)
    return float(out[0]) if scalar else out


def divergence(M: Manifold, b: VectorField, X) -> np.ndarray:
    """Riemannian divergence of ``b`` in chart components."""
    X = as_points(X, M.dim)
    div = b.chart_divergence(X)
    if M.kind == "model2d":
        r = X[:, 0]
        div = div + M.psi.dpsi(r) / M.psi.psi(r) * b(X)[:, 0]
    return div
