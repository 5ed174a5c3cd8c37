"""Closed-form vector fields, potentials and test functions.

Every field acts on chart coordinates stored as ``(N, d)`` float arrays:
Euclidean ``x``, circle ``theta`` (d = 1), model surface ``(r, theta)``.
Each object keeps the JSON descriptor it was built from in ``.spec`` so
configs can be echoed back verbatim.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np
import numpy.polynomial.polynomial as npoly

Array = np.ndarray


def as_points(x, dim: int) -> Array:
    """Coerce scalars / 1-D arrays / lists to an ``(N, dim)`` float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, dim) if dim > 1 else arr.reshape(-1, 1)
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points with {dim} coordinates, got shape {arr.shape}")
    return arr


def _fd_step(X: Array) -> Array:
    return 1e-4 * np.maximum(1.0, np.linalg.norm(X, axis=1))


def fd_gradient(func: Callable[[Array], Array], X: Array) -> Array:
    """5-point central first derivatives along each chart axis."""
    h = _fd_step(X)
    out = np.empty_like(X)
    for i in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[i] = 1.0
        hp = h[:, None] * e
        out[:, i] = (-func(X + 2 * hp) + 8 * func(X + hp) - 8 * func(X - hp) + func(X - 2 * hp)) / (12 * h)
    return out


def fd_hess_diag(func: Callable[[Array], Array], X: Array) -> Array:
    """5-point central second derivatives along each chart axis."""
    h = _fd_step(X)
    f0 = func(X)
    out = np.empty_like(X)
    for i in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[i] = 1.0
        hp = h[:, None] * e
        out[:, i] = (
            -func(X + 2 * hp) + 16 * func(X + hp) - 30 * f0 + 16 * func(X - hp) - func(X - 2 * hp)
        ) / (12 * h * h)
    return out


class _Poly:
    """Power-series polynomial without the domain mapping overhead of ``np.polynomial``."""

    def __init__(self, coef):
        self.coef = np.atleast_1d(np.asarray(coef, dtype=float))
        self._rev = [float(c) for c in self.coef[::-1]]

    def __call__(self, x):
        # Horner
        y = self._rev[0] + 0.0 * x
        for c in self._rev[1:]:
            y = y * x + c
        return y

    def deriv(self, m: int = 1) -> "_Poly":
        return _Poly(npoly.polyder(self.coef, m))


def _smoothstep(u: Array) -> Array:
    # C-infinity transition: 0 for u <= 0, 1 for u >= 1
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


# ---------------------------------------------------------------------------
# scalar functions (potentials, weights, test functions)


class ScalarField:
    """Scalar function on the chart with optional analytic gradient / Hessian diagonal."""

    def __init__(self, func, dim, grad=None, hess_diag=None, spec=None, is_zero=False):
        self.func = func
        self.dim = dim
        self._grad = grad
        self._hess = hess_diag
        self.spec = spec or {"form": "custom"}
        self.is_zero = is_zero

    @property
    def analytic(self) -> bool:
        return self._grad is not None and self._hess is not None

    def __call__(self, X) -> Array:
        return self.func(as_points(X, self.dim))

    def grad(self, X, analytic: bool = True) -> Array:
        X = as_points(X, self.dim)
        if analytic and self._grad is not None:
            return self._grad(X)
        return fd_gradient(self.func, X)

    def hess_diag(self, X, analytic: bool = True) -> Array:
        X = as_points(X, self.dim)
        if analytic and self._hess is not None:
            return self._hess(X)
        return fd_hess_diag(self.func, X)

    def __repr__(self):
        return f"ScalarField({self.spec})"


# test functions share the scalar machinery
TestFn = ScalarField


def zero_scalar(dim: int) -> ScalarField:
    z = lambda X: np.zeros(len(X))
    return ScalarField(z, dim, lambda X: np.zeros_like(X), lambda X: np.zeros_like(X),
                       spec={"form": "zero"}, is_zero=True)


def constant_scalar(dim: int, value: float) -> ScalarField:
    if value == 0.0:
        return zero_scalar(dim)
    return ScalarField(lambda X: np.full(len(X), float(value)), dim,
                       lambda X: np.zeros_like(X), lambda X: np.zeros_like(X),
                       spec={"form": "constant", "value": value})


def poly1d_scalar(coeffs) -> ScalarField:
    """``sum_k coeffs[k] * x**k`` of the first coordinate."""
    c = np.asarray(coeffs, dtype=float)
    p = _Poly(c)
    dp, ddp = p.deriv(1), p.deriv(2)
    return ScalarField(lambda X: p(X[:, 0]), 1, lambda X: dp(X[:, :1]), lambda X: ddp(X[:, :1]),
                       spec={"form": "poly1d", "coeffs": c.tolist()},
                       is_zero=not np.any(c))


def radial_power_scalar(dim: int, c: float, power: float) -> ScalarField:
    """``c * |x|**power``; derivatives analytic away from the origin."""
    def f(X):
        return c * np.linalg.norm(X, axis=1) ** power

    def g(X):
        r = np.linalg.norm(X, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0, c * power * r ** (power - 2), 0.0)
        return fac[:, None] * X

    def h(X):
        r = np.linalg.norm(X, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(r > 0, c * power * r ** (power - 2), 0.0)
            b = np.where(r > 0, c * power * (power - 2) * r ** (power - 4), 0.0)
        return a[:, None] + b[:, None] * X * X

    if power == 2:
        # smooth at the origin
        g = lambda X: 2 * c * X
        h = lambda X: np.full_like(X, 2 * c)
    return ScalarField(f, dim, g, h, spec={"form": "radial_power", "c": c, "power": power})


def fourier_scalar(terms) -> ScalarField:
    """Finite sum ``sum a_m cos(m t) + b_m sin(m t)`` on the circle; terms = [[m, a, b], ...]."""
    terms = [(int(m), float(a), float(b)) for m, a, b in terms]

    def f(X):
        t = X[:, 0]
        return sum(a * np.cos(m * t) + b * np.sin(m * t) for m, a, b in terms) + 0.0 * t

    def g(X):
        t = X[:, 0]
        v = sum(m * (-a * np.sin(m * t) + b * np.cos(m * t)) for m, a, b in terms) + 0.0 * t
        return v[:, None]

    def h(X):
        t = X[:, 0]
        v = sum(-m * m * (a * np.cos(m * t) + b * np.sin(m * t)) for m, a, b in terms) + 0.0 * t
        return v[:, None]

    zero = all(a == 0 and b == 0 for _, a, b in terms)
    return ScalarField(f, 1, g, h, spec={"form": "fourier", "terms": [list(t) for t in terms]}, is_zero=zero)


def cosine_scalar(a: float, b: float, m: int = 1) -> ScalarField:
    """``a + b cos(m theta)`` on the circle."""
    out = fourier_scalar([[0, a, 0.0], [m, b, 0.0]])
    out.spec = {"form": "cosine", "a": a, "b": b, "m": m}
    return out


def gaussian_scalar(dim: int, a: float = 1.0, center=None) -> ScalarField:
    """``exp(-a |x - center|^2)``."""
    x0 = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def f(X):
        return np.exp(-a * np.sum((X - x0) ** 2, axis=1))

    def g(X):
        return (-2 * a * (X - x0)) * f(X)[:, None]

    def h(X):
        d = X - x0
        return (4 * a * a * d * d - 2 * a) * f(X)[:, None]

    return ScalarField(f, dim, g, h, spec={"form": "gaussian", "a": a, "center": x0.tolist()})


def smooth_clip_scalar(L: float = 5.0, width: float = 2.0) -> ScalarField:
    """``y`` on ``[-L, L]``, smoothly cut to 0 beyond ``L + width`` (1-D).

    Derivatives come from finite differences.
    """
    def f(X):
        y = X[:, 0]
        return y * (1.0 - _smoothstep((np.abs(y) - L) / width))

    return ScalarField(f, 1, spec={"form": "smooth_clip", "L": L, "width": width})


def bump_scalar(dim: int, radius: float = 1.0, center=None) -> ScalarField:
    """Compactly supported ``exp(1 - 1/(1 - |x-c|^2/R^2))``; finite-difference derivatives."""
    x0 = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def f(X):
        q = np.sum((X - x0) ** 2, axis=1) / radius**2
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(q < 1, np.exp(1.0 - 1.0 / np.where(q < 1, 1.0 - q, 1.0)), 0.0)

    return ScalarField(f, dim, spec={"form": "bump", "radius": radius, "center": x0.tolist()})


def cos_r_scalar() -> ScalarField:
    """``cos r`` on a model surface (zonal first eigenfunction of the round sphere)."""
    def g(X):
        out = np.zeros_like(X)
        out[:, 0] = -np.sin(X[:, 0])
        return out

    def h(X):
        out = np.zeros_like(X)
        out[:, 0] = -np.cos(X[:, 0])
        return out

    return ScalarField(lambda X: np.cos(X[:, 0]), 2, g, h, spec={"form": "cos_r"})


# ---------------------------------------------------------------------------
# vector fields


class VectorField:
    """Drift ``b`` in chart components, optional analytic Jacobian."""

    def __init__(self, func, dim, jacobian=None, spec=None, is_zero=False):
        self.func = func
        self.dim = dim
        self._jac = jacobian
        self.spec = spec or {"form": "custom"}
        self.is_zero = is_zero

    def __call__(self, X) -> Array:
        return self.func(as_points(X, self.dim))

    def jacobian(self, X) -> Array:
        """``J[n, i, j] = d b^i / d x_j``."""
        X = as_points(X, self.dim)
        if self._jac is not None:
            return self._jac(X)
        J = np.empty((len(X), self.dim, self.dim))
        for i in range(self.dim):
            comp = lambda Y, i=i: self.func(Y)[:, i]
            J[:, i, :] = fd_gradient(comp, X)
        return J

    def chart_divergence(self, X) -> Array:
        return np.trace(self.jacobian(X), axis1=1, axis2=2)

    def __repr__(self):
        return f"VectorField({self.spec})"


def zero_field(dim: int) -> VectorField:
    return VectorField(lambda X: np.zeros_like(X), dim, lambda X: np.zeros((len(X), dim, dim)),
                       spec={"form": "zero"}, is_zero=True)


def constant_field(vec) -> VectorField:
    v = np.atleast_1d(np.asarray(vec, dtype=float))
    d = len(v)
    if not np.any(v):
        return zero_field(d)
    return VectorField(lambda X: np.broadcast_to(v, X.shape).copy(), d,
                       lambda X: np.zeros((len(X), d, d)), spec={"form": "constant", "value": v.tolist()})


def poly1d_field(coeffs) -> VectorField:
    """1-D drift ``b(x) = sum_k coeffs[k] x**k`` (``[0, -1]`` is ``b(x) = -x``)."""
    c = np.asarray(coeffs, dtype=float)
    if not np.any(c):
        return zero_field(1)
    p = _Poly(c)
    dp = p.deriv()
    return VectorField(lambda X: p(X), 1, lambda X: dp(X)[:, :, None],
                       spec={"form": "poly1d", "coeffs": c.tolist()})


def linear_field(A, c=None) -> VectorField:
    """``b(x) = A x + c``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    c = np.zeros(d) if c is None else np.asarray(c, dtype=float)
    return VectorField(lambda X: X @ A.T + c, d, lambda X: np.broadcast_to(A, (len(X), d, d)).copy(),
                       spec={"form": "linear", "A": A.tolist(), "c": c.tolist()})


def axis_odd_field(c0, odd) -> VectorField:
    """Per-axis odd polynomials ``b^i = c0_i + sum_j odd[i][j] x_i^(2j+1)`` with constant coefficients."""
    c0 = np.asarray(c0, dtype=float)
    d = len(c0)
    odd = [np.asarray(o, dtype=float) for o in odd]

    def f(X):
        out = np.tile(c0, (len(X), 1))
        for i, co in enumerate(odd):
            for j, cj in enumerate(co):
                out[:, i] += cj * X[:, i] ** (2 * j + 1)
        return out

    def jac(X):
        J = np.zeros((len(X), d, d))
        for i, co in enumerate(odd):
            for j, cj in enumerate(co):
                J[:, i, i] += cj * (2 * j + 1) * X[:, i] ** (2 * j)
        return J

    return VectorField(f, d, jac, spec={"form": "axis_odd", "c0": c0.tolist(), "odd": [o.tolist() for o in odd]})


def radial_power_field(dim: int, c: float, power: float) -> VectorField:
    """``b(x) = c |x|^(power-1) x``; in 1-D ``c=-1, power=3`` is ``-x^3``."""
    def f(X):
        r = np.linalg.norm(X, axis=1)
        return (c * r ** (power - 1))[:, None] * X

    def jac(X):
        r = np.linalg.norm(X, axis=1)
        eye = np.eye(dim)[None]
        a = c * r ** (power - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(r > 0, c * (power - 1) * r ** (power - 3), 0.0)
        return a[:, None, None] * eye + b[:, None, None] * X[:, :, None] * X[:, None, :]

    return VectorField(f, dim, jac, spec={"form": "radial_power", "c": c, "power": power})


def polar_field(br_coeffs, btheta: float = 0.0) -> VectorField:
    """Model-surface drift ``b^r = sum_k br[k] r^k``, ``b^theta`` constant."""
    p = _Poly(np.asarray(br_coeffs, dtype=float))
    dp = p.deriv()

    def f(X):
        out = np.empty_like(X)
        out[:, 0] = p(X[:, 0])
        out[:, 1] = btheta
        return out

    def jac(X):
        J = np.zeros((len(X), 2, 2))
        J[:, 0, 0] = dp(X[:, 0])
        return J

    zero = not np.any(p.coef) and btheta == 0
    return VectorField(f, 2, jac, spec={"form": "polar", "br": list(map(float, p.coef)), "btheta": btheta},
                       is_zero=zero)


# ---------------------------------------------------------------------------
# config parsing


def scalar_from_config(spec: Optional[dict], dim: int) -> ScalarField:
    if spec is None:
        return zero_scalar(dim)
    form = spec.get("form")
    if form == "zero":
        return zero_scalar(dim)
    if form in ("constant", "const"):
        return constant_scalar(dim, float(spec.get("value", spec.get("c", 0.0))))
    if form == "poly1d":
        return poly1d_scalar(spec["coeffs"])
    if form == "radial_power":
        return radial_power_scalar(dim, float(spec["c"]), float(spec["power"]))
    if form == "fourier":
        return fourier_scalar(spec["terms"])
    if form == "cosine":
        return cosine_scalar(float(spec.get("a", 0.0)), float(spec.get("b", 1.0)), int(spec.get("m", 1)))
    if form == "gaussian":
        return gaussian_scalar(dim, float(spec.get("a", 1.0)), spec.get("center"))
    if form == "smooth_clip":
        return smooth_clip_scalar(float(spec.get("L", 5.0)), float(spec.get("width", 2.0)))
    if form == "bump":
        return bump_scalar(dim, float(spec.get("radius", 1.0)), spec.get("center"))
    if form == "cos_r":
        return cos_r_scalar()
    raise ValueError(f"unknown scalar form {form!r}")


def vector_from_config(spec: Optional[dict], dim: int) -> VectorField:
    if spec is None:
        return zero_field(dim)
    form = spec.get("form")
    if form == "zero":
        return zero_field(dim)
    if form in ("constant", "rotation"):
        v = spec.get("value", spec.get("c", 0.0))
        return constant_field(np.broadcast_to(np.asarray(v, dtype=float), (dim,)))
    if form == "poly1d":
        return poly1d_field(spec["coeffs"])
    if form == "linear":
        return linear_field(spec["A"], spec.get("c"))
    if form == "axis_odd":
        return axis_odd_field(spec["c0"], spec["odd"])
    if form == "radial_power":
        return radial_power_field(dim, float(spec["c"]), float(spec["power"]))
    if form == "polar":
        return polar_field(spec.get("br", [0.0]), float(spec.get("btheta", 0.0)))
    raise ValueError(f"unknown vector field form {form!r}")


__all__ = [
    "ScalarField", "TestFn", "VectorField", "as_points", "fd_gradient", "fd_hess_diag",
    "zero_scalar", "constant_scalar", "poly1d_scalar", "radial_power_scalar", "fourier_scalar",
    "cosine_scalar", "gaussian_scalar", "smooth_clip_scalar", "bump_scalar", "cos_r_scalar",
    "zero_field", "constant_field", "poly1d_field", "linear_field", "axis_odd_field",
    "radial_power_field", "polar_field", "scalar_from_config", "vector_from_config",
]

