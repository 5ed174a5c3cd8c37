import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowwalk.fields import (constant_field, constant_scalar, fourier_scalar, gaussian_scalar, poly1d_scalar,
                             zero_field, zero_scalar)
from flowwalk.geometry import (CEMETERY, TWO_PI, Arc, HalfOpenBox, Manifold, PolarRect, WeightFn, apply_A,
                               box_integral, distance, is_cemetery, surrogate_distance, volume_integral)

R2 = Manifold.euclidean(2)
S1 = Manifold.circle()
SPHERE = Manifold.model2d(WeightFn("sin"), math.pi)

angles = st.floats(0, TWO_PI, exclude_max=True)
coords = st.floats(-10, 10)


def test_distance_examples():
    assert distance(R2, (0, 0), (3, 4)) == pytest.approx(5.0)
    assert distance(S1, 0.1, 6.2) == pytest.approx(TWO_PI - 6.1, abs=1e-12)
    assert math.isinf(distance(S1, 0.3, CEMETERY))
    assert math.isinf(distance(R2, CEMETERY, (1.0, 2.0)))


def test_cemetery_is_singleton():
    import copy
    import pickle
    assert copy.deepcopy(CEMETERY) is CEMETERY
    assert pickle.loads(pickle.dumps(CEMETERY)) is CEMETERY
    assert is_cemetery(CEMETERY) and not is_cemetery(0.0)


@given(angles, angles, angles)
def test_circle_metric_axioms(a, b, c):
    dab, dba = distance(S1, a, b), distance(S1, b, a)
    assert dab == dba
    assert 0 <= dab <= math.pi + 1e-15
    assert dab <= distance(S1, a, c) + distance(S1, c, b) + 1e-10


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords))
def test_plane_metric_axioms(x, y, z):
    assert distance(R2, x, y) == pytest.approx(distance(R2, y, x))
    assert distance(R2, x, y) <= distance(R2, x, z) + distance(R2, z, y) + 1e-10


@given(st.floats(0.01, 3.1), angles, st.floats(0.01, 3.1), angles, st.floats(0.01, 3.1), angles)
def test_sphere_metric_axioms(r1, t1, r2, t2, r3, t3):
    x, y, z = (r1, t1), (r2, t2), (r3, t3)
    dxy = distance(SPHERE, x, y)
    assert dxy == pytest.approx(distance(SPHERE, y, x), abs=1e-12)
    assert dxy <= math.pi + 1e-12
    assert dxy <= distance(SPHERE, x, z) + distance(SPHERE, z, y) + 1e-10


def test_surrogate_dominates_geodesic_on_sphere(rng):
    X = np.stack([rng.uniform(0.05, 3.0, 500), rng.uniform(0, TWO_PI, 500)], 1)
    Y = np.stack([rng.uniform(0.05, 3.0, 500), rng.uniform(0, TWO_PI, 500)], 1)
    assert np.all(surrogate_distance(SPHERE, X, Y) >= distance(SPHERE, X, Y) - 1e-12)


def test_volume_examples():
    assert volume_integral(R2, HalfOpenBox((0, 0), (0.1, 0.1))) == pytest.approx(0.01)
    assert volume_integral(S1, Arc(0, math.pi / 4)) == pytest.approx(math.pi / 4)
    v = volume_integral(SPHERE, PolarRect(math.pi / 4, math.pi / 2, 0, math.pi / 4))
    assert v == pytest.approx(math.pi / 4 * math.sqrt(2) / 2, rel=1e-10)
    # independent 2-D quadrature of psi = sin r over the same rectangle
    q = box_integral(lambda P: np.sin(P[:, 0]), [math.pi / 4, 0], [math.pi / 2, math.pi / 4])
    assert q[0] == pytest.approx(v, rel=1e-9)


def test_volume_rejects_outside_domain():
    M = Manifold.euclidean(1, [(0, 1)])
    with pytest.raises(ValueError):
        volume_integral(M, HalfOpenBox((0.5,), (1.5,)))
    with pytest.raises(ValueError):
        volume_integral(SPHERE, PolarRect(3.0, 3.5, 0, 1))
    with pytest.raises(ValueError):
        volume_integral(S1, HalfOpenBox((0,), (1,)))


@given(st.floats(0.05, 2.5), st.floats(0.05, 0.5), st.floats(0, 5.0), st.floats(0.05, 1.0), st.floats(0.1, 0.9))
def test_volume_additivity_polar(r, dr, a, da, frac):
    rect = PolarRect(r, r + dr, a, a + da)
    whole = volume_integral(SPHERE, rect)
    m = r + frac * dr
    parts = volume_integral(SPHERE, PolarRect(r, m, a, a + da)) + volume_integral(SPHERE, PolarRect(m, r + dr, a, a + da))
    assert parts == pytest.approx(whole, rel=1e-9)


def test_weighted_volume():
    U = poly1d_scalar([0.0, 1.0])  # U(x) = x, density e^{-x}
    M = Manifold.euclidean(1, weight=U)
    assert volume_integral(M, HalfOpenBox((0.0,), (1.0,))) == pytest.approx(1 - math.exp(-1), rel=1e-12)


def test_apply_A_examples():
    cos = fourier_scalar([[1, 1.0, 0.0]])
    assert apply_A(S1, zero_field(1), zero_scalar(1), cos, 0.0) == pytest.approx(1.0)
    M1 = Manifold.euclidean(1)
    c = 1.7
    assert apply_A(M1, constant_field([c]), zero_scalar(1), poly1d_scalar([0, 1]), 0.3) == pytest.approx(-c)
    val = apply_A(S1, constant_field([1.0]), constant_scalar(1, 1.0), cos, math.pi / 2)
    assert val == pytest.approx(1.0, abs=1e-12)
    fd = apply_A(S1, constant_field([1.0]), constant_scalar(1, 1.0), cos, math.pi / 2, analytic=False)
    assert fd == pytest.approx(1.0, abs=1e-6)


def test_apply_A_rejects_cemetery():
    with pytest.raises(ValueError):
        apply_A(S1, zero_field(1), zero_scalar(1), fourier_scalar([[1, 1, 0]]), CEMETERY)


def test_apply_A_model2d_plane_matches_cartesian():
    # psi = r is the plane in polar coordinates; f = exp(-|x|^2) = exp(-r^2), Lap f = (4r^2 - 4) f
    M = Manifold.model2d(WeightFn("r"))
    from flowwalk.fields import ScalarField
    f = ScalarField(lambda X: np.exp(-X[:, 0] ** 2), 2)
    r = np.array([0.3, 0.9, 1.7])
    X = np.stack([r, np.full(3, 0.4)], 1)
    got = apply_A(M, zero_field(2), zero_scalar(2), f, X)
    assert np.allclose(got, -(4 * r**2 - 4) * np.exp(-r**2), rtol=1e-5)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_apply_A_linear_in_f(x, y):
    f = gaussian_scalar(2, 1.0)
    g = gaussian_scalar(2, 0.5, [0.3, -0.2])
    from flowwalk.fields import ScalarField
    fg = ScalarField(lambda X: f(X) + g(X), 2, lambda X: f.grad(X) + g.grad(X),
                     lambda X: f.hess_diag(X) + g.hess_diag(X))
    b, V = constant_field([0.5, -1.0]), constant_scalar(2, 0.7)
    for analytic, tol in ((True, 1e-8), (False, 1e-6)):  # difference path carries eps/h^2 roundoff
        lhs = apply_A(R2, b, V, fg, (x, y), analytic=analytic)
        rhs = apply_A(R2, b, V, f, (x, y), analytic=analytic) + apply_A(R2, b, V, g, (x, y), analytic=analytic)
        assert abs(lhs - rhs) <= tol * max(1.0, abs(rhs))


def test_finite_difference_consistency(rng):
    f = gaussian_scalar(2, 0.8, [0.2, 0.1])
    X = rng.uniform(-1.5, 1.5, (50, 2))
    b, V = constant_field([0.3, 0.2]), constant_scalar(2, 0.5)
    a = apply_A(R2, b, V, f, X)
    d = apply_A(R2, b, V, f, X, analytic=False)
    assert np.all(np.abs(a - d) <= 1e-4 * np.maximum(np.abs(a), 1e-2))


@pytest.mark.parametrize("form", ["r", "sin", "sinh", "polynomial", "exponential"])
def test_weightfn_derivatives(form):
    W = WeightFn(form, C1=1.3, alpha=1.5, beta=0.7)
    r = np.linspace(0.2, 1.4, 13)
    h = 1e-5
    fd1 = (W.psi(r + h) - W.psi(r - h)) / (2 * h)
    fd2 = (W.dpsi(r + h) - W.dpsi(r - h)) / (2 * h)
    assert np.allclose(W.dpsi(r), fd1, rtol=1e-6)
    assert np.allclose(W.ddpsi(r), fd2, rtol=1e-6)


def test_model2d_pole_check():
    Manifold.model2d(WeightFn("sinh"))
    with pytest.raises(ValueError):
        Manifold.model2d(WeightFn("exponential", C1=1.0, alpha=1.0, beta=1.0))


def test_manifold_config_roundtrip():
    for M in (R2, S1, SPHERE, Manifold.euclidean(1, [(-2, 2)])):
        M2 = Manifold.from_config(M.to_config())
        assert M2.to_config() == M.to_config()


def test_circle_canonical_range():
    X = S1.canonical([-0.1, TWO_PI, 7.0])
    assert np.all((X >= 0) & (X < TWO_PI))
