import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowwalk.fields import constant_field, poly1d_field, poly1d_scalar, polar_field, zero_field, zero_scalar
from flowwalk.flow import EXPLODED, OK, audit_conditions, explosion_time, flow, flow_many, rk4
from flowwalk.geometry import CEMETERY, Manifold, WeightFn

R1 = Manifold.euclidean(1)
NEG_X = poly1d_field([0, -1])
SQUARE = poly1d_field([0, 0, 1])


def test_flow_examples():
    r = flow(R1, constant_field([2.0]), 1.0, 0.5)
    assert not r.exploded and r.endpoint[0] == pytest.approx(2.0, abs=1e-10)
    r = flow(R1, NEG_X, 1.0, 1.0)
    assert r.endpoint[0] == pytest.approx(math.exp(-1), abs=1e-8)
    r = flow(R1, SQUARE, 1.0, 1.2)
    assert r.exploded and r.endpoint is CEMETERY and r.cause == "explosion"
    assert r.s_exit == pytest.approx(1.0, abs=1e-5)


def test_flow_zero_duration_is_identity():
    r = flow(R1, SQUARE, 0.7, 0.0)
    assert r.endpoint[0] == 0.7


def test_flow_rejects_bad_input():
    with pytest.raises(ValueError):
        flow(R1, NEG_X, CEMETERY, 1.0)
    with pytest.raises(ValueError):
        flow(R1, NEG_X, 0.0, -1.0)


def test_window_exit_is_not_explosion():
    win = lambda X: np.abs(X[:, 0]) < 2
    r = flow(R1, constant_field([1.0]), 0.0, 3.0, window=win)
    assert r.exploded and r.cause == "window"
    assert r.s_exit == pytest.approx(2.0, abs=1e-3)


def test_explosion_time_examples():
    assert explosion_time(R1, SQUARE, 1.0, 2.0) == pytest.approx(1.0, abs=1e-5)
    assert math.isinf(explosion_time(R1, zero_field(1), 0.3, 2.0))
    assert math.isinf(explosion_time(R1, NEG_X, 5.0, 2.0))


def test_explosion_monotone():
    # b = x^2 from x0 > 0 blows up at 1/x0; the exploded set only grows with s
    x0 = np.concatenate([np.linspace(0.2, 3.0, 57), [1 / 0.75, 1 / 1.25]])[:, None]
    prev = np.zeros(len(x0), dtype=bool)
    for s in (0.25, 0.5, 1.0, 1.5):
        _, status, s_exit, _ = flow_many(R1, SQUARE, x0, s)
        ex = status == EXPLODED
        assert np.all(ex[prev])
        T = 1 / x0[:, 0]
        clear = np.abs(T - s) > 1e-3
        assert np.array_equal(ex[clear], (T < s)[clear])
        assert np.allclose(s_exit[ex], T[ex], atol=1e-5)
        prev = ex


def test_semiflow_property(rng):
    # 5 random (s, t) pairs times 200 starting points
    b = poly1d_field([0.5, -1.0, 0.0, -0.3])
    for _ in range(5):
        s, t = rng.dirichlet([1, 1, 1])[:2]
        X = rng.uniform(-3, 3, (200, 1))
        a = flow_many(R1, b, X, s + t)[0]
        mid = flow_many(R1, b, X, t)[0]
        c = flow_many(R1, b, mid, s)[0]
        assert np.all(np.abs(a - c)[:, 0] <= 1e-6 * (1 + np.abs(X[:, 0])))


def test_rk4_order():
    x = np.array([[1.0]])
    errs = []
    for n in (8, 16, 32):
        z, _, _ = rk4(R1, NEG_X, x, 1.0, n)
        errs.append(abs(z[0, 0] - math.exp(-1)))
    for a, b in zip(errs, errs[1:]):
        assert 8 <= a / b <= 32


def test_flow_many_thread_independent(rng):
    X = rng.uniform(-2, 2, (10_000, 1))
    b = poly1d_field([0.1, -1.0, 0.5])
    a = flow_many(R1, b, X, 0.01, threads=1)
    c = flow_many(R1, b, X, 0.01, threads=4)
    for u, v in zip(a, c):
        assert np.array_equal(u, v, equal_nan=True)


def test_richardson_error_small():
    _, st_, _, err = flow_many(R1, NEG_X, [[1.0], [2.0]], 1e-3)
    assert np.all(st_ == OK) and np.all(err < 1e-15)


def test_circle_flow_wraps():
    S1 = Manifold.circle()
    r = flow(S1, constant_field([1.0]), 6.0, 1.0)
    assert r.endpoint[0] == pytest.approx(7.0 - 2 * math.pi)


def test_model2d_polar_flow():
    # b = -r d/dr + d/dtheta: r e^{-s}, theta + s
    M = Manifold.model2d(WeightFn("r"))
    r = flow(M, polar_field([0.0, -1.0], 1.0), (0.5, 6.0), 1.0)
    assert not r.exploded
    assert r.endpoint[0] == pytest.approx(0.5 * math.exp(-1), abs=1e-9)
    assert r.endpoint[1] == pytest.approx(7.0 - 2 * math.pi, abs=1e-9)


def test_model2d_canonical_through_pole():
    M = Manifold.model2d(WeightFn("r"))
    X = M.canonical([[-0.5, 0.0]])
    assert X[0, 0] == pytest.approx(0.5) and X[0, 1] == pytest.approx(math.pi)


def test_audit_examples():
    rep = audit_conditions(R1, poly1d_field([0, 0, 0, -1]), poly1d_scalar([0, 0, 1]), p=2, kappa="1",
                           samples=1001, window=[(-3, 3)])
    assert rep.lambda_hat == pytest.approx(4.5)
    assert rep.C_hat == pytest.approx(27.0)
    rep0 = audit_conditions(R1, zero_field(1), zero_scalar(1), samples=101, window=[(-3, 3)])
    assert rep0.lambda_hat == 0 and rep0.C_hat == 0
    # the radial margin grows with the window for b = -x^3
    big = audit_conditions(R1, poly1d_field([0, 0, 0, -1]), zero_scalar(1), samples=1001, window=[(-6, 6)])
    assert big.C_hat > rep.C_hat
    assert "no inequality is proven" in rep.to_dict()["note"]


def test_audit_kappa_skips():
    rep = audit_conditions(R1, NEG_X, zero_scalar(1), kappa="1/r", samples=101, window=[(-3, 3)])
    assert rep.skipped > 0
    with pytest.raises(ValueError):
        audit_conditions(R1, NEG_X, zero_scalar(1), kappa="r^2")
    with pytest.raises(ValueError):
        audit_conditions(R1, NEG_X, zero_scalar(1), samples=0)
