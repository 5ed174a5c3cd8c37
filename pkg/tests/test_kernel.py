import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flowwalk.fields import constant_field, constant_scalar, fourier_scalar, poly1d_field, poly1d_scalar, zero_field, zero_scalar
from flowwalk.flow import EXPLODED, WINDOW
from flowwalk.geometry import Manifold, WeightFn
from flowwalk.kernel import GraphFunction, apply, build_operator, symmetry_check
from flowwalk.partition import circle_partition, grid_partition, model2d_partition
from flowwalk.proximity import build_graph

S1 = Manifold.circle()


def circle_op(K=8, rho=0.8, b=None, V=None, alpha=0.01, s=0.01):
    G = build_graph(circle_partition(K), rho)
    return build_operator(G, b or zero_field(1), V or zero_scalar(1), alpha, s)


def test_circle_rows_one_third():
    L = circle_op()
    for j in range(8):
        ids, p, kill = L.row(j)
        assert set(ids.tolist()) == {(j - 1) % 8, j, (j + 1) % 8}
        assert np.allclose(p, 1 / 3, atol=1e-15) and kill == 0.0


def test_kill_clamp():
    L = circle_op(V=constant_scalar(1, 150.0), alpha=0.01)
    assert np.all(L.kill_mass == 1.0) and np.all(L.survival == 0.0)
    assert np.all(L.cemetery_mass == 1.0)
    assert np.allclose(L.row_sums(), 1.0, atol=1e-12)
    F = GraphFunction(np.ones(8), L.partition)
    assert np.all(apply(L, F).values == 0.0)


def test_drift_row_is_one_sided():
    P = grid_partition(1, 10, [(0, 1)])
    G = build_graph(P, 0.25)
    L = build_operator(G, constant_field([10.0]), zero_scalar(1), 0.0, 0.06)
    assert L.target[0] == 6
    ids, p, _ = L.row(0)
    assert set(ids.tolist()) == {4, 5, 6, 7, 8}
    # nothing flows back to cell 0 from the right
    M = L.matrix().toarray()
    assert M[0, 6] > 0 and M[6, 0] == 0
    with pytest.raises(ValueError):
        symmetry_check(L)


def test_window_kill_and_explosion_rows():
    P = grid_partition(1, 20, [(-1, 1)])
    G = build_graph(P, 0.3)
    L = build_operator(G, constant_field([5.0]), zero_scalar(1), 0.0, 0.1)
    assert np.all(L.status[P.ref[:, 0] > 0.5] == WINDOW)
    assert np.all(L.cemetery_mass[L.status == WINDOW] == 1.0)
    assert L.window_kill_mass() == pytest.approx(np.mean(P.ref[:, 0] + 0.5 >= 1.0))
    P2 = grid_partition(1, 10, [(0, 3)])
    L2 = build_operator(build_graph(P2, 0.5), poly1d_field([0, 0, 1]), zero_scalar(1), 0.0, 1.2)
    i = int(P2.locate_many([[1.0]])[0])
    # the cell centred at x = 1.05 blows up at 1/1.05 < 1.2; x = 0.75 lands at 7.5, off the window
    assert L2.status[i] == EXPLODED and L2.cemetery_mass[i] == 1.0
    assert L2.s_exit[i] == pytest.approx(1 / 1.05, abs=1e-5)
    assert L2.status[int(P2.locate_many([[0.75]])[0])] == WINDOW


def test_window_kill_accounting():
    # window_kill_mass = 1 - sum_X m(X) (mass reaching in-window cells) / total volume, when V = 0
    P = grid_partition(2, 16, [(-1, 1), (-1, 1)])
    L = build_operator(build_graph(P, 0.4), constant_field([3.0, -1.0]), zero_scalar(2), 0.0, 0.1)
    inwin = np.asarray(L.matrix().sum(axis=1)).ravel()
    expect = 1 - math.fsum(P.volume * inwin) / math.fsum(P.volume)
    assert L.window_kill_mass() == pytest.approx(expect, abs=1e-10)


def test_apply_examples():
    L = circle_op()
    one = GraphFunction(np.ones(8), L.partition)
    assert np.allclose(apply(L, one).values, 1.0, atol=1e-15)
    Lv = circle_op(V=constant_scalar(1, 30.0), alpha=0.01)
    assert np.allclose(apply(Lv, one).values, 0.7, atol=1e-15)
    ind = GraphFunction(np.eye(8)[0], L.partition)
    out = apply(L, ind).values
    assert np.allclose(out[[7, 0, 1]], 1 / 3) and np.all(out[2:7] == 0)
    with pytest.raises(ValueError):
        apply(L, GraphFunction(np.ones(9), circle_partition(9)))


def test_graph_function_cemetery():
    F = GraphFunction([1.0, 2.0, 3.0], circle_partition(3))
    assert F.at(-1) == 0.0 and F.at(None) == 0.0 and F.at(2) == 3.0


OPERATORS = {
    "circle_drift_kill": lambda: build_operator(build_graph(circle_partition(200), 0.2), constant_field([1.0]),
                                                fourier_scalar([[0, 1.0, 0], [1, 1.0, 0]]), 0.05, 0.005),
    "grid2d_drift": lambda: build_operator(build_graph(grid_partition(2, 12, [(-1, 1), (-1, 1)]), 0.5),
                                           constant_field([0.7, -0.4]), poly1d_scalar([0.2]) if False else constant_scalar(2, 0.3),
                                           0.1, 0.1),
    "sphere": lambda: build_operator(build_graph(model2d_partition(Manifold.model2d(WeightFn("sin"), math.pi), 5, 3.0), 1.2),
                                     zero_field(2), constant_scalar(2, 1.0), 0.2, 0.2),
    "line_blowup": lambda: build_operator(build_graph(grid_partition(1, 40, [(-2, 2)]), 0.4), poly1d_field([0, 0, 1]),
                                          poly1d_scalar([0, 0, 1]), 0.2, 0.6),
}


@pytest.fixture(scope="module", params=sorted(OPERATORS))
def op(request):
    return OPERATORS[request.param]()


def test_row_conservation(op):
    assert np.max(np.abs(op.row_sums() - 1.0)) <= 1e-12
    assert np.all(op.matrix().data >= 0)


def test_entries_reference_target_neighbourhood(op):
    M = op.matrix()
    for i in range(0, len(op), max(1, len(op) // 25)):
        cols = M.indices[M.indptr[i]:M.indptr[i + 1]]
        if op.target[i] >= 0 and op.survival[i] > 0:
            assert np.array_equal(cols, op.graph.neighbors(op.target[i]))
        else:
            assert len(cols) == 0


@given(data=st.data())
def test_positivity_monotonicity_contraction(op, data):
    n = len(op)
    F = data.draw(hnp.arrays(float, n, elements=st.floats(-5, 5)))
    D = data.draw(hnp.arrays(float, n, elements=st.floats(0, 3)))
    LF, LG = op.apply_array(F), op.apply_array(F + D)
    assert np.all(LG - LF >= -1e-12)
    assert np.all(op.apply_array(np.abs(F)) >= 0)
    assert np.max(np.abs(LF)) <= np.max(np.abs(F)) + 1e-12


def test_apply_matches_matrix(op, rng):
    F = rng.standard_normal(len(op))
    assert np.allclose(op.apply_array(F), op.matrix() @ F, atol=1e-13)
    F2 = rng.standard_normal((len(op), 3))
    assert np.allclose(op.apply_array(F2)[:, 1], op.apply_array(F2[:, 1]), atol=1e-15)


def test_build_deterministic():
    a, b = OPERATORS["circle_drift_kill"](), OPERATORS["circle_drift_kill"]()
    assert np.array_equal(a.target, b.target) and np.array_equal(a.coef, b.coef)
    ma, mb = a.matrix(), b.matrix()
    assert np.array_equal(ma.data, mb.data) and np.array_equal(ma.indices, mb.indices)


def test_symmetry_examples():
    rep = symmetry_check(circle_op(K=8))
    assert rep.ok and rep.max_violation <= 1e-12
    P = grid_partition(2, 16, [(0, 1), (0, 1)])
    L = build_operator(build_graph(P, 0.3), zero_field(2), zero_scalar(2), 0.01, 0.01)
    rep = symmetry_check(L)
    assert rep.ok and rep.max_balance_violation <= 1e-12
    with pytest.raises(ValueError):
        symmetry_check(circle_op(b=constant_field([10.0])))
    with pytest.raises(ValueError):
        symmetry_check(circle_op(V=constant_scalar(1, 1.0)))


def test_symmetry_model2d_nonuniform():
    P = model2d_partition(Manifold.model2d(WeightFn("sin"), math.pi), 5, 3.0)
    L = build_operator(build_graph(P, 1.0), zero_field(2), zero_scalar(2), 0.1, 0.1)
    rep = symmetry_check(L)
    assert rep.max_violation <= 1e-12 and rep.max_balance_violation <= 1e-12


def test_negative_potential_refused():
    with pytest.raises(ValueError):
        circle_op(V=constant_scalar(1, -0.2))
    L = build_operator(build_graph(circle_partition(8), 0.8), zero_field(1), constant_scalar(1, -0.2), 0.1, 0.1, v0=0.2)
    assert np.allclose(L.kill_mass, 0.0)


def test_operator_csv(tmp_path):
    L = circle_op(V=constant_scalar(1, 10.0), alpha=0.01)
    L.to_csv(tmp_path / "op.csv")
    lines = (tmp_path / "op.csv").read_text().splitlines()
    assert lines[0] == "row_id,col_id,prob"
    assert len(lines) == 1 + 8 * 4
    kills = [l for l in lines[1:] if l.split(",")[1] == "-1"]
    assert len(kills) == 8 and float(kills[0].split(",")[2]) == pytest.approx(0.1)


def test_weighted_walk_generator():
    # with density e^{-U} the walk drifts by -2 U' per unit time, twice the weighted Laplacian's
    M = Manifold.euclidean(1, weight=poly1d_scalar([0, 0.5]))
    rho = 0.1
    delta = rho * rho / 6
    P = grid_partition(1, 4000, [(-1, 1)], manifold=M)
    L = build_operator(build_graph(P, rho), zero_field(1), zero_scalar(1), 0.0, 0.0)
    x = P.ref[:, 0]
    gen = (L.apply_array(np.sin(x)) - np.sin(x)) / delta
    mid = np.abs(x) < 0.5
    assert np.max(np.abs(gen - (-np.sin(x) - np.cos(x)))[mid]) < 0.01
    assert np.max(np.abs(gen - (-np.sin(x) - 0.5 * np.cos(x)))[mid]) > 0.4
