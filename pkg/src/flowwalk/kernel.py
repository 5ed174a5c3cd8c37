"""Transition operator of the killed random walk in a flow.

Row ``X``: flow the reference point for time ``s`` to ``z``; if ``z`` is the cemetery the
row sends everything to the cemetery, otherwise it spreads ``max(1 - alpha V, 0)`` over
the rho-neighbours ``Y`` of the cell containing ``z`` in proportion to their volumes and
sends ``min(alpha V, 1)`` to the cemetery.

Rows are stored as ``(target, survival)`` pairs: the entries of row ``X`` are
``survival[X] * m(Y) / m(N(target[X]))`` for ``Y`` in ``N(target[X])``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fields import ScalarField, VectorField
from .flow import EXPLODED, OK, WINDOW, flow_many
from .partition import Partition
from .proximity import ProximityGraph


@dataclass(eq=False)
class GraphFunction:
    """Values on the cells of a partition; the cemetery value is 0 and never stored."""

    values: np.ndarray
    partition: Partition
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != len(self.partition):
            raise ValueError(f"{self.values.shape[0]} values for {len(self.partition)} cells")

    def __len__(self):
        return len(self.values)

    def at(self, i) -> float:
        """Value at cell ``i``; ``-1`` or ``None`` stand for the cemetery."""
        if i is None or int(i) < 0:
            return 0.0
        return float(self.values[int(i)])

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0


@dataclass(eq=False)
class TransitionOperator:
    graph: ProximityGraph
    alpha: float
    s: float
    target: np.ndarray  # cell holding phi_s(x(X)); -1 for the cemetery
    survival: np.ndarray  # max(1 - alpha V(x(X)), 0)
    kill_mass: np.ndarray  # min(alpha V(x(X)), 1)
    status: np.ndarray  # 0 ok, 1 explosion, 2 window kill
    s_exit: np.ndarray
    drift_free: bool = False
    potential_free: bool = False
    coef: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        G = self.graph
        live = self.target >= 0
        self._tgt = np.where(live, self.target, 0)
        self.coef = np.where(live, self.survival / G.nvol[self._tgt], 0.0)

    def __len__(self):
        return len(self.target)

    @property
    def partition(self) -> Partition:
        return self.graph.partition

    @property
    def cemetery_mass(self) -> np.ndarray:
        """Probability of jumping to the cemetery, per row."""
        return np.where(self.target >= 0, self.kill_mass, 1.0)

    def row(self, i: int):
        """``(neighbour ids, probabilities, cemetery mass)`` of row ``i``."""
        i = int(i)
        if self.target[i] < 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0), 1.0
        ids = self.graph.neighbors(self.target[i])
        vol = self.partition.volume
        return ids, self.survival[i] * vol[ids] / self.graph.nvol[self.target[i]], float(self.kill_mass[i])

    def row_sums(self) -> np.ndarray:
        """Total outgoing mass per row including the cemetery (should be 1)."""
        G, vol = self.graph, self.partition.volume
        s = np.empty(len(self))
        for i in range(len(self)):
            if self.target[i] < 0:
                s[i] = 1.0
            else:
                ids = G.neighbors(self.target[i])
                s[i] = math.fsum(self.survival[i] * vol[ids] / G.nvol[self.target[i]]) + self.kill_mass[i]
        return s

    def apply_array(self, F: np.ndarray) -> np.ndarray:
        """``(L F)(X) = survival * sum_Y m(Y) F(Y) / m(N)`` along axis 0."""
        vol = self.partition.volume
        F = np.asarray(F, dtype=float)
        w = vol[:, None] * F if F.ndim == 2 else vol * F
        S = self.graph.neighborhood_sum(w)
        c = self.coef[:, None] if F.ndim == 2 else self.coef
        return c * S[self._tgt]

    def matrix(self) -> sp.csr_matrix:
        """Explicit sparse matrix of the cell-to-cell probabilities (cemetery column dropped)."""
        A = self.graph.to_csr()
        vol = self.partition.volume
        M = sp.diags(self.coef) @ A[self._tgt] @ sp.diags(vol)
        M = sp.csr_matrix(M)
        M.eliminate_zeros()
        M.sort_indices()
        return M

    def window_kill_mass(self) -> float:
        """Volume fraction of rows whose flow point left the computational window."""
        vol = self.partition.volume
        return math.fsum(vol[self.status == WINDOW]) / math.fsum(vol)

    def counts(self) -> dict:
        return {"rows": len(self), "exploded": int(np.sum(self.status == EXPLODED)),
                "window_killed": int(np.sum(self.status == WINDOW)),
                "fully_killed": int(np.sum((self.status == OK) & (self.survival == 0)))}

    def to_csv(self, path) -> None:
        """Rows ``(row_id, col_id, prob)``; ``col_id = -1`` carries the cemetery mass."""
        M = self.matrix()
        cm = self.cemetery_mass
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row_id", "col_id", "prob"])
            for i in range(len(self)):
                a, b = M.indptr[i], M.indptr[i + 1]
                for j, p in zip(M.indices[a:b], M.data[a:b]):
                    w.writerow([i, int(j), repr(float(p))])
                w.writerow([i, -1, repr(float(cm[i]))])


def build_operator(G: ProximityGraph, b: VectorField, V: ScalarField, alpha: float, s: float,
                   v0: float = 0.0, threads: int = 1) -> TransitionOperator:
    """Assemble the transition operator with killing scale ``alpha`` and flow time ``s``.

    ``v0`` shifts the potential to ``V + v0`` (for potentials bounded below by ``-v0``).
    """
    if alpha < 0 or s < 0:
        raise ValueError("alpha and s must be nonnegative")
    P = G.partition
    M = P.manifold
    refs = P.ref
    # flow on the manifold itself; a row is window-killed when its flow point lands off
    # the partition, so true explosions keep their exit times
    Z, status, s_exit, _ = flow_many(M, b, refs, s, threads=threads)
    target = np.full(len(P), -1, dtype=np.int64)
    ok = status == OK
    target[ok] = P.locate_many(Z[ok])
    lost = ok & (target < 0)
    status[lost] = WINDOW
    Vx = V(refs) + v0
    if np.any(Vx < -1e-12):
        raise ValueError(f"potential + v0 is negative (min {Vx.min():.3g}); increase v0")
    aV = alpha * np.maximum(Vx, 0.0)
    survival = np.maximum(1.0 - aV, 0.0)
    kill = np.minimum(aV, 1.0)
    return TransitionOperator(G, float(alpha), float(s), target, survival, kill, status, s_exit,
                              drift_free=bool(b.is_zero), potential_free=bool(np.all(Vx == 0)))


def apply(Lop: TransitionOperator, F: GraphFunction) -> GraphFunction:
    """One step of the walk: a fresh graph function ``L F``."""
    if len(F) != len(Lop) or (F.partition is not Lop.partition and len(F.partition) != len(Lop)):
        raise ValueError("graph function and operator live on different partitions")
    return GraphFunction(Lop.apply_array(F.values), Lop.partition)


@dataclass
class SymmetryReport:
    max_violation: float  # relative, |p(X,Y) m(X) m(N(X)) - m(X) m(Y)| / (m(X) m(Y))
    max_balance_violation: float  # relative detailed-balance mismatch between (X,Y) and (Y,X)
    pairs: int
    ok: bool


def symmetry_check(Lop: TransitionOperator, tolerance: float = 1e-12) -> SymmetryReport:
    """Check ``p(X,Y) m(X) m(N(X)) = m(X) m(Y)`` over all stored pairs (drift- and potential-free only)."""
    if not (Lop.drift_free and Lop.potential_free):
        raise ValueError("m-symmetry only holds without drift and killing")
    if np.any(Lop.target != np.arange(len(Lop))):
        raise ValueError("some rows were killed at the window; symmetry is not defined there")
    P = Lop.partition
    vol, nvol = P.volume, Lop.graph.nvol
    M = Lop.matrix().tocoo()
    X, Y, p = M.row, M.col, M.data
    ref = vol[X] * vol[Y]
    lhs = p * vol[X] * nvol[X]
    viol = np.abs(lhs - ref) / ref
    MT = Lop.matrix().T.tocsr()
    MT.sort_indices()
    pT = np.asarray(MT[X, Y]).ravel()
    bal = np.abs(lhs - pT * vol[Y] * nvol[Y]) / ref
    mv, mb = float(viol.max(initial=0.0)), float(bal.max(initial=0.0))
    return SymmetryReport(mv, mb, len(p), max(mv, mb) <= tolerance)


__all__ = ["GraphFunction", "TransitionOperator", "build_operator", "apply", "symmetry_check", "SymmetryReport"]
