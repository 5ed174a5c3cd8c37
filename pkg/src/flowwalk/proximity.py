"""Hausdorff distances between cells and the rho-proximity graph.

Uniform partitions (grids, circle arcs) are translation invariant, so adjacency is
decided once for every index offset and stored as a stencil. One-dimensional graphs
keep contiguous index ranges and sum over neighbourhoods with prefix sums; everything
else uses a CSR adjacency matrix.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import TWO_PI, Arc, HalfOpenBox, Manifold, PolarRect, _ang
from .partition import Partition

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Hausdorff distances


def _arc_point_dist(t, a, b):
    """Distance on the circle from angle(s) ``t`` to the closed arc ``[a, b]``."""
    t = np.mod(t, TWO_PI)
    inside = (np.mod(t - a, TWO_PI) <= (b - a))
    return np.where(inside, 0.0, np.minimum(_ang(t - a), _ang(t - b)))


def _arc_directed(a1, b1, a2, b2):
    # dist(., B) is piecewise linear along A; its maximum sits at an endpoint of A
    # or at the midpoint of the complement of B
    mid = b2 + (TWO_PI - (b2 - a2)) / 2
    d = np.maximum(_arc_point_dist(a1, a2, b2), _arc_point_dist(b1, a2, b2))
    mid_in = np.mod(mid - a1, TWO_PI) <= b1 - a1
    return np.where(mid_in, np.maximum(d, _arc_point_dist(mid, a2, b2)), d)


def arc_hausdorff_many(a1, b1, a2, b2) -> np.ndarray:
    """Exact Hausdorff distances between arcs ``[a1, b1]`` and ``[a2, b2]`` (elementwise)."""
    a1, b1, a2, b2 = (np.asarray(z, dtype=float) for z in (a1, b1, a2, b2))
    return np.maximum(_arc_directed(a1, b1, a2, b2), _arc_directed(a2, b2, a1, b1))


def _box_directed(A: HalfOpenBox, B: HalfOpenBox) -> float:
    # distance to a convex set is convex, so its max over a box is at a corner
    lo, hi = np.asarray(A.lo, dtype=float), np.asarray(A.hi, dtype=float)
    n = len(lo)
    corners = np.array(np.meshgrid(*[[lo[i], hi[i]] for i in range(n)], indexing="ij")).reshape(n, -1).T
    blo, bhi = np.asarray(B.lo, dtype=float), np.asarray(B.hi, dtype=float)
    gap = np.maximum(0.0, np.maximum(blo - corners, corners - bhi))
    return float(np.max(np.linalg.norm(gap, axis=1)))


def polar_point_to_rect(M: Manifold, r, t, rect) -> np.ndarray:
    """Surrogate distance from chart points ``(r, t)`` to polar rectangles ``rect = (r_lo, r_hi, a, b)``.

    The nearest rectangle point for the surrogate metric has the clipped radius, so the
    minimum is attained in closed form.
    """
    r_lo, r_hi, a, b = rect
    rr = np.clip(r, r_lo, r_hi)
    g = _arc_point_dist(t, a, b)
    return np.abs(r - rr) + g * M.psi.max_on(np.minimum(r, rr), np.maximum(r, rr))


def _polar_samples(lo, hi, q=4):
    u = np.linspace(0.0, 1.0, q)
    R = lo[..., 0:1, None] + (hi - lo)[..., 0:1, None] * u[:, None]
    T = lo[..., 1:2, None] + (hi - lo)[..., 1:2, None] * u[None, :]
    R, T = np.broadcast_arrays(R, T)
    return R.reshape(*R.shape[:-2], -1), T.reshape(*T.shape[:-2], -1)


def polar_hausdorff_many(M: Manifold, loA, hiA, loB, hiB, q=4) -> np.ndarray:
    """Sampled surrogate Hausdorff distances for matched arrays of polar rectangles."""
    loA, hiA, loB, hiB = (np.atleast_2d(np.asarray(z, dtype=float)) for z in (loA, hiA, loB, hiB))
    Ra, Ta = _polar_samples(loA, hiA)
    Rb, Tb = _polar_samples(loB, hiB)
    rectB = tuple(z[:, None] for z in (loB[:, 0], hiB[:, 0], loB[:, 1], hiB[:, 1]))
    rectA = tuple(z[:, None] for z in (loA[:, 0], hiA[:, 0], loA[:, 1], hiA[:, 1]))
    dab = polar_point_to_rect(M, Ra, Ta, rectB).max(axis=1)
    dba = polar_point_to_rect(M, Rb, Tb, rectA).max(axis=1)
    return np.maximum(dab, dba)


def hausdorff(M: Manifold, A, B) -> float:
    """Hausdorff distance between the closures of two cells.

    Exact for boxes (any dimension) and arcs. Polar rectangles use the surrogate chart
    distance on a 4x4 sample grid of each rectangle, measured against the other
    rectangle exactly.
    """
    if type(A) is not type(B):
        raise ValueError("cells of different shape types")
    if isinstance(A, HalfOpenBox):
        if M.kind != "euclidean":
            raise ValueError("boxes belong to Euclidean manifolds")
        if len(A.lo) != len(B.lo):
            raise ValueError("boxes of different dimension")
        return max(_box_directed(A, B), _box_directed(B, A))
    if isinstance(A, Arc):
        if M.kind != "circle":
            raise ValueError("arcs belong to the circle")
        return float(arc_hausdorff_many(A.a, A.b, B.a, B.b))
    if isinstance(A, PolarRect):
        if M.kind != "model2d":
            raise ValueError("polar rectangles belong to model surfaces")
        d = polar_hausdorff_many(M, [A.r_lo, A.a], [A.r_hi, A.b], [B.r_lo, B.a], [B.r_hi, B.b])
        return float(d[0])
    raise TypeError(f"unsupported cell shape {A!r}")


# ---------------------------------------------------------------------------
# graph


@dataclass(eq=False)
class ProximityGraph:
    """Undirected rho-adjacency over the cells of a partition.

    ``storage`` is ``"range"`` (grid n = 1: neighbours are ``start[i]:stop[i]``),
    ``"cyclic"`` (circle: ``i - D .. i + D`` mod K) or ``"csr"``.
    """

    partition: Partition
    rho: float
    storage: str
    start: Optional[np.ndarray] = None
    stop: Optional[np.ndarray] = None
    D: int = 0
    adj: Optional[sp.csr_matrix] = None
    nvol: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.partition)

    @property
    def full_cycle(self) -> bool:
        return self.storage == "cyclic" and 2 * self.D + 1 >= len(self.partition)

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted neighbour ids of cell ``i`` (always includes ``i``)."""
        i = int(i)
        if self.storage == "range":
            return np.arange(self.start[i], self.stop[i])
        if self.storage == "cyclic":
            K = len(self.partition)
            if self.full_cycle:
                return np.arange(K)
            return np.sort(np.mod(np.arange(i - self.D, i + self.D + 1), K))
        a, b = self.adj.indptr[i], self.adj.indptr[i + 1]
        return self.adj.indices[a:b].copy()

    def degrees(self) -> np.ndarray:
        if self.storage == "range":
            return self.stop - self.start
        if self.storage == "cyclic":
            K = len(self.partition)
            return np.full(K, K if self.full_cycle else 2 * self.D + 1)
        return np.diff(self.adj.indptr)

    def neighborhood_sum(self, values) -> np.ndarray:
        """``S[i] = sum_{j in N(i)} values[j]`` (works along axis 0 of 1-D or 2-D arrays)."""
        v = np.asarray(values, dtype=float)
        if self.storage == "csr":
            return np.asarray(self.adj @ v)
        # prefix sums in extended precision keep the cancellation error far below 1e-15
        if self.storage == "range":
            c = _prefix(v)
            return (c[self.stop] - c[self.start]).astype(float)
        K = len(self.partition)
        if self.full_cycle:
            tot = np.sum(v.astype(np.longdouble), axis=0)
            return np.broadcast_to(tot, v.shape).astype(float)
        D = self.D
        ext = np.concatenate([v[K - D:], v, v[:D]], axis=0)
        c = _prefix(ext)
        return (c[2 * D + 1:] - c[:K]).astype(float)

    def to_csr(self) -> sp.csr_matrix:
        """Explicit 0/1 adjacency matrix (column-sorted rows)."""
        if self.storage == "csr":
            return self.adj
        N = len(self.partition)
        deg = self.degrees()
        rows = np.repeat(np.arange(N), deg)
        if self.storage == "range":
            first = np.repeat(self.start, deg)
        elif self.full_cycle:
            first = np.zeros(len(rows), dtype=np.int64)
        else:
            first = np.repeat(np.arange(N) - self.D, deg)
        ptr = np.concatenate([[0], np.cumsum(deg)])
        cols = first + (np.arange(len(rows)) - np.repeat(ptr[:-1], deg))
        if self.storage == "cyclic":
            cols = np.mod(cols, N)
        A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
        A.sort_indices()
        return A

    def edges(self):
        """Iterate ``(i, j)`` adjacency pairs in row-major sorted order."""
        for i in range(len(self)):
            for j in self.neighbors(i):
                yield i, int(j)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_id", "neighbor_id"])
            for i, j in self.edges():
                w.writerow([i, j])


def _prefix(v: np.ndarray) -> np.ndarray:
    z = np.zeros((1,) + v.shape[1:], dtype=np.longdouble)
    return np.concatenate([z, np.cumsum(v.astype(np.longdouble), axis=0)], axis=0)


def _grid_stencil(n: int, k: int, rho: float) -> np.ndarray:
    # translates of one cube: d_H(X, X + o/k) = |o|/k exactly
    R = int(math.ceil(rho * k)) + 1
    axes = [np.arange(-R, R + 1)] * n
    offs = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
    sq = np.sum(offs * offs, axis=1)
    return offs[np.sqrt(sq) / k < rho]


def _build_grid(P: Partition, rho: float) -> ProximityGraph:
    n, k = P.dim, P.meta["k"]
    counts = P.meta["counts"]
    offs = _grid_stencil(n, k, rho)
    N = len(P)
    if n == 1:
        D = int(np.max(np.abs(offs[:, 0])))
        i = np.arange(N)
        start = np.maximum(i - D, 0)
        stop = np.minimum(i + D + 1, N)
        return ProximityGraph(P, rho, "range", start=start, stop=stop, D=D)
    idx = np.stack(np.unravel_index(np.arange(N), tuple(counts)), axis=1)
    rows, cols = [], []
    # offsets in lexicographic order give column-sorted CSR rows
    for o in offs:
        tgt = idx + o
        ok = np.all((tgt >= 0) & (tgt < counts), axis=1)
        src = np.nonzero(ok)[0]
        rows.append(src)
        cols.append(np.ravel_multi_index(tuple(tgt[ok].T), tuple(counts)))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
    adj.sort_indices()
    return ProximityGraph(P, rho, "csr", adj=adj)


def _build_circle(P: Partition, rho: float) -> ProximityGraph:
    K = P.meta["K"]
    w = TWO_PI / K
    m = np.arange(K // 2 + 1)
    # exact arc Hausdorff distance of cell 0 against its rotation by m cells
    dh = arc_hausdorff_many(np.zeros_like(m * w), np.full(len(m), w), m * w, (m + 1) * w)
    inside = dh < rho
    D = int(np.max(np.nonzero(inside)[0]))
    if not np.all(inside[: D + 1]):
        raise RuntimeError("non-contiguous circle neighbourhood")
    return ProximityGraph(P, rho, "cyclic", D=D)


def _build_model2d(P: Partition, rho: float) -> ProximityGraph:
    M = P.manifold
    l, Ks, offsets = P.meta["l"], P.meta["Ks"], P.meta["offsets"]
    n_ann = len(Ks)
    reach = int(math.ceil(rho * l))
    rows, cols = [], []
    for a1 in range(n_ann):
        s1 = slice(offsets[a1], offsets[a1 + 1])
        lo1, hi1 = P.lo[s1], P.hi[s1]
        c1 = (lo1[:, 1] + hi1[:, 1]) / 2
        rc1 = (lo1[0, 0] + hi1[0, 0]) / 2
        psi1 = float(M.psi.psi(rc1))
        for a2 in range(max(0, a1 - reach), min(n_ann, a1 + reach + 1)):
            s2 = slice(offsets[a2], offsets[a2 + 1])
            lo2, hi2 = P.lo[s2], P.hi[s2]
            w2 = TWO_PI / Ks[a2]
            c2 = (lo2[:, 1] + hi2[:, 1]) / 2
            # d_H >= dist(center of X, Y) >= (angle gap) * psi(r_center)
            gap = np.maximum(_ang(c1[:, None] - c2[None, :]) - w2 / 2, 0.0)
            I, J = np.nonzero(gap * psi1 < rho)
            if len(I) == 0:
                continue
            d = polar_hausdorff_many(M, lo1[I], hi1[I], lo2[J], hi2[J])
            ok = d < rho
            rows.append(I[ok] + offsets[a1])
            cols.append(J[ok] + offsets[a2])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    N = len(P)
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
    # the sampled distance is symmetric by construction; enforce it against roundoff
    adj = ((adj + adj.T) > 0).astype(float).tocsr()
    adj.sort_indices()
    return ProximityGraph(P, rho, "csr", adj=adj)


def build_graph(P: Partition, rho: float) -> ProximityGraph:
    """Adjacency ``X ~ Y`` iff ``d_H(X, Y) < rho``; requires ``mesh < rho``."""
    rho = float(rho)
    if not rho > P.mesh:
        raise ValueError(f"rho={rho} must exceed the mesh {P.mesh:.6g}")
    if P.mesh >= rho / 3:
        log.warning("mesh %.4g >= rho/3 = %.4g: generator estimates do not apply", P.mesh, rho / 3)
    if P.kind == "grid":
        G = _build_grid(P, rho)
    elif P.kind == "circle":
        G = _build_circle(P, rho)
    else:
        G = _build_model2d(P, rho)
    G.nvol = G.neighborhood_sum(P.volume)
    return G


def neighborhood_union_volume(G: ProximityGraph, ids) -> float:
    """Volume of the union of the given cells (disjoint, so a plain sum)."""
    ids = np.unique(np.asarray(list(ids), dtype=np.int64))
    if len(ids) == 0:
        raise ValueError("empty cell set")
    return math.fsum(G.partition.volume[ids])
