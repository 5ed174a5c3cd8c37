"""Partitions of the (truncated) manifold into chart rectangles.

Cells are stored column-wise (``lo``, ``hi``, ``ref``, ``volume``, ``diam``) so that
partitions with 10^5 cells stay cheap; :meth:`Partition.cell` materialises one cell.
Index ``-1`` stands for the cemetery in every vectorised lookup.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import as_points
from .geometry import (
    CEMETERY, TWO_PI, Arc, HalfOpenBox, Manifold, PolarRect, cell_volumes, is_cemetery,
)

CELL_LIMIT = 10_000_000


@dataclass(frozen=True, eq=False)
class Cell:
    id: int
    shape: object
    volume: float
    ref_point: np.ndarray
    diameter_bound: float


@dataclass(eq=False)
class Partition:
    manifold: Manifold
    kind: str  # "grid" | "circle" | "model2d"
    lo: np.ndarray
    hi: np.ndarray
    ref: np.ndarray
    volume: np.ndarray
    diam: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.volume)

    @property
    def mesh(self) -> float:
        return float(self.diam.max())

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    @property
    def uniform(self) -> bool:
        """All cells are translates of one another (grids and circle partitions)."""
        return self.kind in ("grid", "circle")

    def shape(self, i: int):
        lo, hi = self.lo[i], self.hi[i]
        if self.kind == "grid":
            return HalfOpenBox(tuple(lo), tuple(hi))
        if self.kind == "circle":
            return Arc(float(lo[0]), float(hi[0]))
        return PolarRect(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))

    def cell(self, i: int) -> Cell:
        i = int(i)
        return Cell(i, self.shape(i), float(self.volume[i]), self.ref[i].copy(), float(self.diam[i]))

    def locate_many(self, X) -> np.ndarray:
        """Cell index for each chart point, ``-1`` outside the truncated window."""
        X = as_points(X, self.dim)
        if self.kind == "grid":
            return _locate_grid(self, X)
        if self.kind == "circle":
            return _locate_circle(self, X)
        return _locate_model2d(self, X)

    def contains(self, X) -> np.ndarray:
        return self.locate_many(X) >= 0

    def total_volume(self) -> float:
        return math.fsum(self.volume)

    def to_csv(self, path) -> None:
        d = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id"] + [f"lo{i}" for i in range(d)] + [f"hi{i}" for i in range(d)]
                       + ["volume"] + [f"ref{i}" for i in range(d)] + ["diameter_bound"])
            for i in range(len(self)):
                w.writerow([i, *map(repr, self.lo[i].tolist()), *map(repr, self.hi[i].tolist()),
                            repr(float(self.volume[i])), *map(repr, self.ref[i].tolist()), repr(float(self.diam[i]))])

    def describe(self) -> dict:
        return {"type": self.kind, "cells": len(self), "mesh": self.mesh,
                **{k: v for k, v in self.meta.items() if isinstance(v, (int, float, list, str))}}


def locate(P: Partition, x):
    """The cell containing ``x``, or ``CEMETERY`` for the cemetery / points off the window."""
    if is_cemetery(x):
        return CEMETERY
    i = int(P.locate_many(x)[0])
    return CEMETERY if i < 0 else P.cell(i)


# ---------------------------------------------------------------------------
# Euclidean grids


def _aligned(v: float, k: int) -> bool:
    return abs(v * k - round(v * k)) <= 1e-9 * max(1.0, abs(v * k))


def grid_partition(n: int, k: int, window: Sequence, manifold: Optional[Manifold] = None) -> Partition:
    """Cubes ``[i/k, (i+1)/k)^n`` tiling an axis-aligned window with faces on the ``1/k`` lattice."""
    if k < 1:
        raise ValueError("k must be >= 1")
    window = [tuple(map(float, w)) for w in window]
    if len(window) != n:
        raise ValueError(f"window has {len(window)} axes, expected {n}")
    if manifold is None:
        manifold = Manifold.euclidean(n)
    if manifold.kind != "euclidean" or manifold.n != n:
        raise ValueError("grid partitions need an n-dimensional Euclidean manifold")
    for a, b in window:
        if not (a < b):
            raise ValueError(f"empty window axis {(a, b)}")
        if not (_aligned(a, k) and _aligned(b, k)):
            raise ValueError(f"window axis {(a, b)} is not aligned to the 1/{k} lattice")
    if manifold.box is not None:
        for (a, b), (c, d) in zip(window, manifold.box):
            if a < c or b > d:
                raise ValueError("window exceeds the manifold domain")
    ilo = np.array([round(a * k) for a, _ in window], dtype=np.int64)
    counts = np.array([round(b * k) for _, b in window], dtype=np.int64) - ilo
    N = int(np.prod(counts))
    if N > CELL_LIMIT:
        raise ValueError(f"grid would have {N} cells (limit {CELL_LIMIT})")
    idx = np.stack(np.unravel_index(np.arange(N), tuple(counts)), axis=1) + ilo
    lo = idx / k
    hi = (idx + 1) / k
    ref = (idx + 0.5) / k
    if manifold.weight is None:
        vol = np.full(N, float(k) ** (-n))
    else:
        vol = cell_volumes(manifold, "box", lo, hi)
    diam = np.full(N, math.sqrt(n) / k)
    meta = {"k": int(k), "ilo": ilo, "counts": counts, "window": [list(w) for w in window]}
    return Partition(manifold, "grid", lo, hi, ref, vol, diam, meta)


def _locate_grid(P: Partition, X: np.ndarray) -> np.ndarray:
    k, ilo, counts = P.meta["k"], P.meta["ilo"], P.meta["counts"]
    i = np.floor(X * k).astype(np.int64)
    # repair float rounding at faces so lookups agree with lo <= x < hi
    i = np.where(X < i / k, i - 1, i)
    i = np.where(X >= (i + 1) / k, i + 1, i)
    j = i - ilo
    ok = np.all((j >= 0) & (j < counts), axis=1) & np.all(np.isfinite(X), axis=1)
    out = np.full(len(X), -1, dtype=np.int64)
    if ok.any():
        out[ok] = np.ravel_multi_index(tuple(j[ok].T), tuple(counts))
    return out


# ---------------------------------------------------------------------------
# circle


def circle_partition(K: int, manifold: Optional[Manifold] = None) -> Partition:
    """``K`` arcs ``[2 pi j/K, 2 pi (j+1)/K)``."""
    if K < 3:
        raise ValueError("circle partitions need K >= 3")
    if K > CELL_LIMIT:
        raise ValueError(f"K={K} exceeds the cell limit")
    if manifold is None:
        manifold = Manifold.circle()
    if manifold.kind != "circle":
        raise ValueError("circle partitions need the circle")
    j = np.arange(K)
    lo = (TWO_PI * j / K)[:, None]
    hi = (TWO_PI * (j + 1) / K)[:, None]
    hi[-1, 0] = TWO_PI
    ref = (TWO_PI * (j + 0.5) / K)[:, None]
    if manifold.weight is None:
        vol = np.full(K, TWO_PI / K)
    else:
        vol = cell_volumes(manifold, "box", lo, hi)
    diam = np.full(K, TWO_PI / K)
    return Partition(manifold, "circle", lo, hi, ref, vol, diam, {"K": int(K)})


def _locate_circle(P: Partition, X: np.ndarray) -> np.ndarray:
    K = P.meta["K"]
    t = np.mod(X[:, 0], TWO_PI)
    j = np.floor(t * K / TWO_PI).astype(np.int64)
    j = np.clip(j, 0, K - 1)
    j = np.where(t < P.lo[j, 0], j - 1, j)
    j = np.where((j < K - 1) & (t >= P.hi[np.clip(j, 0, K - 1), 0]), j + 1, j)
    j = np.mod(j, K)
    return np.where(np.isfinite(X[:, 0]), j, -1)


# ---------------------------------------------------------------------------
# model surfaces


def sectors_per_annulus(M: Manifold, l: int, m: int) -> int:
    """``ceil(l * psi_l(m) * n * pi)`` with ``n = 2`` and ``psi_l(m)`` the max of psi on the annulus."""
    psi_lm = float(M.psi.max_on((m - 1) / l, m / l))
    return max(1, math.ceil(l * psi_lm * 2 * math.pi))


def model2d_partition(M: Manifold, l: int, r_max: float) -> Partition:
    """Annuli of width ``1/l`` split into equal angular sectors (cell diameters <= 2/l)."""
    if M.kind != "model2d":
        raise ValueError("model2d partitions need a model surface")
    if l < 1:
        raise ValueError("l must be >= 1")
    if r_max > M.r0 + 1e-12:
        raise ValueError(f"r_max={r_max} exceeds r0={M.r0}")
    if not _aligned(r_max, l) or r_max <= 0:
        raise ValueError(f"r_max={r_max} is not a positive multiple of 1/{l}")
    n_ann = int(round(r_max * l))
    Ks = [sectors_per_annulus(M, l, m) for m in range(1, n_ann + 1)]
    N = sum(Ks)
    if N > CELL_LIMIT:
        raise ValueError(f"partition would have {N} cells (limit {CELL_LIMIT})")
    lo = np.empty((N, 2))
    hi = np.empty((N, 2))
    diam = np.empty(N)
    offsets = np.zeros(n_ann + 1, dtype=np.int64)
    pos = 0
    for i, K in enumerate(Ks):
        m = i + 1
        j = np.arange(K)
        sl = slice(pos, pos + K)
        lo[sl, 0] = (m - 1) / l
        hi[sl, 0] = m / l
        lo[sl, 1] = TWO_PI * j / K
        hi[sl, 1] = TWO_PI * (j + 1) / K
        hi[pos + K - 1, 1] = TWO_PI
        diam[sl] = 1.0 / l + (TWO_PI / K) * float(M.psi.max_on((m - 1) / l, m / l))
        pos += K
        offsets[i + 1] = pos
    ref = (lo + hi) / 2
    vol = cell_volumes(M, "polar", lo, hi)
    meta = {"l": int(l), "r_max": float(r_max), "Ks": np.array(Ks, dtype=np.int64), "offsets": offsets}
    return Partition(M, "model2d", lo, hi, ref, vol, diam, meta)


def _locate_model2d(P: Partition, X: np.ndarray) -> np.ndarray:
    l, Ks, offsets = P.meta["l"], P.meta["Ks"], P.meta["offsets"]
    n_ann = len(Ks)
    X = P.manifold.canonical(X)
    r, t = X[:, 0], X[:, 1]
    out = np.full(len(X), -1, dtype=np.int64)
    a = np.floor(r * l).astype(np.int64)
    a = np.where(r < a / l, a - 1, a)
    a = np.where(r >= (a + 1) / l, a + 1, a)
    ok = (a >= 0) & (a < n_ann) & np.isfinite(r)
    a_ok = a[ok]
    K = Ks[a_ok]
    tt = t[ok]
    j = np.clip(np.floor(tt * K / TWO_PI).astype(np.int64), 0, K - 1)
    base = offsets[a_ok]
    j = np.where(tt < P.lo[base + j, 1], j - 1, j)
    j = np.where((j < K - 1) & (tt >= P.hi[base + np.clip(j, 0, K - 1), 1]), j + 1, j)
    j = np.mod(j, K)
    out[ok] = base + j
    return out


# ---------------------------------------------------------------------------


def partition_from_config(M: Manifold, spec: dict) -> Partition:
    kind = spec["type"]
    if kind == "grid":
        return grid_partition(M.n, int(spec["k"]), spec["window"], M)
    if kind == "circle":
        return circle_partition(int(spec["K"]), M)
    if kind == "model2d":
        return model2d_partition(M, int(spec["l"]), float(spec["r_max"]))
    raise ValueError(f"unknown partition type {kind!r}")
