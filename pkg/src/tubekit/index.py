"""Cell hashing of tube families for fast point-in-union queries."""
from __future__ import annotations

import math

import numpy as np

from ._kernels import tube_cells
from .tubes import TubeFamily


def cells_near_tubes(centers, axes, heights, radius: float, inflate: float, g: float):
    """Integer cells ``k`` whose centers ``(k + 1/2) g`` lie in some tube
    inflated by ``inflate`` (axial half-length ``h/2 + inflate``, radius
    ``radius + inflate``). Negative ``inflate`` shrinks.

    Returns ``(tube_ids, cells)`` with unique (tube, cell) rows, tube-major.
    """
    centers = np.ascontiguousarray(centers, dtype=float)
    axes = np.ascontiguousarray(axes, dtype=float)
    heights = np.ascontiguousarray(heights, dtype=float)
    N, n = centers.shape
    R = radius + inflate
    if N == 0 or R <= 0:
        return np.empty(0, dtype=np.int64), np.empty((0, n), dtype=np.int64)
    t0 = np.empty(0, np.int64)
    k0 = np.empty((0, n), np.int64)
    total = tube_cells(centers, axes, heights, R, inflate, g, False, t0, k0)
    tids = np.empty(total, np.int64)
    cells = np.empty((total, n), np.int64)
    tube_cells(centers, axes, heights, R, inflate, g, True, tids, cells)
    return tids, cells


class CellKeys:
    """Mixed-radix encoding of integer cells inside a fixed box."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.int64)
        self.ext = np.asarray(hi, dtype=np.int64) - self.lo + 1
        if float(np.prod(self.ext.astype(float))) >= 2.0 ** 62:
            raise OverflowError("cell box too large to encode")
        self.mult = np.concatenate([np.cumprod(self.ext[::-1])[::-1][1:], [1]]).astype(np.int64)

    def encode(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rel = cells - self.lo
        valid = np.all((rel >= 0) & (rel < self.ext), axis=1)
        return rel @ self.mult, valid

    def decode(self, k: np.ndarray) -> np.ndarray:
        out = np.empty((len(k), len(self.lo)), dtype=np.int64)
        rem = np.asarray(k, dtype=np.int64)
        for j, m in enumerate(self.mult):
            out[:, j], rem = np.divmod(rem, m)
        return out + self.lo


class TubeIndex:
    """Maps grid cells to the tubes that can contain points of that cell."""

    def __init__(self, f: TubeFamily, cell: float | None = None):
        self.f = f
        n = f.n
        self.g = cell if cell is not None else (f.delta / 2 if n <= 3 else f.delta)
        s = self.g * math.sqrt(n) / 2
        tids, cells = cells_near_tubes(f.centers, f.axes, f.heights, f.radius, s, self.g)
        if len(cells):
            self.keys = CellKeys(cells.min(axis=0), cells.max(axis=0))
            k, _ = self.keys.encode(cells)
        else:
            self.keys = CellKeys(np.zeros(n, np.int64), np.zeros(n, np.int64))
            k = np.empty(0, np.int64)
        order = np.argsort(k, kind="stable")
        self.sorted_keys = k[order]
        self.tube_ids = tids[order]
        self.C, self.A, self.H = f.centers, f.axes, f.heights
        self.r2 = f.radius ** 2

    def pairs(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(point index, tube index) for every tube containing the point."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        key, valid = self.keys.encode(np.floor(X / self.g).astype(np.int64))
        lo = np.searchsorted(self.sorted_keys, key, side="left")
        hi = np.searchsorted(self.sorted_keys, key, side="right")
        cnt = np.where(valid, hi - lo, 0)
        total = int(cnt.sum())
        if total == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        pi = np.repeat(np.arange(len(X)), cnt)
        starts = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        ti = self.tube_ids[starts + np.arange(total)]
        d = X[pi] - self.C[ti]
        ax = np.einsum("ij,ij->i", d, self.A[ti])
        rad2 = np.einsum("ij,ij->i", d, d) - ax * ax
        inside = (np.abs(ax) <= self.H[ti] / 2) & (rad2 <= self.r2)
        return pi[inside], ti[inside]

    def counts(self, X: np.ndarray, chunk: int = 1 << 15) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X), dtype=np.int64)
        for s in range(0, len(X), chunk):
            pi, _ = self.pairs(X[s:s + chunk])
            out[s:s + chunk] = np.bincount(pi, minlength=min(chunk, len(X) - s))
        return out
