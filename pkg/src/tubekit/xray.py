"""Voxel sets, line sections and the convexity index.

Lines in R^m are parametrized by a direction xi (modulo sign) and an offset
x in the orthogonal complement of xi; the line measure is the product of the
surface measure on the half sphere and Lebesgue measure on that complement.
For convex K the power integral of section lengths equals m(m+1)|K|^2/2.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ._kernels import chord_lengths
from .errors import PreconditionError, SchemaError
from .measure import resolve_threads
from .nets import ball_surface

CHUNK = 1 << 16
Z95 = 1.959963984540054


@dataclass(frozen=True, eq=False)
class VoxelSet:
    origin: tuple
    h: float
    mask: np.ndarray

    def __post_init__(self):
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "h", float(self.h))
        if len(self.origin) != mask.ndim:
            raise PreconditionError("origin and mask dimensions differ")
        if not self.h > 0:
            raise PreconditionError("cell size must be positive", h=self.h)

    @property
    def m(self) -> int:
        return self.mask.ndim

    @cached_property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def volume(self) -> float:
        return self.h ** self.m * self.count

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + np.array(self.mask.shape) * self.h

    def centers(self) -> np.ndarray:
        """Centers of occupied cells."""
        idx = np.argwhere(self.mask)
        return self.lo + (idx + 0.5) * self.h

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.argwhere(self.mask)
        if not len(idx):
            raise PreconditionError("empty voxel set")
        return self.lo + idx.min(axis=0) * self.h, self.lo + (idx.max(axis=0) + 1) * self.h

    def cropped(self) -> "VoxelSet":
        idx = np.argwhere(self.mask)
        if not len(idx):
            return self
        a, b = idx.min(axis=0), idx.max(axis=0) + 1
        sl = tuple(slice(i, j) for i, j in zip(a, b))
        return VoxelSet(tuple(self.lo + a * self.h), self.h, self.mask[sl])

    def union(self, other: "VoxelSet") -> "VoxelSet":
        """Union on a common grid (both sets must share h and grid alignment)."""
        if abs(other.h - self.h) > 1e-15:
            raise PreconditionError("voxel sets must share the cell size")
        lo = np.minimum(self.lo, other.lo)
        hi = np.maximum(self.hi, other.hi)
        shape = tuple(np.round((hi - lo) / self.h).astype(int))
        mask = np.zeros(shape, dtype=bool)
        for v in (self, other):
            a = np.round((v.lo - lo) / self.h).astype(int)
            sl = tuple(slice(i, i + s) for i, s in zip(a, v.mask.shape))
            mask[sl] |= v.mask
        return VoxelSet(tuple(lo), self.h, mask)


def rasterize(indicator: Callable[[np.ndarray], np.ndarray], lo, hi, h: float) -> VoxelSet:
    """Voxel set of cells (side ``h``, grid anchored at ``lo``) whose centers satisfy ``indicator``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    shape = np.maximum(1, np.ceil((hi - lo) / h - 1e-9).astype(int))
    axes = [lo[j] + (np.arange(shape[j]) + 0.5) * h for j in range(len(lo))]
    grids = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    mask = np.asarray(indicator(X), dtype=bool).reshape(tuple(shape))
    return VoxelSet(tuple(lo), h, mask)


def ball_set(m: int, radius: float, h: float, center=None) -> VoxelSet:
    c = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    return rasterize(lambda X: np.sum((X - c) ** 2, axis=1) <= radius ** 2, c - radius, c + radius, h)


def box_set(lo, hi, h: float) -> VoxelSet:
    return rasterize(lambda X: np.ones(len(X), bool), lo, hi, h)


# ---------------------------------------------------------------- VOX1 I/O

def dumps_vox(E: VoxelSet) -> str:
    m = E.m
    head = ["VOX1", str(m), *map(str, E.mask.shape), repr(E.h), *map(repr, E.origin)]
    rows = E.mask.reshape(-1, E.mask.shape[-1])
    chars = np.where(rows, ord("1"), ord("0")).astype(np.uint8)
    body = [r.tobytes().decode() for r in chars]
    if m == 3:
        k = E.mask.shape[1]
        body = ["\n".join(body[i:i + k]) for i in range(0, len(body), k)]
        return " ".join(head) + "\n" + "\n\n".join(body) + "\n"
    return "\n".join([" ".join(head), *body]) + "\n"


def loads_vox(text: str) -> VoxelSet:
    lines = text.splitlines()
    if not lines:
        raise SchemaError("empty VOX1 document", line=1)
    head = lines[0].split()
    if not head or head[0] != "VOX1":
        raise SchemaError("missing VOX1 header", line=1)
    try:
        m = int(head[1])
    except (IndexError, ValueError):
        raise SchemaError("bad dimension in header", line=1) from None
    if m not in (1, 2, 3):
        raise SchemaError("VOX1 supports m = 1, 2 or 3", line=1, m=m)
    if len(head) != 2 + m + 1 + m:
        raise SchemaError("header field count mismatch", line=1)
    try:
        dims = [int(x) for x in head[2:2 + m]]
        h = float(head[2 + m])
        origin = [float(x) for x in head[3 + m:]]
    except ValueError:
        raise SchemaError("non-numeric header field", line=1) from None
    if min(dims) < 1 or not h > 0:
        raise SchemaError("dimensions and cell size must be positive", line=1)
    rows, expect_rows = [], int(np.prod(dims[:-1]))
    per_plane = dims[1] if m == 3 else expect_rows
    for lineno, line in enumerate(lines[1:], start=2):
        if line.strip() == "":
            if m == 3 and rows and len(rows) % per_plane == 0:
                continue
            if len(rows) == expect_rows:
                continue
            raise SchemaError("unexpected blank line", line=lineno, row=len(rows))
        s = line.strip()
        if len(s) != dims[-1] or set(s) - {"0", "1"}:
            raise SchemaError("row must be %d characters of 0/1" % dims[-1], line=lineno, row=len(rows))
        rows.append(s)
        if len(rows) > expect_rows:
            raise SchemaError("too many rows", line=lineno, row=len(rows) - 1)
    if len(rows) != expect_rows:
        raise SchemaError("too few rows", line=len(lines), row=len(rows))
    arr = np.frombuffer("".join(rows).encode(), dtype=np.uint8) == ord("1")
    return VoxelSet(tuple(origin), h, arr.reshape(dims))


def load_vox(path) -> VoxelSet:
    with open(path) as fh:
        return loads_vox(fh.read())


def save_vox(E: VoxelSet, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_vox(E))


# ---------------------------------------------------------------- lines

@dataclass(frozen=True)
class LineSample:
    direction: tuple
    offset: tuple
    weight: float = 1.0

    def __post_init__(self):
        xi = np.asarray(self.direction, dtype=float)
        x = np.asarray(self.offset, dtype=float)
        if abs(float(xi @ x)) > 1e-10:
            raise PreconditionError("line offset must be orthogonal to its direction")


def _lines_chords(E: VoxelSet, P: np.ndarray, D: np.ndarray) -> np.ndarray:
    flat = E.mask.ravel()
    shape = np.array(E.mask.shape, dtype=np.int64)
    strides = np.array([s // E.mask.itemsize for s in E.mask.strides], dtype=np.int64)
    return chord_lengths(flat, shape, strides, E.lo, E.h,
                         np.ascontiguousarray(P, dtype=float), np.ascontiguousarray(D, dtype=float))


def xray_line(E: VoxelSet, line: LineSample) -> float:
    """``|E & line|`` by exact cell traversal."""
    d = np.asarray(line.direction, dtype=float)
    d = d / np.linalg.norm(d)
    return float(_lines_chords(E, np.asarray(line.offset, dtype=float)[None, :], d[None, :])[0])


def _directions(m: int, K: int, seed: int) -> np.ndarray:
    """K low-discrepancy directions, uniform on the half sphere, randomly rotated."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2 ** 31,)))
    i = np.arange(K) + 0.5
    if m == 2:
        phi = math.pi * (i / K + rng.random())
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    z = 1 - i / K
    phi = math.pi * (3 - math.sqrt(5)) * np.arange(K)
    s = np.sqrt(np.clip(1 - z * z, 0, None))
    D = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    if m > 3:
        D = rng.standard_normal((K, m))
        return D / np.linalg.norm(D, axis=1, keepdims=True)
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    return D @ Q.T


def _perp_frames(D: np.ndarray) -> np.ndarray:
    """(K, m-1, m) orthonormal bases of the complements of the rows of D
    (vectorized Householder reflections, matching ``perp_basis``)."""
    K, m = D.shape
    v = D.copy()
    v[:, -1] -= 1.0
    vv = np.einsum("ij,ij->i", v, v)
    safe = np.where(vv < 1e-24, 1.0, vv)
    H = np.eye(m)[None] - 2.0 * v[:, :, None] * v[:, None, :] / safe[:, None, None]
    H[vv < 1e-24] = np.eye(m)
    return np.transpose(H[:, :, : m - 1], (0, 2, 1))


def _power_stream(E: VoxelSet, D: np.ndarray, corners: np.ndarray, power: int,
                  seed: int, stream: int) -> tuple[np.longdouble, np.longdouble]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))
    B = _perp_frames(D)
    proj = np.einsum("kjm,cm->kcj", B, corners)
    plo, phi = proj.min(axis=1), proj.max(axis=1)
    area = np.prod(phi - plo, axis=1)
    u = plo + rng.random(plo.shape) * (phi - plo)
    P = np.einsum("kj,kjm->km", u, B)
    L = _lines_chords(E, P, D).astype(np.longdouble)
    val = area.astype(np.longdouble) * L ** power
    return val.sum(), (val * val).sum()


@dataclass(frozen=True)
class ConvexityReport:
    index: float
    abs_error_95: float
    line_samples: int
    volume: float
    power_integral: float
    power_error_95: float = 0.0

    def to_dict(self) -> dict:
        return {"index": self.index, "abs_error_95": self.abs_error_95, "line_samples": self.line_samples,
                "volume": self.volume, "power_integral": self.power_integral,
                "power_error_95": self.power_error_95}


def _box_corners(lo, hi) -> np.ndarray:
    return np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(len(lo), -1).T


def _sampling_box(E: VoxelSet) -> np.ndarray:
    """Corners of a box containing E: the smaller of the coordinate box and
    the principal-axis box of the cell centers grown by half a cell diagonal."""
    lo, hi = E.support_box()
    best = _box_corners(lo, hi)
    X = E.centers()
    if len(X) > E.m:
        mu = X.mean(axis=0)
        _, _, Vt = np.linalg.svd(X - mu, full_matrices=False)
        Y = (X - mu) @ Vt.T
        r = E.h * math.sqrt(E.m) / 2
        plo, phi = Y.min(axis=0) - r, Y.max(axis=0) + r
        if np.prod(phi - plo) < np.prod(hi - lo):
            best = mu + _box_corners(plo, phi) @ Vt
    return best


def power_integral(E: VoxelSet, budget: int = 1_000_000, seed: int = 0,
                   threads: int | None = None, power: int | None = None) -> tuple[float, float, int]:
    """Monte Carlo estimate of the line integral of ``|E_l|^power`` (default m+1).

    Returns ``(estimate, 95% half-width, samples)``. Offsets are drawn in the
    projection of a box containing ``E`` (coordinate or principal-axis,
    whichever is smaller) onto each direction's complement, which contains
    every line meeting ``E``.
    """
    m = E.m
    if m < 2:
        raise PreconditionError("line integrals need dimension m >= 2", m=m)
    if E.count == 0:
        raise PreconditionError("convexity index undefined for an empty set")
    power = m + 1 if power is None else power
    K = int(budget)
    corners = _sampling_box(E)
    D = _directions(m, K, seed)
    chunks = [(s, min(K, s + CHUNK)) for s in range(0, K, CHUNK)]
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        parts = list(pool.map(lambda c: _power_stream(E, D[c[0]:c[1]], corners, power, seed, c[0] // CHUNK),
                              chunks))
    s1 = sum((p[0] for p in parts), np.longdouble(0))
    s2 = sum((p[1] for p in parts), np.longdouble(0))
    scale = ball_surface(m) / 2
    mean = s1 / K
    var = max(s2 / K - mean * mean, np.longdouble(0)) * K / max(K - 1, 1)
    return float(scale * mean), float(scale * Z95 * np.sqrt(var / K)), K


def convexity_index(E: VoxelSet, budget: int = 1_000_000, seed: int = 0,
                    threads: int | None = None) -> ConvexityReport:
    m = E.m
    P, err, K = power_integral(E, budget, seed, threads)
    V = E.volume
    norm = 2.0 / (m * (m + 1) * V * V)
    return ConvexityReport(P * norm, err * norm, K, V, P, err)


def ren_identity_check(E: VoxelSet, budget: int = 1_000_000, seed: int = 0,
                       threads: int | None = None) -> tuple[float, float, float]:
    """Returns ``(lhs, rhs, lhs/rhs)`` with ``rhs = m(m+1)|E|^2/2``."""
    lhs, _, _ = power_integral(E, budget, seed, threads)
    rhs = E.m * (E.m + 1) * E.volume ** 2 / 2
    return lhs, rhs, lhs / rhs


def affine_image(E: VoxelSet, A, b=None, h: float | None = None) -> VoxelSet:
    """Rasterize ``A E + b`` by inverse-mapping cell centers (nearest cell)."""
    A = np.asarray(A, dtype=float)
    m = E.m
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
    if A.shape != (m, m) or abs(np.linalg.det(A)) < 1e-12:
        raise PreconditionError("affine map must be a nonsingular m x m matrix")
    if h is None:
        h = E.h * float(np.linalg.svd(A, compute_uv=False).min())
    lo, hi = E.support_box()
    corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(m, -1).T @ A.T + b
    Ainv = np.linalg.inv(A)
    shape = tuple(np.shape(E.mask))

    def ind(X):
        Y = (X - b) @ Ainv.T
        idx = np.floor((Y - E.lo) / E.h).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < np.array(shape)), axis=1)
        out = np.zeros(len(X), dtype=bool)
        out[ok] = E.mask[tuple(idx[ok].T)]
        return out

    return rasterize(ind, corners.min(axis=0) - h, corners.max(axis=0) + h, h)


def affine_invariance_check(E: VoxelSet, A, b=None, budget: int = 200_000, seed: int = 0,
                            threads: int | None = None) -> tuple[ConvexityReport, ConvexityReport]:
    AE = affine_image(E, A, b)
    return convexity_index(E, budget, seed, threads), convexity_index(AE, budget, seed, threads)


# ---------------------------------------------------------------- convex core

@dataclass(frozen=True)
class CoreResult:
    found: bool
    frame: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    density: float
    coverage: float
    score: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "score", min(self.density, self.coverage))

    def contains(self, X) -> np.ndarray:
        U = np.atleast_2d(X) @ self.frame
        return np.all((U >= self.lo) & (U <= self.hi), axis=1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def to_dict(self) -> dict:
        return {"found": self.found, "frame": self.frame.tolist(), "lo": self.lo.tolist(),
                "hi": self.hi.tolist(), "density": self.density, "coverage": self.coverage,
                "score": self.score}


def _descend(U: np.ndarray, cell_vol: float, total: float, h: float, max_rounds: int = 60):
    lo = U.min(axis=0) - h / 2
    hi = U.max(axis=0) + h / 2

    def score(a, b):
        inside = np.count_nonzero(np.all((U >= a) & (U <= b), axis=1)) * cell_vol
        vol = float(np.prod(b - a))
        if vol <= 0:
            return -1.0, 0.0, 0.0
        dens, cov = min(1.0, inside / vol), inside / total
        return min(dens, cov), dens, cov

    best = score(lo, hi)
    stepsize = float((hi - lo).max()) / 2
    m = U.shape[1]
    while stepsize >= h / 2:
        improved = True
        rounds = 0
        while improved and rounds < max_rounds:
            improved = False
            rounds += 1
            for j in range(m):
                for side in (0, 1):
                    for sign in (1, -1):
                        a, b = lo.copy(), hi.copy()
                        if side == 0:
                            a[j] += sign * stepsize
                        else:
                            b[j] -= sign * stepsize
                        if a[j] >= b[j]:
                            continue
                        cand = score(a, b)
                        if cand[0] > best[0] + 1e-12:
                            best, lo, hi, improved = cand, a, b, True
        stepsize /= 2
    return lo, hi, best


def find_convex_core(E: VoxelSet, c_min: float = 0.9, threshold: float = 0.5, *,
                     index: ConvexityReport | None = None, budget: int = 100_000,
                     seed: int = 0) -> CoreResult:
    """Box ``F`` (in the coordinate or principal-axis frame) maximizing
    ``min(|F & E|/|F|, |F & E|/|E|)``.

    Runs only when the convexity index is at least ``c_min``; ``found`` is
    False when the best box scores below ``threshold`` (the best box is still
    returned).
    """
    rep = index or convexity_index(E, budget, seed)
    if rep.index < c_min:
        raise PreconditionError("convexity index below the gate", index=rep.index, c_min=c_min)
    X = E.centers()
    cell = E.h ** E.m
    total = E.volume
    frames = [np.eye(E.m)]
    if len(X) > E.m:
        _, _, Vt = np.linalg.svd(X - X.mean(axis=0), full_matrices=False)
        frames.append(Vt.T)
    best = None
    for Q in frames:
        lo, hi, sc = _descend(X @ Q, cell, total, E.h)
        if best is None or sc[0] > best[3][0] + 1e-9:
            best = (Q, lo, hi, sc)
    Q, lo, hi, sc = best
    return CoreResult(sc[0] >= threshold, Q, lo, hi, sc[1], sc[2])


# ---------------------------------------------------------------- shifted intersections

def _shift_and(mask: np.ndarray, k: int) -> np.ndarray:
    """Cells x with x in E and x - k e_i in E for every axis i."""
    out = mask.copy()
    if k == 0:
        return out
    for ax in range(mask.ndim):
        shifted = np.zeros_like(mask)
        src = [slice(None)] * mask.ndim
        dst = [slice(None)] * mask.ndim
        if k > 0:
            dst[ax], src[ax] = slice(k, None), slice(None, -k)
        else:
            dst[ax], src[ax] = slice(None, k), slice(-k, None)
        shifted[tuple(dst)] = mask[tuple(src)]
        out &= shifted
        if not out.any():
            break
    return out


def set_diameter(E: VoxelSet) -> float:
    X = E.centers()
    if len(X) == 1:
        return E.h * math.sqrt(E.m)
    try:
        V = X[ConvexHull(X).vertices]
    except (QhullError, ValueError):
        V = X
    if len(V) > 4000:
        V = V[:: len(V) // 4000 + 1]
    diff = V[:, None, :] - V[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max()) + E.h * math.sqrt(E.m)


@dataclass(frozen=True)
class ShiftedIntersectionResult:
    lhs: float
    rhs: float
    diameter: float
    slack: float
    holds: bool

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "diameter": self.diameter,
                "slack": self.slack, "holds": self.holds}


def shifted_intersection_check(E: VoxelSet, slack: float = 0.05) -> ShiftedIntersectionResult:
    """Integrate ``|E_t|`` over integer-cell shifts ``t = k h`` and compare
    with ``2 (d^(m-1) |E|^(2m))^(1/(2m-1))``."""
    if E.count == 0:
        raise PreconditionError("empty voxel set")
    E = E.cropped()
    m, h = E.m, E.h
    cell = h ** m
    lhs = 0.0
    kmax = max(E.mask.shape)
    for k in range(-kmax, kmax + 1):
        c = np.count_nonzero(_shift_and(E.mask, k))
        lhs += c * cell * h
    d = set_diameter(E)
    rhs = 2 * (d ** (m - 1) * E.volume ** (2 * m)) ** (1 / (2 * m - 1))
    return ShiftedIntersectionResult(lhs, rhs, d, slack, lhs <= rhs * (1 + slack))
