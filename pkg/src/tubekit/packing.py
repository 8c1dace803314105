"""Constructive packing of essentially distinct tubes into ``E x [0, 2]``.

Directions come from a separated net in the upper cap. Vertical tubes sit on
a ``2 delta`` lattice; a tilted direction ``sin(t) xi + cos(t) e_n`` is handled
slice by slice: each ``delta``-thick slab orthogonal to ``xi`` whose central
chord through the eroded set is at least ``t`` long receives a vertical stack
of ``floor(c t / delta)`` parallel tubes. Every emitted tube is verified to lie
inside ``E x [0, 2]`` with an exact capsule-in-voxels test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PreconditionError
from .nets import cap_net
from .tubes import DEFAULT_C0, TubeFamily, perp_basis
from .xray import VoxelSet, convexity_index, set_diameter

SEP_FACTOR = 2.2
STACK_CONSTANT = 0.25
STACK_PITCH = 4.0


@dataclass(frozen=True)
class DiscretizedSet:
    """A voxel set together with its claimed dilation radius."""
    voxels: VoxelSet
    radius: float

    @property
    def m(self) -> int:
        return self.voxels.m

    @property
    def diameter(self) -> float:
        return set_diameter(self.voxels)

    def defect(self) -> float:
        """Fraction of ``|E|`` not covered by radius-``radius`` balls inside E."""
        return discretization_defect(self.voxels, self.radius)


def _disk(m: int, k: int) -> np.ndarray:
    g = np.arange(-k, k + 1)
    G = np.meshgrid(*([g] * m), indexing="ij")
    return sum(x * x for x in G) <= k * k


def discretization_defect(E: VoxelSet, radius: float) -> float:
    """Relative volume of ``E`` minus its opening by a ball of ``radius``."""
    k = int(round(radius / E.h))
    if k < 1 or not E.count:
        return 0.0
    pad = np.pad(E.mask, k + 1)
    opened = ndimage.binary_opening(pad, structure=_disk(E.m, k))
    return float(np.count_nonzero(pad & ~opened)) / E.count


def inradius(E: VoxelSet) -> float:
    """Lower bound for the largest ball radius inside the voxel union."""
    if not E.count:
        return 0.0
    d = ndimage.distance_transform_edt(np.pad(E.mask, 1)) * E.h
    return float(d.max() - E.h * math.sqrt(E.m) / 2) if E.m > 1 else float(d.max() - E.h / 2)


# ---------------------------------------------------------------- exact containment

def _box_segment_dist2(lo: np.ndarray, hi: np.ndarray, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Squared distance from each axis-aligned box ``[lo_i, hi_i]`` to segment ``p0 p1``.

    Exact for dimension 1 and 2; for higher dimensions the value is a lower
    bound (center distance minus half-diagonal), which keeps containment
    tests conservative.
    """
    m = lo.shape[1]
    d = p1 - p0
    dd = float(d @ d)

    def pt_seg(P):
        if dd == 0:
            t = np.zeros(len(P))
        else:
            t = np.clip((P - p0) @ d / dd, 0, 1)
        Q = p0 + t[:, None] * d
        return np.sum((P - Q) ** 2, axis=1)

    def pt_box(p):
        q = np.clip(p, lo, hi)
        return np.sum((q - p) ** 2, axis=1)

    if m == 1:
        a, b = min(p0[0], p1[0]), max(p0[0], p1[0])
        gap = np.maximum(0.0, np.maximum(lo[:, 0] - b, a - hi[:, 0]))
        return gap * gap
    if m == 2:
        corners = [np.stack([x, y], axis=1) for x in (lo[:, 0], hi[:, 0]) for y in (lo[:, 1], hi[:, 1])]
        best = np.minimum(pt_box(p0), pt_box(p1))
        for C in corners:
            best = np.minimum(best, pt_seg(C))
        # segment crossing the box interior
        best[_segment_hits_boxes(lo, hi, p0, p1)] = 0.0
        return best
    c = (lo + hi) / 2
    half = np.linalg.norm(hi - lo, axis=1) / 2
    return np.maximum(0.0, np.sqrt(pt_seg(c)) - half) ** 2


def _segment_hits_boxes(lo, hi, p0, p1) -> np.ndarray:
    d = p1 - p0
    t0 = np.zeros(len(lo))
    t1 = np.ones(len(lo))
    for j in range(lo.shape[1]):
        if abs(d[j]) < 1e-300:
            out = (p0[j] < lo[:, j]) | (p0[j] > hi[:, j])
            t1 = np.where(out, -1.0, t1)
            continue
        a = (lo[:, j] - p0[j]) / d[j]
        b = (hi[:, j] - p0[j]) / d[j]
        t0 = np.maximum(t0, np.minimum(a, b))
        t1 = np.minimum(t1, np.maximum(a, b))
    return t0 <= t1


def capsule_in_voxels(E: VoxelSet, p0, p1, r: float) -> bool:
    """Whether the set of points within ``r`` of segment ``p0 p1`` lies in the voxel union."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    lo_b = np.minimum(p0, p1) - r
    hi_b = np.maximum(p0, p1) + r
    if np.any(lo_b < E.lo - 1e-12) or np.any(hi_b > E.hi + 1e-12):
        return False
    a = np.maximum(np.floor((lo_b - E.lo) / E.h).astype(int), 0)
    b = np.minimum(np.ceil((hi_b - E.lo) / E.h).astype(int), E.mask.shape)
    sub = E.mask[tuple(slice(i, j) for i, j in zip(a, b))]
    if sub.all():
        return True
    idx = np.argwhere(~sub) + a
    vlo = E.lo + idx * E.h
    d2 = _box_segment_dist2(vlo, vlo + E.h, p0, p1)
    return not np.any(d2 < r * r * (1 - 1e-9))


def tube_in_cylinder(E: VoxelSet, center, axis, delta: float, height: float = 1.0,
                     z_range=(0.0, 2.0)) -> bool:
    """Exact test that a tube lies inside ``E x z_range``."""
    c = np.asarray(center, dtype=float)
    e = np.asarray(axis, dtype=float)
    r = delta / 2
    sin_t = math.sqrt(max(0.0, 1 - e[-1] ** 2))
    zext = height / 2 * abs(e[-1]) + r * sin_t
    if c[-1] - zext < z_range[0] - 1e-12 or c[-1] + zext > z_range[1] + 1e-12:
        return False
    half = height / 2 * e[:-1]
    return capsule_in_voxels(E, c[:-1] - half, c[:-1] + half, r)


# ---------------------------------------------------------------- the packer

def _as_voxels(E) -> VoxelSet:
    return E.voxels if isinstance(E, DiscretizedSet) else E


def _check_input(E: VoxelSet, delta: float, n: int, *, check_convex: bool, discretized: float | None,
                 budget: int, seed: int) -> None:
    if E.m != n - 1:
        raise PreconditionError("cross-section dimension must be n-1", m=E.m, n=n)
    if not E.count:
        raise PreconditionError("empty cross-section")
    if not delta > 0:
        raise PreconditionError("delta must be positive", delta=delta)
    N = (E.volume / delta ** (n - 1)) ** 2
    if N < 1 - 1e-9:
        raise PreconditionError("|E| is too small for any N >= 1", volume=E.volume, N=N)
    diam = set_diameter(E)
    if diam > 1 + 1e-9:
        raise PreconditionError("diameter of E exceeds 1", diameter=diam)
    if check_convex:
        if E.m == 1:
            idx = np.flatnonzero(E.mask)
            if idx[-1] - idx[0] + 1 != len(idx):
                raise PreconditionError("E is not convex (not an interval)")
        else:
            rep = convexity_index(E, budget, seed)
            if rep.index < 0.9:
                raise PreconditionError("E is not convex enough", convexity_index=rep.index)
    if discretized is not None and inradius(E) < discretized * delta - 1e-12:
        raise PreconditionError("E does not contain a ball of the discretization radius",
                                required=discretized * delta)


def _eroded(E: VoxelSet, margin: float) -> np.ndarray:
    """Cells whose centers are at least ``margin`` from the complement (grid estimate)."""
    d = ndimage.distance_transform_edt(np.pad(E.mask, 1))[tuple([slice(1, -1)] * E.m)] * E.h
    return d - E.h / 2 >= margin


def _lookup(E: VoxelSet, mask: np.ndarray, X: np.ndarray) -> np.ndarray:
    idx = np.floor((X - E.lo) / E.h).astype(int)
    ok = np.all((idx >= 0) & (idx < mask.shape), axis=1)
    out = np.zeros(len(X), dtype=bool)
    out[ok] = mask[tuple(idx[ok].T)]
    return out


def _vertical(E: VoxelSet, delta: float, n: int) -> np.ndarray:
    """Centers of vertical tubes on a ``2 delta`` lattice anchored at the centroid of E."""
    m = n - 1
    pitch = 2 * delta
    c = E.centers().mean(axis=0)
    lo, hi = E.support_box()
    ks = [np.arange(math.floor((lo[j] - c[j]) / pitch), math.ceil((hi[j] - c[j]) / pitch) + 1)
          for j in range(m)]
    P = c + pitch * np.stack([a.ravel() for a in np.meshgrid(*ks, indexing="ij")], axis=1)
    return np.hstack([P, np.ones((len(P), 1))])


def _chords(E: VoxelSet, mask: np.ndarray, bases: np.ndarray, xi: np.ndarray, span: float) -> np.ndarray:
    """Longest run of each line ``base + s xi`` inside ``mask``, sampled at step h.

    Returns ``(k, 2)`` endpoints; rows without any inside sample are NaN.
    """
    step = E.h
    s = np.arange(-span, span + step, step)
    out = np.full((len(bases), 2), np.nan)
    chunk = max(1, 1_000_000 // len(s))
    for c0 in range(0, len(bases), chunk):
        B = bases[c0:c0 + chunk]
        X = B[:, None, :] + s[None, :, None] * xi
        inside = _lookup(E, mask, X.reshape(-1, E.m)).reshape(len(B), len(s))
        prev = np.zeros_like(inside)
        prev[:, 1:] = inside[:, :-1]
        j = np.arange(len(s))
        start = np.maximum.accumulate(np.where(inside & ~prev, j, -1), axis=1)
        length = np.where(inside, j - start + 1, 0)
        end = np.argmax(length, axis=1)
        rows = np.flatnonzero(length[np.arange(len(B)), end] > 0)
        out[c0 + rows, 0] = s[start[rows, end[rows]]]
        out[c0 + rows, 1] = s[end[rows]]
    return out


def _tilted(E: VoxelSet, Ep: np.ndarray, e: np.ndarray, delta: float, c: float, pitch: float) -> np.ndarray:
    n = e.size
    m = n - 1
    sin_t = float(np.linalg.norm(e[:-1]))
    theta = math.asin(min(1.0, sin_t))
    cos_t = abs(e[-1])
    xi = e[:-1] / sin_t
    k_per = int(math.floor(c * theta / delta + 1e-9))
    r = delta / 2
    avail = 2 - cos_t - 2 * r * sin_t
    zpitch = pitch * delta / sin_t
    k_fit = int(math.floor(avail / zpitch + 1e-9)) + 1 if avail >= 0 else 0
    k = min(k_per, k_fit)
    if k < 1:
        return np.zeros((0, n))
    lo, hi = E.support_box()
    corners = np.array(np.meshgrid(*[[lo[j], hi[j]] for j in range(m)], indexing="ij")).reshape(m, -1).T
    span = float(np.max(np.abs(corners @ xi))) + E.h
    if m == 1:
        bases = np.zeros((1, 1))
    else:
        B = perp_basis(xi)            # rows span xi-perp inside R^m
        proj = corners @ B.T
        ranges = [np.arange(math.floor(proj[:, j].min() / delta), math.ceil(proj[:, j].max() / delta))
                  for j in range(m - 1)]
        W = np.stack([a.ravel() for a in np.meshgrid(*ranges, indexing="ij")], axis=1)
        bases = ((W + 0.5) * delta) @ B
    ch = _chords(E, Ep, bases, xi, span)
    good = np.flatnonzero(ch[:, 1] - ch[:, 0] >= theta)
    if not len(good):
        return np.zeros((0, n))
    mids = bases[good] + ((ch[good, 0] + ch[good, 1]) / 2)[:, None] * xi
    zs = 1.0 + (np.arange(k) - (k - 1) / 2) * zpitch
    H = np.repeat(mids, k, axis=0)
    Z = np.tile(zs, len(mids))[:, None]
    return np.hstack([H, Z])


def _directions(E: VoxelSet, delta: float, n: int, sep: float) -> np.ndarray:
    diam = min(set_diameter(E), 1.0)
    tmax = min(math.asin(diam), math.pi / 2 - 1e-6)
    en = np.zeros(n)
    en[-1] = 1.0
    D = cap_net(en, tmax, sep)
    D = D * np.where(D[:, -1] < 0, -1.0, 1.0)[:, None]
    return D


def _pack_direction(E: VoxelSet, Ep: np.ndarray, e: np.ndarray, delta: float, c: float, pitch: float):
    n = e.size
    if np.linalg.norm(e[:-1]) < 1e-12:
        C = _vertical(E, delta, n)
    else:
        C = _tilted(E, Ep, e, delta, c, pitch)
    if not len(C):
        return C
    # tubes in a stack share their projection; test each capsule once
    r = delta / 2
    sin_t = math.sqrt(max(0.0, 1 - e[-1] ** 2))
    zext = abs(e[-1]) / 2 + r * sin_t
    ok_z = (C[:, -1] - zext >= -1e-12) & (C[:, -1] + zext <= 2 + 1e-12)
    _, first, inv = np.unique(np.round(C[:, :-1], 12), axis=0, return_index=True, return_inverse=True)
    half = e[:-1] / 2
    ok_h = np.array([capsule_in_voxels(E, q - half, q + half, r) for q in C[first, :-1]])
    return C[ok_z & ok_h[inv.ravel()]]


def direction_count(E, e, delta: float, *, c: float = STACK_CONSTANT, pitch: float = STACK_PITCH) -> int:
    """Number of tubes the packer places in direction ``e``."""
    V = _as_voxels(E)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    if e[-1] < 0:
        e = -e
    if V.m != e.size - 1:
        raise PreconditionError("direction dimension must be m+1", m=V.m, n=e.size)
    Ep = _eroded(V, 2 * delta)
    return len(_pack_direction(V, Ep, e, delta, c, pitch))


def pack_tubes(E, delta: float, n: int, *, c: float = STACK_CONSTANT, pitch: float = STACK_PITCH,
               sep_factor: float = SEP_FACTOR, check_convex: bool = True, discretized: float | None = 9.0,
               c0: float = DEFAULT_C0, budget: int = 200_000, seed: int = 0) -> TubeFamily:
    """Place essentially distinct delta-tubes of height 1 into ``E x [0, 2]``.

    ``discretized`` is the required inradius in units of delta (``None``
    skips the check). Tubes in one direction are at least ``pitch * delta``
    apart and distinct directions are ``sep_factor * delta`` apart, which
    certifies distinctness at ``c0 = 1/2``.
    """
    V = _as_voxels(E)
    _check_input(V, delta, n, check_convex=check_convex, discretized=discretized, budget=budget, seed=seed)
    Ep = _eroded(V, 2 * delta)
    centers, axes = [], []
    for e in _directions(V, delta, n, sep_factor * delta):
        C = _pack_direction(V, Ep, e, delta, c, pitch)
        if len(C):
            centers.append(C)
            axes.append(np.repeat(e[None, :], len(C), axis=0))
    if not centers:
        return TubeFamily(n, delta, (), c0)
    return TubeFamily.from_arrays(np.vstack(centers), np.vstack(axes), delta, 1.0, c0)


def target_count(E, delta: float, n: int) -> float:
    """``N`` implied by ``|E| = sqrt(N) delta^(n-1)``."""
    V = _as_voxels(E)
    return (V.volume / delta ** (n - 1)) ** 2
