"""Exact geometry of delta-tubes.

A tube with center ``a``, unit axis ``e``, cross-section diameter ``delta`` and
height ``h`` is the closed set of points ``x`` with ``|(x - a).e| <= h/2`` and
radial distance from the axis at most ``delta/2`` (flat caps).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import betainc

from .errors import EstimationError, PreconditionError

log = logging.getLogger(__name__)

ASYMPTOTIC_DELTA_MAX = 0.01
DEFAULT_C0 = 0.5
_CANON_TOL = 1e-12


def ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m (1 for m = 0)."""
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def canonicalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm == 0.0:
        raise PreconditionError("direction must be a nonzero finite vector")
    v = v / norm
    nz = np.flatnonzero(np.abs(v) > _CANON_TOL)
    if v[nz[0]] < 0:
        v = -v
    return v


def canonicalize_rows(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    first = np.argmax(np.abs(v) > _CANON_TOL, axis=1)
    sign = np.sign(v[np.arange(len(v)), first])
    return v * sign[:, None]


def perp_basis(e) -> np.ndarray:
    """Rows form an orthonormal basis of the complement of ``e``.

    Uses the Householder reflection sending the last coordinate vector to
    ``e``, so the basis depends continuously on ``e`` away from ``-e_n``.
    """
    e = np.asarray(e, dtype=float)
    n = e.size
    en = np.zeros(n)
    en[-1] = 1.0
    v = e - en
    vv = float(v @ v)
    if vv < 1e-24:
        return np.eye(n)[: n - 1]
    H = np.eye(n) - 2.0 * np.outer(v, v) / vv
    return H[:, : n - 1].T.copy()


@dataclass(frozen=True)
class Direction:
    """A point of S^{n-1}/{+-1}, stored by its canonical representative."""

    unit_vector: tuple

    def __post_init__(self):
        v = np.asarray(self.unit_vector, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise PreconditionError("direction must be a 1-d vector")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-12:
            raise PreconditionError("direction is not a unit vector", norm=float(np.linalg.norm(v)))
        nz = np.flatnonzero(np.abs(v) > _CANON_TOL)
        if v[nz[0]] < 0:
            raise PreconditionError("direction is not canonical (first nonzero component negative)")
        object.__setattr__(self, "unit_vector", tuple(float(x) for x in v))

    @classmethod
    def from_vector(cls, v) -> "Direction":
        return cls(tuple(canonicalize(v)))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.unit_vector)

    @property
    def n(self) -> int:
        return len(self.unit_vector)


def _as_direction(d) -> Direction:
    return d if isinstance(d, Direction) else Direction.from_vector(d)


@dataclass(frozen=True)
class Tube:
    center: tuple
    direction: Direction
    delta: float
    height: float = 1.0

    def __post_init__(self):
        center = tuple(float(x) for x in np.asarray(self.center, dtype=float).ravel())
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "direction", _as_direction(self.direction))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "height", float(self.height))
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise PreconditionError("tube delta must be positive", delta=self.delta)
        if not (self.height > 0 and math.isfinite(self.height)):
            raise PreconditionError("tube height must be positive", height=self.height)
        if len(center) != self.direction.n:
            raise PreconditionError("center and direction dimensions differ")
        if len(center) < 2:
            raise PreconditionError("tubes live in R^n with n >= 2")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> float:
        return self.delta / 2

    @property
    def a(self) -> np.ndarray:
        return np.array(self.center)

    @property
    def e(self) -> np.ndarray:
        return self.direction.vector

    @property
    def volume(self) -> float:
        return tube_volume(self)

    def axial_radial(self, points) -> tuple[np.ndarray, np.ndarray]:
        d = np.atleast_2d(np.asarray(points, dtype=float)) - self.a
        ax = d @ self.e
        rad2 = np.maximum(np.einsum("ij,ij->i", d, d) - ax * ax, 0.0)
        return ax, np.sqrt(rad2)

    def contains(self, points, slack: float = 1e-12) -> np.ndarray:
        ax, rad = self.axial_radial(points)
        return (np.abs(ax) <= self.height / 2 + slack) & (rad <= self.radius + slack)

    def translated(self, v) -> "Tube":
        return Tube(self.a + np.asarray(v, dtype=float), self.direction, self.delta, self.height)

    def transformed(self, rotation, translation) -> "Tube":
        R = np.asarray(rotation, dtype=float)
        return Tube(R @ self.a + np.asarray(translation, dtype=float),
                    Direction.from_vector(R @ self.e), self.delta, self.height)

    def support(self, u) -> float:
        """Support function h_T(u) = max over the tube of x.u, for unit ``u``."""
        u = np.asarray(u, dtype=float)
        c = float(self.e @ u)
        return float(self.a @ u) + self.height / 2 * abs(c) + self.radius * math.sqrt(max(0.0, 1 - c * c))


@dataclass(frozen=True)
class TubeFamily:
    n: int
    delta: float
    tubes: tuple
    c0: float = DEFAULT_C0

    def __post_init__(self):
        object.__setattr__(self, "tubes", tuple(self.tubes))
        if self.n < 2:
            raise PreconditionError("dimension must be >= 2", n=self.n)
        if not 0 < self.c0 < 1:
            raise PreconditionError("c0 must lie in (0, 1)", c0=self.c0)
        for i, t in enumerate(self.tubes):
            if t.n != self.n:
                raise PreconditionError("tube dimension mismatch", index=i)
            if t.delta != self.delta:
                raise PreconditionError("tube delta differs from family delta", index=i)

    @classmethod
    def from_arrays(cls, centers, axes, delta, heights=None, c0=DEFAULT_C0) -> "TubeFamily":
        """Vectorized constructor; validates the arrays once instead of per tube."""
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        axes = np.atleast_2d(np.asarray(axes, dtype=float))
        n = centers.shape[1] if centers.size else axes.shape[1]
        delta = float(delta)
        if len(centers) == 0:
            return cls(n=n, delta=delta, tubes=(), c0=c0)
        if centers.shape != axes.shape:
            raise PreconditionError("centers and axes shapes differ")
        if n < 2:
            raise PreconditionError("dimension must be >= 2", n=n)
        if not (delta > 0 and math.isfinite(delta)):
            raise PreconditionError("tube delta must be positive", delta=delta)
        if not 0 < c0 < 1:
            raise PreconditionError("c0 must lie in (0, 1)", c0=c0)
        if not np.all(np.isfinite(centers)):
            raise PreconditionError("centers must be finite")
        norms = np.linalg.norm(axes, axis=1)
        if np.any(~np.isfinite(norms) | (norms < 1e-300)):
            raise PreconditionError("zero or non-finite axis", index=int(np.flatnonzero(~(norms > 1e-300))[0]))
        axes = canonicalize_rows(axes)
        heights = np.array(np.broadcast_to(np.asarray(1.0 if heights is None else heights, dtype=float),
                                           (len(centers),)))
        if np.any(~np.isfinite(heights) | (heights <= 0)):
            raise PreconditionError("tube height must be positive",
                                    index=int(np.flatnonzero(~(heights > 0))[0]))
        tubes = []
        for c, e, h in zip(centers.tolist(), axes.tolist(), heights.tolist()):
            d = object.__new__(Direction)
            object.__setattr__(d, "unit_vector", tuple(e))
            t = object.__new__(Tube)
            object.__setattr__(t, "center", tuple(c))
            object.__setattr__(t, "direction", d)
            object.__setattr__(t, "delta", delta)
            object.__setattr__(t, "height", h)
            tubes.append(t)
        fam = object.__new__(cls)
        for k, v in (("n", n), ("delta", delta), ("tubes", tuple(tubes)), ("c0", c0)):
            object.__setattr__(fam, k, v)
        fam.__dict__.update(centers=centers.copy(), axes=axes, heights=heights)
        return fam

    def __len__(self) -> int:
        return len(self.tubes)

    def __iter__(self):
        return iter(self.tubes)

    @property
    def N(self) -> int:
        return len(self.tubes)

    @cached_property
    def centers(self) -> np.ndarray:
        return np.array([t.center for t in self.tubes], dtype=float).reshape(-1, self.n)

    @cached_property
    def axes(self) -> np.ndarray:
        return np.array([t.direction.unit_vector for t in self.tubes], dtype=float).reshape(-1, self.n)

    @cached_property
    def heights(self) -> np.ndarray:
        return np.array([t.height for t in self.tubes], dtype=float)

    @property
    def radius(self) -> float:
        return self.delta / 2

    def subset(self, indices: Iterable[int]) -> "TubeFamily":
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=int)
        if len(idx) and (idx.min() < -len(self) or idx.max() >= len(self)):
            raise PreconditionError("subset index out of range")
        fam = object.__new__(TubeFamily)
        for k, v in (("n", self.n), ("delta", self.delta), ("tubes", tuple(self.tubes[i] for i in idx)),
                     ("c0", self.c0)):
            object.__setattr__(fam, k, v)
        fam.__dict__.update(centers=self.centers[idx], axes=self.axes[idx], heights=self.heights[idx])
        return fam

    def translated(self, v) -> "TubeFamily":
        if not len(self):
            return self
        return TubeFamily.from_arrays(self.centers + np.asarray(v, dtype=float), self.axes, self.delta,
                                      self.heights, self.c0)

    def transformed(self, rotation, translation) -> "TubeFamily":
        if not len(self):
            return self
        R = np.asarray(rotation, dtype=float)
        return TubeFamily.from_arrays(self.centers @ R.T + np.asarray(translation, dtype=float),
                                      self.axes @ R.T, self.delta, self.heights, self.c0)

    @staticmethod
    def concat(families: Sequence["TubeFamily"]) -> "TubeFamily":
        first = families[0]
        tubes = tuple(t for f in families for t in f.tubes)
        return TubeFamily(first.n, first.delta, tubes, first.c0)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact axis-aligned bounding box of the union."""
        A = self.axes
        ext = (self.heights[:, None] / 2) * np.abs(A) + self.radius * np.sqrt(np.clip(1 - A * A, 0, None))
        return (self.centers - ext).min(axis=0), (self.centers + ext).max(axis=0)


def angle(e1, e2) -> float:
    """Angle arccos|e1.e2| between two directions, in [0, pi/2]."""
    v1 = _as_direction(e1).vector
    v2 = _as_direction(e2).vector
    return float(math.acos(min(1.0, abs(float(v1 @ v2)))))


def tube_volume(t: Tube) -> float:
    return ball_volume(t.n - 1) * t.radius ** (t.n - 1) * t.height


def lens_volume(m: int, r: float, d: float) -> float:
    """Volume of the intersection of two m-balls of radius r at center distance d."""
    if d >= 2 * r:
        return 0.0
    if m == 1:
        return 2 * r - d
    h = r - d / 2
    x = (2 * r * h - h * h) / (r * r)
    cap = 0.5 * ball_volume(m) * r ** m * float(betainc((m + 1) / 2, 0.5, x))
    return 2 * cap


def crossing_bound(n: int, r: float, sin_theta: float) -> float:
    """Volume of the intersection of two infinite radius-r cylinders whose axes
    meet at angle theta; an upper bound for any pair of radius-r tubes at that
    angle (the intersection volume of symmetric convex bodies peaks at zero
    offset)."""
    if sin_theta <= 0:
        return math.inf
    return 8 * ball_volume(n - 2) * r ** n / (n * sin_theta)


def _segment_distance(p1, d1, p2, d2) -> float:
    """Distance between segments p1 + s d1 and p2 + t d2, s, t in [0, 1]."""
    r = p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c, b = d1 @ r, d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0, 1) if denom > 1e-15 else 0.0
    t = (b * s + f) / e
    if t < 0:
        t, s = 0.0, np.clip(-c / a, 0, 1)
    elif t > 1:
        t, s = 1.0, np.clip((b - c) / a, 0, 1)
    return float(np.linalg.norm(r + s * d1 - t * d2))


def _axis_segment(t: Tube):
    return t.a - t.height / 2 * t.e, t.height * t.e


def _surely_disjoint(t1: Tube, t2: Tube) -> bool:
    p1, d1 = _axis_segment(t1)
    p2, d2 = _axis_segment(t2)
    return _segment_distance(p1, d1, p2, d2) > t1.radius + t2.radius


def _rectangle(t: Tube) -> np.ndarray:
    e = t.e
    w = np.array([-e[1], e[0]])
    hh, r = t.height / 2, t.radius
    return np.array([t.a + s1 * hh * e + s2 * r * w for s1, s2 in ((-1, -1), (1, -1), (1, 1), (-1, 1))])


def _clip(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of a convex polygon by a convex CCW polygon."""
    out = list(subject)
    for k in range(len(clipper)):
        if not out:
            break
        p, q = clipper[k], clipper[(k + 1) % len(clipper)]
        edge = q - p

        def inside(x):
            return edge[0] * (x[1] - p[1]) - edge[1] * (x[0] - p[0]) >= -1e-15

        def cross(u, v):
            du, dv = edge[0] * (u[1] - p[1]) - edge[1] * (u[0] - p[0]), edge[0] * (v[1] - p[1]) - edge[1] * (v[0] - p[0])
            return u + (v - u) * (du / (du - dv))

        src, out = out, []
        for i in range(len(src)):
            cur, prev = src[i], src[i - 1]
            if inside(cur):
                if not inside(prev):
                    out.append(cross(prev, cur))
                out.append(cur)
            elif inside(prev):
                out.append(cross(prev, cur))
    return np.array(out)


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _parallel_intersection(t1: Tube, t2: Tube) -> float:
    e = t1.e
    d = t2.a - t1.a
    s = float(d @ e)
    perp = math.sqrt(max(0.0, float(d @ d) - s * s))
    overlap = min(t1.height / 2, s + t2.height / 2) - max(-t1.height / 2, s - t2.height / 2)
    if overlap <= 0:
        return 0.0
    return overlap * lens_volume(t1.n - 1, t1.radius, perp)


def _sample_in_tube(t: Tube, k: int, rng: np.random.Generator) -> np.ndarray:
    m = t.n - 1
    u = (rng.permutation(k) + rng.random(k)) / k - 0.5
    g = rng.standard_normal((k, m))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = t.radius * rng.random(k) ** (1.0 / m)
    return t.a + np.outer(u * t.height, t.e) + (g * rad[:, None]) @ perp_basis(t.e)


def _wilson(hits: int, k: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if k == 0:
        return 0.0, 1.0
    p = hits / k
    den = 1 + z * z / k
    centre = (p + z * z / (2 * k)) / den
    half = z * math.sqrt(p * (1 - p) / k + z * z / (4 * k * k)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def _angle_between(t1: Tube, t2: Tube) -> float:
    return math.acos(min(1.0, abs(float(t1.e @ t2.e))))


def pair_intersection_volume(t1: Tube, t2: Tube, tol: float = 1e-3, *,
                             budget: int = 4_000_000, seed: int = 0) -> float:
    """Volume of ``t1 & t2``.

    Exact for parallel tubes (any n) and for n = 2 (convex polygon clipping).
    For n >= 3 with non-parallel axes, stratified Monte Carlo inside ``t1``
    runs until the 95% half-width drops below ``tol * |t1|``; raises
    :class:`EstimationError` if ``budget`` samples do not suffice.
    """
    if t1.n != t2.n or t1.delta != t2.delta:
        raise PreconditionError("tubes must share dimension and delta")
    if _surely_disjoint(t1, t2):
        return 0.0
    if _angle_between(t1, t2) < 1e-12:
        return _parallel_intersection(t1, t2)
    if t1.n == 2:
        return _polygon_area(_clip(_rectangle(t1), _rectangle(t2)))
    rng = np.random.default_rng(seed)
    vol = tube_volume(t1)
    hits = total = 0
    batch = 1 << 16
    while total < budget:
        pts = _sample_in_tube(t1, batch, rng)
        hits += int(t2.contains(pts).sum())
        total += batch
        lo, hi = _wilson(hits, total)
        if (hi - lo) / 2 * vol <= tol * vol:
            return hits / total * vol
    lo, hi = _wilson(hits, total)
    raise EstimationError("intersection volume did not reach tolerance",
                          estimate=hits / total * vol, abs_error_95=(hi - lo) / 2 * vol, samples=total)


def _exceeds(t1: Tube, t2: Tube, threshold: float, rng: np.random.Generator,
             budget: int = 2_000_000) -> bool:
    """Decide ``|t1 & t2| > threshold`` (exact where possible, else sequential MC)."""
    if _surely_disjoint(t1, t2):
        return False
    if _angle_between(t1, t2) < 1e-12:
        return _parallel_intersection(t1, t2) > threshold
    if t1.n == 2:
        return _polygon_area(_clip(_rectangle(t1), _rectangle(t2))) > threshold
    vol = tube_volume(t1)
    p_thr = threshold / vol
    hits = total = 0
    while total < budget:
        pts = _sample_in_tube(t1, 1 << 14, rng)
        hits += int(t2.contains(pts).sum())
        total += 1 << 14
        lo, hi = _wilson(hits, total)
        if lo > p_thr:
            return True
        if hi <= p_thr:
            return False
    log.warning("distinctness decision undecided after %d samples; using point estimate", total)
    return hits / total > p_thr


def direction_groups(axes: np.ndarray, decimals: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Group rows of canonical directions that coincide; returns (unique, inverse)."""
    key = np.round(canonicalize_rows(axes), decimals) + 0.0
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    return uniq, inverse.ravel()


def _group_angles(uniq: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(np.abs(uniq @ uniq.T), 0.0, 1.0))


def _parallel_exceeds(f: TubeFamily, I: np.ndarray, J: np.ndarray, vols: np.ndarray) -> np.ndarray:
    """Vectorized exact test for parallel pairs."""
    if not len(I):
        return np.zeros(0, dtype=bool)
    e = f.axes[I]
    d = f.centers[J] - f.centers[I]
    s = np.einsum("ij,ij->i", d, e)
    perp = np.sqrt(np.maximum(np.einsum("ij,ij->i", d, d) - s * s, 0.0))
    hi, hj = f.heights[I] / 2, f.heights[J] / 2
    overlap = np.minimum(hi, s + hj) - np.maximum(-hi, s - hj)
    r = f.radius
    lens = np.array([lens_volume(f.n - 1, r, p) for p in perp])
    inter = np.where(overlap > 0, overlap, 0.0) * lens
    return inter > f.c0 * np.minimum(vols[I], vols[J])


def is_essentially_distinct(f: TubeFamily, *, seed: int = 0) -> tuple[bool, tuple[int, int] | None]:
    """Check ``|Ti & Tj| <= c0 |Ti|`` for every pair.

    Direction pairs whose crossing bound already certifies the inequality are
    skipped wholesale; remaining pairs are screened by bounding-sphere distance
    and then decided exactly (parallel, n = 2) or by sequential Monte Carlo.
    Returns the lexicographically smallest violating pair as witness.
    """
    N = len(f)
    if N < 2:
        return True, None
    n, r = f.n, f.radius
    vols = ball_volume(n - 1) * r ** (n - 1) * f.heights
    uniq, inv = direction_groups(f.axes)
    members = [np.flatnonzero(inv == g) for g in range(len(uniq))]
    angles = _group_angles(uniq)
    min_vol = float(vols.min())
    bound = np.full(angles.shape, np.inf)
    pos = np.sin(angles) > 0
    bound[pos] = 8 * ball_volume(n - 2) * r ** n / (n * np.sin(angles[pos]))
    risky = np.argwhere(np.triu(bound > f.c0 * min_vol))
    rng = np.random.default_rng(seed)
    C, H = f.centers, f.heights
    trees: dict[int, cKDTree] = {}
    reach = float(H.max()) + f.delta
    violations = []
    for g1, g2 in risky:
        m1, m2 = members[g1], members[g2]
        t1 = trees.setdefault(g1, cKDTree(C[m1]))
        if g1 == g2:
            pairs = t1.query_pairs(reach, output_type="ndarray")
            if not len(pairs):
                continue
            I, J = m1[pairs[:, 0]], m1[pairs[:, 1]]
        else:
            t2 = trees.setdefault(g2, cKDTree(C[m2]))
            lists = t1.query_ball_tree(t2, reach)
            I = np.repeat(m1, [len(x) for x in lists])
            J = m2[np.concatenate([np.asarray(x, dtype=int) for x in lists])] if len(I) else np.empty(0, int)
        if g1 == g2:
            bad = _parallel_exceeds(f, I, J, vols)
            violations.extend(zip(np.minimum(I, J)[bad].tolist(), np.maximum(I, J)[bad].tolist()))
            continue
        for i, j in zip(I.tolist(), J.tolist()):
            i, j = min(i, j), max(i, j)
            thr = f.c0 * min(vols[i], vols[j])
            if _exceeds(f.tubes[i], f.tubes[j], thr, rng):
                violations.append((i, j))
    if violations:
        return False, min(violations)
    return True, None


def is_delta_separated(f: TubeFamily) -> tuple[bool, tuple[int, int] | None]:
    """True iff every pairwise direction angle exceeds delta; witness on failure."""
    N = len(f)
    if N < 2:
        return True, None
    uniq, inv = direction_groups(f.axes)
    worst = None
    for g in range(len(uniq)):
        idx = np.flatnonzero(inv == g)
        if len(idx) > 1:
            cand = (int(idx[0]), int(idx[1]))
            worst = cand if worst is None else min(worst, cand)
    A = uniq
    for start in range(0, len(A), 1024):
        block = np.arccos(np.clip(np.abs(A[start:start + 1024] @ A.T), 0, 1))
        rows = np.arange(start, min(start + 1024, len(A)))
        block[np.arange(len(rows)), rows] = np.inf
        hit = np.argwhere(block <= f.delta)
        for gi, gj in hit:
            i = int(np.flatnonzero(inv == rows[gi])[0])
            j = int(np.flatnonzero(inv == gj)[0])
            cand = (min(i, j), max(i, j))
            worst = cand if worst is None else min(worst, cand)
    return (worst is None), worst


def vertical_horizontal_distance(t: Tube, O) -> tuple[float, float]:
    d = t.a - np.asarray(O, dtype=float)
    v = float(d @ t.e)
    return abs(v), float(np.linalg.norm(d - v * t.e))
