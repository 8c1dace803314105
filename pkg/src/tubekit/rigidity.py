"""Detection of near-extremal structure in tube families.

Covers good-configuration certificates (check and extraction), dense-ball
extraction, bush-direction detection by grid snapping and difference fibers,
and the small-N structure pipeline that recovers a convex cross-section ``E``
with most tubes inside a placed copy of ``E x [0, 2]``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import PreconditionError
from .measure import centerline_samples, multiplicity_many, union_volume
from .nets import cap_net, direction_net
from .tubes import TubeFamily, canonicalize, is_essentially_distinct
from .xray import VoxelSet, convexity_index, find_convex_core


# ---------------------------------------------------------------- helpers

def rotation_to_vertical(e) -> np.ndarray:
    """Proper rotation R with ``R e = e_n``."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    n = e.size
    en = np.zeros(n)
    en[-1] = 1.0
    v = e - en
    vv = float(v @ v)
    if vv < 1e-24:
        return np.eye(n)
    H = np.eye(n) - 2.0 * np.outer(v, v) / vv
    F = np.eye(n)
    F[0, 0] = -1.0
    return F @ H


def _angles_to(axes: np.ndarray, e: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(np.abs(axes @ e), 0.0, 1.0))


def _vertical_horizontal(f: TubeFamily, O) -> tuple[np.ndarray, np.ndarray]:
    d = f.centers - np.asarray(O, dtype=float)
    v = np.einsum("ij,ij->i", d, f.axes)
    hvec = d - v[:, None] * f.axes
    return np.abs(v), np.linalg.norm(hvec, axis=1)


def tubes_in_ball(f: TubeFamily, x, R: float) -> np.ndarray:
    """Indices of tubes entirely inside the closed ball ``B(x, R)``."""
    d = np.asarray(x, dtype=float) - f.centers
    ax = np.einsum("ij,ij->i", d, f.axes)
    rho = np.sqrt(np.maximum(np.einsum("ij,ij->i", d, d) - ax * ax, 0.0))
    far = (np.abs(ax) + f.heights / 2) ** 2 + (rho + f.radius) ** 2
    return np.flatnonzero(far <= R * R + 1e-12)


# ---------------------------------------------------------------- good configurations

@dataclass(frozen=True)
class GoodConfigCertificate:
    O: tuple
    epsilon0: float
    lambda0: float
    groups: tuple  # of (direction tuple, tuple of indices)

    def to_dict(self) -> dict:
        return {"O": list(self.O), "epsilon0": self.epsilon0, "lambda0": self.lambda0,
                "groups": [{"direction": list(e), "members": list(m)} for e, m in self.groups]}

    @property
    def members(self) -> list:
        return [i for _, m in self.groups for i in m]


def check_good_config(f: TubeFamily, cert: GoodConfigCertificate,
                      check_distinct: bool = True) -> tuple[bool, dict | None]:
    """Verify the two defining conditions; returns the first violation."""
    delta, n = f.delta, f.n
    if not cert.groups:
        return False, {"condition": "b", "reason": "no direction groups"}
    for _, mem in cert.groups:
        for i in mem:
            if not 0 <= i < len(f):
                raise PreconditionError("certificate index out of range", index=int(i))
    O = np.asarray(cert.O, dtype=float)
    for _, mem in cert.groups:
        idx = np.asarray(mem, dtype=int)
        if not len(idx):
            continue
        vert, hor = _vertical_horizontal(f.subset(idx), O)
        bad = np.flatnonzero((vert > cert.epsilon0 + 1e-12) | (hor > 0.5 + 1e-12))
        if len(bad):
            return False, {"condition": "a", "index": int(idx[bad[0]]),
                           "vertical": float(vert[bad[0]]), "horizontal": float(hor[bad[0]])}
    need = math.sqrt(cert.lambda0) * delta ** (1 - n)
    if len(cert.groups) < need - 1e-9:
        return False, {"condition": "b", "reason": "too few groups", "groups": len(cert.groups),
                       "required": need}
    centers = np.array([canonicalize(e) for e, _ in cert.groups])
    seen = set()
    for k, (e, mem) in enumerate(cert.groups):
        if len(mem) < need - 1e-9:
            return False, {"condition": "b", "reason": "group too small", "group": k, "size": len(mem),
                           "required": need}
        ang = _angles_to(f.axes[np.asarray(mem, dtype=int)], centers[k])
        bad = np.flatnonzero(ang > cert.epsilon0 * delta + 1e-12)
        if len(bad):
            return False, {"condition": "b", "reason": "member outside its cap", "group": k,
                           "index": int(mem[bad[0]])}
        for i in mem:
            if i in seen:
                return False, {"condition": "b", "reason": "groups not disjoint", "index": int(i)}
            seen.add(i)
    if len(centers) > 1:
        G = np.arccos(np.clip(np.abs(centers @ centers.T), 0, 1))
        np.fill_diagonal(G, np.inf)
        if G.min() <= delta:
            i, j = np.unravel_index(np.argmin(G), G.shape)
            return False, {"condition": "b", "reason": "group directions not delta-separated",
                           "groups": [int(min(i, j)), int(max(i, j))]}
    if check_distinct:
        sub = sorted(seen)
        ok, wit = is_essentially_distinct(f.subset(sub))
        if not ok:
            return False, {"condition": "distinct", "pair": [sub[wit[0]], sub[wit[1]]]}
    return True, None


@dataclass(frozen=True)
class DenseBall:
    center: tuple
    members: tuple
    multiplicity: int

    def to_dict(self) -> dict:
        return {"center": list(self.center), "members": list(self.members),
                "multiplicity": self.multiplicity}


def extract_dense_balls(f: TubeFamily, C1: float = 0.5, c: float = 0.1, *, per_tube: int = 8,
                        seed: int = 0) -> list:
    """Greedy dense-ball selection.

    Sample points with multiplicity at least ``C1 delta^(1-n)`` are visited in
    decreasing multiplicity; centers are kept 6 apart so the radius-3 balls are
    disjoint, and a ball is reported when it fully contains at least
    ``c delta^(2-2n)`` tubes.
    """
    if len(f) == 0:
        return []
    n, delta = f.n, f.delta
    X = centerline_samples(f, per_tube, seed)
    mu = multiplicity_many(f, X)
    keep = np.flatnonzero(mu >= C1 * delta ** (1 - n))
    order = keep[np.lexsort((keep, -mu[keep]))]
    centers: list = []
    out = []
    for i in order:
        x = X[i]
        if centers and np.min(np.linalg.norm(np.array(centers) - x, axis=1)) < 6:
            continue
        centers.append(x)
        mem = tubes_in_ball(f, x, 3.0)
        if len(mem) >= c * delta ** (2 - 2 * n):
            out.append(DenseBall(tuple(float(v) for v in x), tuple(int(j) for j in mem), int(mu[i])))
    return out


def _companion_counts(f: TubeFamily, P: np.ndarray, eps0: float, chunk: int = 2048) -> np.ndarray:
    out = np.zeros(len(P), dtype=np.int64)
    C, A = f.centers, f.axes
    for s in range(0, len(P), chunk):
        d = P[s:s + chunk, None, :] - C[None, :, :]
        ax = np.einsum("pkn,kn->pk", d, A)
        rad2 = np.einsum("pkn,pkn->pk", d, d) - ax * ax
        out[s:s + chunk] = np.count_nonzero((np.abs(ax) <= eps0) & (rad2 <= 0.25), axis=1)
    return out


def extract_good_config(f: TubeFamily, epsilon0: float = 0.5, c: float = 0.1, *,
                        extra_samples: int = 2000, seed: int = 0,
                        indices=None) -> GoodConfigCertificate:
    """Extract a good configuration from tubes concentrated in a radius-3 ball.

    Companions of radius 1/2 and height ``2 epsilon0`` locate a point ``O``
    (sampled argmax); tubes whose companion covers ``O`` are binned into
    delta-caps, heavy caps are thinned to pairwise angle > 4 delta and each is
    refined to its most populated ``epsilon0 delta / 2`` subcap. The size
    threshold is chosen to maximize the reported ``lambda0``.
    """
    n, delta = f.n, f.delta
    base = np.arange(len(f)) if indices is None else np.asarray(indices, dtype=int)
    sub = f.subset(base)
    if len(sub) < c * delta ** (2 - 2 * n):
        raise PreconditionError("too few tubes for a good configuration", N=len(sub),
                                required=c * delta ** (2 - 2 * n))
    ctr = 0.5 * (sub.bounding_box()[0] + sub.bounding_box()[1])
    if len(tubes_in_ball(sub, ctr, 3.0)) < len(sub):
        raise PreconditionError("tubes are not concentrated in a radius-3 ball")
    rng = np.random.default_rng(seed)
    cand = [sub.centers]
    if extra_samples:
        pick = rng.integers(0, len(sub), extra_samples)
        g = rng.standard_normal((extra_samples, n))
        g -= np.einsum("ij,ij->i", g, sub.axes[pick])[:, None] * sub.axes[pick]
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        rad = 0.5 * rng.random(extra_samples) ** (1 / (n - 1))
        axial = epsilon0 * (2 * rng.random(extra_samples) - 1)
        cand.append(sub.centers[pick] + g * rad[:, None] + axial[:, None] * sub.axes[pick])
    P = np.vstack(cand)
    counts = _companion_counts(sub, P, epsilon0)
    O = P[int(np.argmax(counts))]
    vert, hor = _vertical_horizontal(sub, O)
    Tp = np.flatnonzero((vert <= epsilon0) & (hor <= 0.5))
    axes = sub.axes[Tp]
    caps = direction_net(n, delta)
    members = [Tp[_angles_to(axes, e) <= delta] for e in caps]
    sizes = np.array([len(m) for m in members])
    order = np.lexsort((np.arange(len(caps)), -sizes))
    kept: list = []
    for i in order:
        if sizes[i] == 0:
            break
        if kept and np.min(_angles_to(caps[kept], caps[i])) <= 4 * delta:
            continue
        kept.append(int(i))
    groups = []
    for i in kept:
        mem = members[i]
        sub_caps = cap_net(caps[i], delta, epsilon0 * delta / 2)
        best, best_e = np.empty(0, dtype=int), caps[i]
        for e in sub_caps:
            inside = mem[_angles_to(sub.axes[mem], e) <= epsilon0 * delta / 2]
            if len(inside) > len(best):
                best, best_e = inside, e
        if len(best):
            groups.append((best_e, best))
    if not groups:
        raise PreconditionError("no populated direction caps near the chosen point")
    gsizes = np.array([len(m) for _, m in groups])
    scores = [min(int(np.count_nonzero(gsizes >= s)), int(s)) for s in gsizes]
    s_best = int(gsizes[int(np.argmax(scores))])
    final = [(tuple(float(v) for v in canonicalize(e)), tuple(int(base[j]) for j in sorted(m)))
             for e, m in groups if len(m) >= s_best]
    lam0 = (min(len(final), s_best) * delta ** (n - 1)) ** 2
    return GoodConfigCertificate(tuple(float(v) for v in O), float(epsilon0), float(lam0), tuple(final))


# ---------------------------------------------------------------- normalization

@dataclass(frozen=True)
class NormalizedFamily:
    family: TubeFamily           # transformed subfamily
    indices: tuple               # positions in the input family
    rotation: np.ndarray         # y = R (x - O)
    origin: np.ndarray
    max_tilt: float

    def to_world(self, Y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Y) @ self.rotation + self.origin


def _vertical_ok(f: TubeFamily, max_tilt: float) -> np.ndarray:
    cos_t = np.abs(f.axes[:, -1])
    z = f.centers[:, -1]
    return (cos_t >= math.cos(max_tilt) - 1e-12) & (np.abs(z) + 0.25 <= f.heights / 2 * cos_t + 1e-12)


def normalize_family(f: TubeFamily, max_tilt: float = 0.25) -> NormalizedFamily:
    """Rotate and translate the richest ``max_tilt``-cap of directions to the
    vertical and center it, keeping only tubes that cross every horizontal
    plane ``|t| <= 1/4``."""
    A = f.axes
    cover = np.abs(A @ A.T) >= math.cos(max_tilt) - 1e-12 if len(f) <= 4000 else None
    if cover is not None:
        cnt = cover.sum(axis=1)
        best = int(np.argmax(cnt))
        mem = np.flatnonzero(cover[best])
    else:
        net = direction_net(f.n, max_tilt / 2)
        cnt = np.array([np.count_nonzero(_angles_to(A, e) <= max_tilt) for e in net])
        best_e = net[int(np.argmax(cnt))]
        mem = np.flatnonzero(_angles_to(A, best_e) <= max_tilt)
        best = int(mem[0])
    ref = A[best]
    signs = np.sign(A[mem] @ ref)
    signs[signs == 0] = 1
    mean = (A[mem] * signs[:, None]).sum(axis=0)
    R = rotation_to_vertical(mean)
    O = np.median(f.centers[mem], axis=0)
    moved = f.subset(mem).transformed(R, -R @ O)
    ok = _vertical_ok(moved, max_tilt)
    keep = mem[ok]
    return NormalizedFamily(moved.subset(np.flatnonzero(ok)), tuple(int(i) for i in keep), R, O, max_tilt)


# ---------------------------------------------------------------- bush directions

def _plane_points(f: TubeFamily, t: float) -> np.ndarray:
    """Horizontal coordinates where each axis meets the plane ``x_n = t``."""
    e = f.axes
    s = (t - f.centers[:, -1]) / e[:, -1]
    return (f.centers + s[:, None] * e)[:, :-1]


def slice_area(f: TubeFamily, t: float, pitch: float) -> float:
    """Area of the union's section by ``x_n = t``, counted on a lattice of
    the given pitch."""
    n = f.n
    P = _plane_points(f, t)
    cos_min = float(np.abs(f.axes[:, -1]).min())
    k = int(math.ceil(f.radius / (cos_min * pitch))) + 1
    g = np.arange(-k, k + 1)
    off = np.stack([a.ravel() for a in np.meshgrid(*([g] * (n - 1)), indexing="ij")], axis=1)
    base = np.round(P / pitch).astype(np.int64)
    cells = (base[:, None, :] + off[None, :, :])
    pts = np.concatenate([cells * pitch, np.full(cells.shape[:2] + (1,), t)], axis=2)
    d = pts - f.centers[:, None, :]
    ax = np.einsum("tkn,tn->tk", d, f.axes)
    rad2 = np.einsum("tkn,tkn->tk", d, d) - ax * ax
    ok = (np.abs(ax) <= f.heights[:, None] / 2) & (rad2 <= f.radius ** 2)
    hit = cells[ok]
    if not len(hit):
        return 0.0
    return len(np.unique(hit, axis=0)) * pitch ** (n - 1)


@dataclass(frozen=True)
class BushDirections:
    clusters: tuple           # of (direction tuple, member indices in the analysed family)
    t0: float
    d0: float
    pitch: float
    fat_planes: tuple
    threshold: float
    remaining: int
    total: int

    @property
    def extremal(self) -> bool:
        return len(self.clusters) > 0 and self.remaining < self.total / 4

    def to_dict(self) -> dict:
        return {"clusters": [{"direction": list(e), "members": list(m)} for e, m in self.clusters],
                "t0": self.t0, "d0": self.d0, "pitch": self.pitch, "fat_planes": list(self.fat_planes),
                "threshold": self.threshold, "remaining": self.remaining, "total": self.total,
                "extremal": self.extremal}


def detect_bush_directions(f: TubeFamily, *, max_tilt: float = 0.25, pitch: float | None = None,
                           threshold_factor: float = 0.25, seed: int = 0,
                           volume_budget: int = 1 << 18, N_ref: int | None = None) -> BushDirections:
    """Direction clusters of a normalized family via grid snapping.

    Every tube is snapped to lattice points ``a(T)`` on plane ``t0`` and
    ``b(T)`` on plane ``t0 + 2 d0`` (planes chosen to avoid fat sections);
    the largest fiber of ``a - b`` fixes a direction, whose delta/2-cap of
    remaining tubes forms a cluster. Clusters of at least
    ``threshold_factor * sqrt(N)`` tubes are emitted until fewer than N/4
    tubes remain. ``N_ref`` (default ``len(f)``) sets the cluster threshold.
    """
    if len(f) == 0:
        raise PreconditionError("empty family")
    ok = _vertical_ok(f, max_tilt)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise PreconditionError("family is not normalized", index=bad)
    N, delta = len(f), f.delta
    pitch = pitch or delta / 2
    K = union_volume(f, budget=volume_budget, seed=seed).value
    t0s = np.linspace(-0.25, 0.0, 17)
    d0s = np.linspace(1 / 16, 1 / 8, 9)
    area_cache: dict = {}

    def fat(t):
        key = round(float(t), 12)
        if key not in area_cache:
            area_cache[key] = slice_area(f, t, pitch / 2) > 100 * K
        return area_cache[key]

    choice = None
    for t0 in t0s:
        if fat(t0):
            continue
        for d0 in d0s:
            if not fat(t0 + d0) and not fat(t0 + 2 * d0):
                choice = (float(t0), float(d0))
                break
        if choice:
            break
    if choice is None:
        raise PreconditionError("no admissible plane triple found")
    t0, d0 = choice
    a = np.round(_plane_points(f, t0) / pitch).astype(np.int64)
    b = np.round(_plane_points(f, t0 + 2 * d0) / pitch).astype(np.int64)
    phi = [tuple(v) for v in (a - b)]
    remaining = np.ones(N, dtype=bool)
    thr = threshold_factor * math.sqrt(N_ref or N)
    clusters = []
    while remaining.sum() >= N / 4:
        rem = np.flatnonzero(remaining)
        cnt = Counter(phi[i] for i in rem)
        M = max(cnt.values())
        u = min((d for d, v in cnt.items() if v == M), key=lambda d: (sum(x * x for x in d), d))
        fiber = [i for i in rem if phi[i] == u]
        axes = f.axes[rem]
        best_e, best_mem = None, np.empty(0, dtype=int)
        for i in fiber:
            mem = rem[_angles_to(axes, f.axes[i]) <= delta / 2]
            if len(mem) > len(best_mem):
                best_e, best_mem = f.axes[i], mem
        if len(best_mem) < thr:
            break
        clusters.append((tuple(float(v) for v in best_e), tuple(int(i) for i in best_mem)))
        remaining[best_mem] = False
    fat_planes = tuple(sorted(t for t, v in area_cache.items() if v))
    return BushDirections(tuple(clusters), t0, d0, pitch, fat_planes, thr, int(remaining.sum()), N)


# ---------------------------------------------------------------- interval density

def merge_intervals(intervals) -> np.ndarray:
    iv = sorted((float(a), float(b)) for a, b in intervals if b > a)
    out: list = []
    for a, b in iv:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.array(out, dtype=float).reshape(-1, 2)


def interval_density_length(intervals, lam: float = 0.5) -> tuple[float, tuple | None]:
    """``m(A, lam)``: the longest interval I with ``|I & A| >= lam |I|``.

    ``A`` is a finite union of intervals. An optimal I can be taken to start
    in the gap before some component and end in the gap after a later one, so
    the supremum is ``max C_ij / lam`` over component ranges ``i..j`` that are
    dense enough on their own hull. Returns the value and the hull
    ``(a_i, b_j)`` of the best range.
    """
    if not 0 < lam <= 1:
        raise PreconditionError("lambda must lie in (0, 1]", lam=lam)
    A = merge_intervals(intervals)
    if not len(A):
        return 0.0, None
    lengths = A[:, 1] - A[:, 0]
    csum = np.concatenate([[0.0], np.cumsum(lengths)])
    best, arg = 0.0, None
    for i in range(len(A)):
        cov = csum[i + 1:] - csum[i]
        span = A[i:, 1] - A[i, 0]
        feas = cov >= lam * span - 1e-12
        if feas.any():
            j = int(np.argmax(np.where(feas, cov, -1.0)))
            if cov[j] / lam > best + 1e-15:
                best, arg = float(cov[j] / lam), (float(A[i, 0]), float(A[i + j, 1]))
    return best, arg


# ---------------------------------------------------------------- structure pipeline

@dataclass(frozen=True)
class StructureReport:
    found: bool
    reason: str
    E_lo: tuple = ()
    E_hi: tuple = ()
    rotation: np.ndarray | None = None
    translation: np.ndarray | None = None
    z_range: tuple = (-1.0, 1.0)
    captured: tuple = ()
    capture_fraction: float = 0.0
    volume_ratio: float = float("nan")
    diameter: float = float("nan")
    discretization: float = 0.0
    clusters: int = 0
    shape_score: float = float("nan")
    details: dict = field(default_factory=dict)

    @property
    def E_volume(self) -> float:
        return float(np.prod(np.subtract(self.E_hi, self.E_lo))) if self.found else 0.0

    def to_dict(self) -> dict:
        d = {"found": self.found, "reason": self.reason, "clusters": self.clusters,
             "capture_fraction": self.capture_fraction, "captured": list(self.captured),
             "details": self.details}
        if self.found:
            d.update({"E": {"lo": list(self.E_lo), "hi": list(self.E_hi),
                            "discretization": self.discretization},
                      "placement": {"rotation": self.rotation.tolist(),
                                    "translation": self.translation.tolist(),
                                    "z_range": list(self.z_range)},
                      "volume_ratio": self.volume_ratio, "diameter": self.diameter,
                      "shape_score": self.shape_score})
        return d

    def local_coordinates(self, X) -> np.ndarray:
        """Map world points into the frame where the region is ``E x z_range``."""
        return (np.atleast_2d(X) - self.translation) @ self.rotation


def _tubes_in_box(f: TubeFamily, Q: np.ndarray, t: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact containment of tubes in the box ``{x : lo <= Q^T (x - t) <= hi}``."""
    C = (f.centers - t) @ Q
    A = f.axes @ Q
    ext = f.heights[:, None] / 2 * np.abs(A) + f.radius * np.sqrt(np.clip(1 - A * A, 0, None))
    return np.all((C - ext >= lo - 1e-12) & (C + ext <= hi + 1e-12), axis=1)


def _fail(reason: str, **details) -> StructureReport:
    return StructureReport(False, reason, details=details)


def detect_structure(f: TubeFamily, *, max_tilt: float = 0.25, lam: float = 0.5,
                     lambda0: float = 0.8, convexity_min: float = 0.6, core_threshold: float = 0.3,
                     threshold_factor: float = 0.25, budget: int = 100_000, seed: int = 0) -> StructureReport:
    """Recover a convex cross-section ``E`` and a placement of ``E x [-1, 1]``
    containing many tubes, or report that the family shows no extremal
    structure."""
    N = len(f)
    if N == 0:
        return _fail("empty family")
    n, delta = f.n, f.delta
    tree = cKDTree(f.centers)
    counts = np.array([len(x) for x in tree.query_ball_point(f.centers, 2.5)])
    best_center = f.centers[int(np.argmax(counts))]
    ball = tubes_in_ball(f, best_center, 3.0)
    if len(ball) == 0:
        return _fail("no tubes concentrated in a radius-3 ball")
    sub = f.subset(ball)
    nf = normalize_family(sub, max_tilt)
    if len(nf.family) < N / 2:
        return _fail("fewer than half of the tubes share a narrow direction cap",
                     analysed=len(nf.family))
    bush = detect_bush_directions(nf.family, max_tilt=max_tilt, threshold_factor=threshold_factor,
                                  seed=seed, N_ref=N)
    if not bush.extremal:
        return _fail("direction clusters do not cover the family; not in the extremal regime",
                     threshold=bush.threshold, analysed=len(nf.family), clusters=len(bush.clusters),
                     unclustered=bush.remaining)
    e, mem = max(bush.clusters, key=lambda c: len(c[1]))
    R2 = rotation_to_vertical(np.array(e))
    G = nf.family.transformed(R2, np.zeros(n))
    proj = G.centers[np.asarray(mem, dtype=int), :-1]
    disc = 2 * delta
    if n == 2:
        m_val, hull = interval_density_length([(p - disc, p + disc) for p in proj[:, 0]], lam)
        frame = np.eye(1)
        lo_b, hi_b = np.array([hull[0]]), np.array([hull[1]])
        score = m_val
    else:
        h = delta / 2
        lo_g = proj.min(axis=0) - disc - h
        hi_g = proj.max(axis=0) + disc + h
        shape = np.ceil((hi_g - lo_g) / h).astype(int)
        axes_g = [lo_g[j] + (np.arange(shape[j]) + 0.5) * h for j in range(n - 1)]
        grid = np.stack([a.ravel() for a in np.meshgrid(*axes_g, indexing="ij")], axis=1)
        hit = cKDTree(proj).query_ball_point(grid, disc, return_length=True) > 0
        E0 = VoxelSet(tuple(lo_g), h, hit.reshape(tuple(shape)))
        rep = convexity_index(E0, budget, seed)
        if rep.index < convexity_min:
            return _fail("projected cross-section is far from convex", convexity_index=rep.index)
        core = find_convex_core(E0, convexity_min, core_threshold, index=rep)
        if not core.found:
            return _fail("no convex core found", core_score=core.score)
        frame, lo_b, hi_b = core.frame, core.lo, core.hi
        score = rep.index
    mid = (lo_b + hi_b) / 2
    half = (hi_b - lo_b) / 2 * (2 - lambda0) / lambda0 + delta + 9 * delta
    diam = 2 * float(np.linalg.norm(half))
    if diam > 1:
        half = half / diam
        diam = 1.0
    E_lo, E_hi = mid - half, mid + half
    # local frame: first n-1 coordinates via the core frame, last is vertical
    Q_local = np.eye(n)
    Q_local[:-1, :-1] = frame
    Rtot = R2 @ nf.rotation             # y = Rtot (x - O)
    Q = Rtot.T @ Q_local                 # world direction of each local axis (columns)
    t = nf.origin
    lo = np.concatenate([E_lo, [-1.0]])
    hi = np.concatenate([E_hi, [1.0]])
    inside = _tubes_in_box(f, Q, t, lo, hi)
    captured = np.flatnonzero(inside)
    vol = float(np.prod(E_hi - E_lo))
    return StructureReport(
        True, "ok", tuple(float(v) for v in E_lo), tuple(float(v) for v in E_hi), Q, np.asarray(t, float),
        (-1.0, 1.0), tuple(int(i) for i in captured), len(captured) / N,
        vol / (math.sqrt(N) * delta ** (n - 1)), diam, 9 * delta, len(bush.clusters), float(score),
        {"t0": bush.t0, "d0": bush.d0, "cluster_size": len(mem), "analysed": len(nf.family),
         "core_lo": [float(v) for v in lo_b], "core_hi": [float(v) for v in hi_b]})
