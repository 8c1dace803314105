"""Multiplicity, union volume and the two-regime volume lower bound."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .index import CellKeys, TubeIndex, cells_near_tubes
from .tubes import ASYMPTOTIC_DELTA_MAX, TubeFamily, ball_volume, tube_volume, _wilson

STREAM_SIZE = 1 << 18


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    abs_error_95: float
    method: str
    samples: int
    converged: bool = True

    def to_dict(self) -> dict:
        return {"value": self.value, "abs_error_95": self.abs_error_95, "method": self.method,
                "samples": self.samples, "converged": self.converged}


@dataclass(frozen=True)
class MultiplicityProfile:
    nu_max: int
    argmax_point: tuple
    histogram: dict = field(default_factory=dict)


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("TUBEKIT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(threads or 1))


def multiplicity_at(f: TubeFamily, x) -> int:
    """Exact number of tubes containing ``x``."""
    if len(f) == 0:
        return 0
    x = np.asarray(x, dtype=float)
    d = x - f.centers
    ax = np.einsum("ij,ij->i", d, f.axes)
    rad2 = np.einsum("ij,ij->i", d, d) - ax * ax
    return int(np.count_nonzero((np.abs(ax) <= f.heights / 2) & (rad2 <= f.radius ** 2)))


def multiplicity_many(f: TubeFamily, X, index: TubeIndex | None = None) -> np.ndarray:
    index = index or TubeIndex(f)
    return index.counts(X)


def centerline_samples(f: TubeFamily, per_tube: int = 8, seed: int = 0) -> np.ndarray:
    """Stratified points on every tube axis (the centers always included)."""
    rng = np.random.default_rng(seed)
    N = len(f)
    strata = (np.arange(per_tube)[None, :] + rng.random((N, per_tube))) / per_tube - 0.5
    t = np.concatenate([np.zeros((N, 1)), strata], axis=1) * f.heights[:, None]
    pts = f.centers[:, None, :] + t[:, :, None] * f.axes[:, None, :]
    return pts.reshape(-1, f.n)


def multiplicity_profile(f: TubeFamily, per_tube: int = 8, seed: int = 0,
                         index: TubeIndex | None = None) -> MultiplicityProfile:
    if len(f) == 0:
        return MultiplicityProfile(0, tuple([0.0] * f.n), {})
    X = centerline_samples(f, per_tube, seed)
    mu = multiplicity_many(f, X, index)
    k = int(np.argmax(mu))
    levels, counts = np.unique(mu, return_counts=True)
    return MultiplicityProfile(int(mu[k]), tuple(float(v) for v in X[k]),
                               {int(a): int(b) for a, b in zip(levels, counts)})


def _mc_stream(index: TubeIndex, lo, hi, seed: int, stream: int, size: int) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))
    X = lo + rng.random((size, len(lo))) * (hi - lo)
    hits = 0
    for s in range(0, size, 1 << 15):
        pi, _ = index.pairs(X[s:s + (1 << 15)])
        hits += len(np.unique(pi))
    return hits


def union_volume(f: TubeFamily, method: str = "monte_carlo", budget: int = 1 << 22, *,
                 seed: int = 0, target_rel_error: float | None = None, threads: int | None = None,
                 grid_h: float | None = None) -> VolumeEstimate:
    """Estimate ``|union of tubes|``.

    ``monte_carlo`` samples the bounding box inflated by delta in fixed-size
    independently seeded streams, so the result does not depend on the thread
    count. ``grid`` counts cells of side ``grid_h`` (default delta/4) whose
    centers lie in the union and reports a rigorous bracket from shrunk and
    grown tubes as its error.
    """
    if len(f) == 0:
        raise PreconditionError("union_volume needs a nonempty family")
    if method in ("mc", "monte_carlo"):
        return _union_mc(f, int(budget), seed, target_rel_error, resolve_threads(threads))
    if method == "grid":
        return _union_grid(f, grid_h or f.delta / 4)
    raise PreconditionError("unknown volume method", method=method)


def _union_mc(f, budget, seed, target, threads) -> VolumeEstimate:
    lo, hi = f.bounding_box()
    lo, hi = lo - f.delta, hi + f.delta
    box = float(np.prod(hi - lo))
    index = TubeIndex(f)
    n_streams = max(1, math.ceil(budget / STREAM_SIZE))
    hits = total = 0
    converged = target is None
    wave = max(1, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, n_streams, wave):
            ids = range(start, min(n_streams, start + wave))
            for h in pool.map(lambda s: _mc_stream(index, lo, hi, seed, s, STREAM_SIZE), ids):
                hits += h
                total += STREAM_SIZE
            if target is not None:
                p_lo, p_hi = _wilson(hits, total)
                if hits and (p_hi - p_lo) / 2 <= target * hits / total:
                    converged = True
                    break
    p_lo, p_hi = _wilson(hits, total)
    return VolumeEstimate(hits / total * box, (p_hi - p_lo) / 2 * box, "monte_carlo", total, converged)


def raster_cells(f: TubeFamily, h: float, inflate: float = 0.0) -> np.ndarray:
    """Unique integer cells of side ``h`` whose centers lie in the (inflated) union."""
    _, cells = cells_near_tubes(f.centers, f.axes, f.heights, f.radius, inflate, h)
    if not len(cells):
        return cells
    keys = CellKeys(cells.min(axis=0), cells.max(axis=0))
    k, _ = keys.encode(cells)
    return keys.decode(np.unique(k))


def _union_grid(f: TubeFamily, h: float) -> VolumeEstimate:
    s = h * math.sqrt(f.n) / 2
    mid = len(raster_cells(f, h))
    outer = len(raster_cells(f, h, s))
    inner = len(raster_cells(f, h, -s))
    cell = h ** f.n
    err = max(outer - mid, mid - inner) * cell
    return VolumeEstimate(mid * cell, float(err), "grid", mid, True)


def lower_bound(N: int, delta: float, n: int, strict: bool = False) -> float:
    """``max(sqrt(N) delta^(n-1), N delta^(2n-2))`` with unit constants."""
    if N < 1:
        raise PreconditionError("N must be >= 1", N=N)
    if not delta > 0:
        raise PreconditionError("delta must be positive", delta=delta)
    if strict and delta >= ASYMPTOTIC_DELTA_MAX:
        raise PreconditionError("delta must be below 1/100", delta=delta)
    return max(math.sqrt(N) * delta ** (n - 1), N * delta ** (2 * n - 2))


@dataclass(frozen=True)
class BushReport:
    point: tuple
    nu: int
    nu_max: int
    k: int
    bush: tuple
    certified: tuple
    exclusion_radius: float
    certified_bound: float
    bound_over_k: float

    def to_dict(self) -> dict:
        return {"point": list(self.point), "nu": self.nu, "nu_max": self.nu_max, "k": self.k,
                "bush": list(self.bush), "certified": list(self.certified),
                "exclusion_radius": self.exclusion_radius, "certified_bound": self.certified_bound,
                "bound_over_k_delta_power": self.bound_over_k}


def tail_separation_angle(delta: float, R: float) -> float:
    """Smallest angle at which two delta-tubes through a common point are
    guaranteed disjoint outside ``B(x, R)``.

    Both axes pass within ``r = delta/2`` of ``x``; a common point sits within
    ``4r / sin(theta) + 2r`` of ``x``.
    """
    if R <= delta:
        return math.inf
    s = 2 * delta / (R - delta)
    return math.asin(s) if s <= 1 else math.inf


def _greedy_separated(axes: np.ndarray, order, threshold: float) -> list:
    kept: list = []
    for i in order:
        if not kept or np.all(np.arccos(np.clip(np.abs(axes[kept] @ axes[i]), 0, 1)) > threshold):
            kept.append(int(i))
    return kept


def bush_check(f: TubeFamily, sep_constant: float = 4.0, *, per_tube: int = 8,
               seed: int = 0) -> BushReport:
    """Locate an (approximate) max-multiplicity point, extract a
    ``sep_constant * delta``-separated bush there and certify a disjoint
    volume lower bound from tube tails outside ``B(x, height/4)``."""
    if len(f) == 0:
        raise PreconditionError("bush_check needs a nonempty family")
    prof = multiplicity_profile(f, per_tube, seed)
    x = np.array(prof.argmax_point)
    d = x - f.centers
    ax = np.einsum("ij,ij->i", d, f.axes)
    rad2 = np.einsum("ij,ij->i", d, d) - ax * ax
    through = np.flatnonzero((np.abs(ax) <= f.heights / 2) & (rad2 <= f.radius ** 2))
    bush = _greedy_separated(f.axes, through, sep_constant * f.delta)
    R = float(f.heights[bush].min()) / 4
    theta_cert = tail_separation_angle(f.delta, R)
    certified = _greedy_separated(f.axes, bush, max(theta_cert, sep_constant * f.delta)) \
        if math.isfinite(theta_cert) else bush[:1]
    tails = [tube_volume(f.tubes[i]) - ball_volume(f.n - 1) * f.radius ** (f.n - 1) * 2 * R
             for i in certified]
    bound = float(sum(max(0.0, t) for t in tails))
    k = len(bush)
    return BushReport(tuple(float(v) for v in x), len(through), prof.nu_max, k, tuple(bush),
                      tuple(certified), R, bound, bound / (k * f.delta ** (f.n - 1)))
