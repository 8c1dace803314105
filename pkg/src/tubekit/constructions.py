"""Explicit tube families: standard, small-cap, embedded, slab and cascade."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, RegimeError
from .nets import cap_net, direction_net
from .tubes import ASYMPTOTIC_DELTA_MAX, DEFAULT_C0, TubeFamily, perp_basis


SEP_FACTOR = 2.2
KINDS = ("standard", "small_cap", "embedded", "slab", "cascade")


class RegimeWarning(UserWarning):
    """Constructor ran with delta outside the asymptotic regime."""


@dataclass(frozen=True)
class ConstructionSpec:
    kind: str
    n: int
    delta: float
    N_target: int | None = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


def _check_delta(delta: float, strict: bool) -> None:
    if not delta > 0:
        raise PreconditionError("delta must be positive", delta=delta)
    if delta >= ASYMPTOTIC_DELTA_MAX:
        if strict:
            raise PreconditionError("delta must be below 1/100 for asymptotic-regime constructors", delta=delta)
        warnings.warn(f"delta={delta:g} is outside the asymptotic regime delta < 1/100",
                      RegimeWarning, stacklevel=3)


def cross_section_lattice(m: int, pitch: float, radius: float) -> np.ndarray:
    """Points of ``pitch * Z^m`` inside the closed ball of ``radius``, sorted by
    norm and then lexicographically."""
    k = int(math.floor(radius / pitch + 1e-9))
    g = np.arange(-k, k + 1) * pitch
    P = np.stack([a.ravel() for a in np.meshgrid(*([g] * m), indexing="ij")], axis=1)
    norms = np.linalg.norm(P, axis=1)
    P, norms = P[norms <= radius + 1e-12], norms[norms <= radius + 1e-12]
    order = np.lexsort((*P.T[::-1], np.round(norms, 12)))
    return P[order]


def _place(directions: np.ndarray, offsets_per_dir, O: np.ndarray, delta: float,
           c0: float, height: float = 1.0) -> TubeFamily:
    centers, axes = [], []
    for e, offs in zip(directions, offsets_per_dir):
        if len(offs) == 0:
            continue
        B = perp_basis(e)
        centers.append(O + offs @ B)
        axes.append(np.repeat(e[None, :], len(offs), axis=0))
    n = directions.shape[1]
    if not centers:
        return TubeFamily(n, delta, (), c0)
    return TubeFamily.from_arrays(np.vstack(centers), np.vstack(axes), delta, height, c0)


def standard_configuration(n: int, delta: float, O=None, *, host_radius: float = 0.5,
                           sep_factor: float = SEP_FACTOR, pitch_factor: float = 2.0,
                           c0: float = DEFAULT_C0, strict: bool = False) -> TubeFamily:
    """A separated direction net, each direction carrying the parallel tubes of
    a ``pitch_factor * delta`` lattice that fit in a host tube of radius
    ``host_radius`` centered at ``O``."""
    _check_delta(delta, strict)
    O = np.zeros(n) if O is None else np.asarray(O, dtype=float)
    D = direction_net(n, sep_factor * delta)
    lattice = cross_section_lattice(n - 1, pitch_factor * delta, host_radius - delta / 2)
    return _place(D, [lattice] * len(D), O, delta, c0)


def small_cap_regime_limit(n: int, delta: float, K: float = 1.0) -> float:
    return K * delta ** (2 - 2 * n)


def _split(N: int, m: int) -> list:
    base, extra = divmod(N, m)
    return [base + (1 if i < extra else 0) for i in range(m)]


def small_cap_configuration(n: int, delta: float, N: int, O=None, *, K: float = 1.0,
                            sep_factor: float = SEP_FACTOR, c0: float = DEFAULT_C0,
                            axis=None, strict: bool = False) -> TubeFamily:
    """About ``sqrt(N)`` separated directions in a small cap, each carrying
    about ``sqrt(N)`` parallel tubes nearest to a common center."""
    _check_delta(delta, strict)
    if N < 1:
        raise PreconditionError("N must be >= 1", N=N)
    limit = small_cap_regime_limit(n, delta, K)
    if N > limit:
        raise RegimeError("N exceeds the small-N regime", N=N, crossover=limit)
    O = np.zeros(n) if O is None else np.asarray(O, dtype=float)
    e0 = np.zeros(n)
    e0[-1] = 1.0
    if axis is not None:
        e0 = np.asarray(axis, dtype=float)
    m = math.ceil(math.sqrt(N))
    sep = sep_factor * delta
    radius = max(sep, N ** (1 / (2 * n - 2)) * delta)
    while True:
        D = cap_net(e0, min(radius, math.pi / 2), sep, limit=m)
        if len(D) >= m:
            break
        if radius >= math.pi / 2:
            raise RegimeError("not enough separated directions for N", N=N, crossover=limit)
        radius *= 1.25
    counts = _split(N, m)
    host = 2 * delta * (math.ceil(max(counts) ** (1 / (n - 1))) + 1)
    lattice = cross_section_lattice(n - 1, 2 * delta, host)
    while len(lattice) < max(counts):
        host *= 1.5
        lattice = cross_section_lattice(n - 1, 2 * delta, host)
    return _place(D[:m], [lattice[:c] for c in counts], O, delta, c0)


def embedded_configuration(n: int, d: int, delta: float, N: int, *, K: float = 1.0,
                           c0: float = DEFAULT_C0, strict: bool = False) -> TubeFamily:
    """The d-dimensional sharp example lifted to R^d x {0}^(n-d)."""
    if not 2 <= d <= n:
        raise PreconditionError("embedded_configuration needs 2 <= d <= n", n=n, d=d)
    if N > K * delta ** (-2 * d):
        raise RegimeError("N exceeds the embedded regime", N=N, crossover=K * delta ** (-2 * d))
    if N <= small_cap_regime_limit(d, delta, K):
        base = small_cap_configuration(d, delta, N, K=K, c0=c0, strict=strict)
    else:
        one = standard_configuration(d, delta, c0=c0, strict=strict)
        copies = math.ceil(N / len(one))
        fams = [one.translated(np.eye(d)[0] * 10 * i) for i in range(copies)]
        base = TubeFamily.concat(fams).subset(range(N))
    if d == n:
        return base
    pad = np.zeros((len(base), n - d))
    return TubeFamily.from_arrays(np.hstack([base.centers, pad]), np.hstack([base.axes, pad]),
                                  delta, base.heights, c0)


def tube_box_extent(center, axis, delta, height) -> tuple[np.ndarray, np.ndarray]:
    """Exact axis-aligned bounding box of one tube."""
    A = np.asarray(axis, dtype=float)
    ext = height / 2 * np.abs(A) + delta / 2 * np.sqrt(np.clip(1 - A * A, 0, None))
    c = np.asarray(center, dtype=float)
    return c - ext, c + ext


def slab_configuration(n: int, d: int, delta: float, N: int, *, K: float = 1.0,
                       sep_factor: float = SEP_FACTOR, c0: float = DEFAULT_C0,
                       strict: bool = False) -> tuple[TubeFamily, Box]:
    """Pack tubes of height 1 into ``E x [0, 2]`` with
    ``E = [0, N^(1/2d) delta]^d x [0, delta]^(n-1-d)``.

    Directions form a separated cap around the vertical axis; for each one a
    horizontal lattice (pitch ``delta / cos(tilt)``) of tubes centered at
    height 1 is kept when the tube's exact bounding box fits.
    """
    if not 2 <= d <= n - 1:
        raise PreconditionError("slab_configuration needs 2 <= d <= n-1", n=n, d=d)
    _check_delta(delta, strict)
    if N > K * delta ** (-2 * d):
        raise RegimeError("N exceeds the slab regime", N=N, crossover=K * delta ** (-2 * d))
    L = N ** (1 / (2 * d)) * delta
    hi = np.array([L] * d + [delta] * (n - 1 - d) + [2.0])
    lo = np.zeros(n)
    box = Box(tuple(float(x) for x in lo), tuple(float(x) for x in hi))
    e_up = np.zeros(n)
    e_up[-1] = 1.0
    tilt_max = math.asin(min(1.0, max(0.0, L - delta)))
    if tilt_max <= 0:
        D = e_up[None, :]
    else:
        # tilting is only useful inside the first d coordinates
        D_full = cap_net(e_up, tilt_max, sep_factor * delta)
        D = D_full[np.all(np.abs(D_full[:, d:n - 1]) < 1e-12, axis=1)] if n - 1 > d else D_full
        if n - 1 > d and len(D) < len(D_full):
            sub = cap_net(np.eye(d + 1)[d], tilt_max, sep_factor * delta)
            D = np.zeros((len(sub), n))
            D[:, :d] = sub[:, :d]
            D[:, -1] = sub[:, d]
    centers, axes = [], []
    for e in D:
        cos_t = abs(e[-1])
        pitch = delta / max(cos_t, 1e-12)
        e_lo, e_hi = tube_box_extent(np.zeros(n), e, delta, 1.0)
        free_lo, free_hi = lo - e_lo, hi - e_hi
        if np.any(free_hi < free_lo - 1e-12):
            continue
        free_lo[-1] = free_hi[-1] = 1.0
        grids = []
        for j in range(n - 1):
            span = free_hi[j] - free_lo[j]
            k = int(math.floor(span / pitch + 1e-9))
            off = (span - k * pitch) / 2
            grids.append(free_lo[j] + off + np.arange(k + 1) * pitch)
        if free_hi[-1] - free_lo[-1] < -1e-12:
            continue
        P = np.stack([a.ravel() for a in np.meshgrid(*grids, indexing="ij")], axis=1)
        P = np.hstack([P, np.ones((len(P), 1))])
        centers.append(P)
        axes.append(np.repeat(e[None, :], len(P), axis=0))
    if not centers:
        return TubeFamily(n, delta, (), c0), box
    fam = TubeFamily.from_arrays(np.vstack(centers), np.vstack(axes), delta, 1.0, c0)
    return fam, box


def cascade_example(n: int, delta: float, *, K: float = 1.0, spacing: float = 10.0,
                    c0: float = DEFAULT_C0, strict: bool = False) -> list:
    """Small-cap components with N0, N0/2, ..., 1 tubes, placed ``spacing``
    apart along the first axis."""
    _check_delta(delta, strict)
    N0 = int(math.floor(small_cap_regime_limit(n, delta, K) + 1e-9))
    out, k = [], 0
    while True:
        Nk = max(1, N0 >> k)
        O = np.zeros(n)
        O[0] = spacing * k
        out.append(small_cap_configuration(n, delta, Nk, O, K=K, c0=c0))
        if Nk == 1:
            break
        k += 1
    return out


def build(spec: ConstructionSpec, strict: bool = False):
    """Dispatch a :class:`ConstructionSpec`; returns a family (or family, box
    for slabs, or a list for cascades)."""
    p = dict(spec.params)
    if spec.kind == "standard":
        return standard_configuration(spec.n, spec.delta, p.get("O"), strict=strict)
    if spec.kind == "small_cap":
        return small_cap_configuration(spec.n, spec.delta, int(spec.N_target), p.get("O"), strict=strict)
    if spec.kind == "embedded":
        return embedded_configuration(spec.n, int(p["d"]), spec.delta, int(spec.N_target), strict=strict)
    if spec.kind == "slab":
        return slab_configuration(spec.n, int(p["d"]), spec.delta, int(spec.N_target), strict=strict)
    if spec.kind == "cascade":
        return cascade_example(spec.n, spec.delta, strict=strict)
    raise PreconditionError("unknown construction kind", kind=spec.kind)
