"""Separated direction nets on the projective sphere S^{n-1}/{+-1}."""
from __future__ import annotations

import math

import numpy as np

from .tubes import canonicalize, canonicalize_rows, perp_basis

_MAX_CANDIDATES = 200_000


def farthest_point_net(candidates: np.ndarray, sep: float, first: int = 0,
                       limit: int | None = None) -> np.ndarray:
    """Greedy farthest-point selection under ``arccos|u.v|``.

    Starts from ``candidates[first]`` and keeps adding the candidate farthest
    from the current net while that distance exceeds ``sep``. The result is
    pairwise ``sep``-separated and maximal among the candidates.
    """
    C = canonicalize_rows(candidates)
    cos_sep = math.cos(sep)
    chosen = [first]
    maxdot = np.abs(C @ C[first])
    while limit is None or len(chosen) < limit:
        j = int(np.argmin(maxdot))
        if maxdot[j] >= cos_sep:
            break
        chosen.append(j)
        np.maximum(maxdot, np.abs(C @ C[j]), out=maxdot)
    return C[chosen]


def _fibonacci_sphere(m: int) -> np.ndarray:
    i = np.arange(m) + 0.5
    z = 1 - 2 * i / m
    phi = math.pi * (3 - math.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def direction_net(n: int, sep: float, seed: int = 0) -> np.ndarray:
    """A maximal ``sep``-separated set of directions (rows, canonical)."""
    if n == 2:
        k = max(1, math.ceil(math.pi / sep) - 1)
        phi = np.arange(k) * math.pi / k
        return canonicalize_rows(np.stack([np.cos(phi), np.sin(phi)], axis=1))
    expected = 2 * ball_surface(n) / (sep ** (n - 1))
    m = int(min(_MAX_CANDIDATES, max(64, 8 * expected)))
    if n == 3:
        cand = _fibonacci_sphere(2 * m)
    else:
        cand = np.random.default_rng(seed).standard_normal((m, n))
    e = np.zeros(n)
    e[-1] = 1.0
    cand = np.vstack([e, cand])
    return farthest_point_net(cand, sep)


def ball_surface(n: int) -> float:
    """Surface area of S^{n-1}."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def cap_candidates(e0, radius: float, pitch: float, seed: int = 0) -> np.ndarray:
    e0 = canonicalize(e0)
    n = e0.size
    B = perp_basis(e0)
    if n == 2:
        m = max(3, int(math.ceil(2 * radius / pitch)) * 2 + 1)
        t = np.linspace(-radius, radius, m)
        t = t[np.argsort(np.abs(t), kind="stable")]
        V = t[:, None] * B[0][None, :]
    else:
        side = int(math.ceil(radius / pitch))
        if (2 * side + 1) ** (n - 1) <= _MAX_CANDIDATES:
            g = np.arange(-side, side + 1) * pitch
            grid = np.stack([a.ravel() for a in np.meshgrid(*([g] * (n - 1)), indexing="ij")], axis=1)
        else:
            rng = np.random.default_rng(seed)
            grid = rng.standard_normal((_MAX_CANDIDATES, n - 1))
            grid *= (radius * rng.random(len(grid)) ** (1 / (n - 1)) / np.linalg.norm(grid, axis=1))[:, None]
        norms = np.linalg.norm(grid, axis=1)
        keep = norms <= radius
        grid, norms = grid[keep], norms[keep]
        order = np.lexsort((*grid.T[::-1], norms))
        V = grid[order] @ B
    t = np.linalg.norm(V, axis=1)
    safe = np.where(t > 0, t, 1.0)
    D = np.cos(t)[:, None] * e0 + (np.sin(t) / safe)[:, None] * V
    return D


def cap_net(e0, radius: float, sep: float, limit: int | None = None, seed: int = 0) -> np.ndarray:
    """``sep``-separated directions within angle ``radius`` of ``e0``; the
    first row is ``e0`` and the rest follow farthest-point order."""
    cand = cap_candidates(e0, radius, sep / 4, seed)
    return farthest_point_net(cand, sep, 0, limit)
