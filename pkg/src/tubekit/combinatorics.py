"""Simplex selection over weighted assignments, and sumset/difference-fiber checks."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InternalError, PreconditionError


# ---------------------------------------------------------------- assignments

@dataclass(frozen=True, eq=False)
class AssignmentInstance:
    """Finite surrogate of the measure-theoretic setting.

    ``points`` (K x n) are cell centers of S with areas ``cell_weights``;
    ``universe_weights`` (U,) is the weighted ground set E and
    ``assignment`` (K x U, bool) holds the sets E_x row by row.
    """

    points: np.ndarray
    cell_weights: np.ndarray
    universe_weights: np.ndarray
    assignment: np.ndarray
    c: float

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.cell_weights, dtype=float)
        mu = np.asarray(self.universe_weights, dtype=float)
        A = np.asarray(self.assignment, dtype=bool)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "cell_weights", w)
        object.__setattr__(self, "universe_weights", mu)
        object.__setattr__(self, "assignment", A)
        if len(w) != len(P) or A.shape != (len(P), len(mu)):
            raise PreconditionError("instance arrays have inconsistent shapes")
        if np.any(w <= 0) or np.any(mu < 0) or mu.sum() <= 0:
            raise PreconditionError("weights must be positive")
        if not 0 < self.c < 1:
            raise PreconditionError("c must lie in (0, 1)", c=self.c)
        got = A.astype(float) @ mu
        bad = np.flatnonzero(got < self.c * mu.sum() - 1e-12)
        if len(bad):
            raise PreconditionError("assignment weight below c * weight(E)", index=int(bad[0]),
                                    weight=float(got[bad[0]]), required=float(self.c * mu.sum()))

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def to_dict(self) -> dict:
        return {"n": self.n, "c": self.c, "points": self.points.tolist(),
                "cell_weights": self.cell_weights.tolist(),
                "universe_weights": self.universe_weights.tolist(),
                "assignment": [np.flatnonzero(r).tolist() for r in self.assignment]}

    @classmethod
    def from_dict(cls, d: dict) -> "AssignmentInstance":
        pts = np.asarray(d["points"], dtype=float)
        U = len(d["universe_weights"])
        A = np.zeros((len(pts), U), dtype=bool)
        for i, row in enumerate(d["assignment"]):
            A[i, np.asarray(row, dtype=int)] = True
        if "n" in d and pts.shape[1] != int(d["n"]):
            raise PreconditionError("points do not match declared dimension")
        return cls(pts, d["cell_weights"], d["universe_weights"], A, float(d["c"]))


def random_assignment_instance(n: int = 2, cells: int = 100, universe: int = 64, c: float = 0.5,
                               keep: float = 0.8, seed: int = 0) -> AssignmentInstance:
    """Uniform random cells in [0,1]^n (equal areas summing to 1) and random
    subsets of a uniform ground set, each holding at least ``max(c, keep)`` of it."""
    rng = np.random.default_rng(seed)
    pts = rng.random((cells, n))
    k = max(math.ceil(c * universe), int(round(keep * universe)))
    A = np.zeros((cells, universe), dtype=bool)
    for i in range(cells):
        A[i, rng.choice(universe, size=k, replace=False)] = True
    return AssignmentInstance(pts, np.full(cells, 1.0 / cells), np.full(universe, 1.0), A, c)


def grid_assignment_instance(n: int, side: int, universe: int, c: float, keep: float,
                             seed: int = 0, rows: int | None = None) -> AssignmentInstance:
    """Cells of a ``side^n`` grid on [0,1]^n (optionally only the first ``rows``
    rows, giving a degenerate thin S)."""
    rng = np.random.default_rng(seed)
    g = (np.arange(side) + 0.5) / side
    P = np.stack([a.ravel() for a in np.meshgrid(*([g] * n), indexing="ij")], axis=1)
    if rows is not None:
        P = P[P[:, -1] < rows / side]
    k = max(math.ceil(c * universe), int(round(keep * universe)))
    A = np.zeros((len(P), universe), dtype=bool)
    for i in range(len(P)):
        A[i, rng.choice(universe, size=k, replace=False)] = True
    return AssignmentInstance(P, np.full(len(P), side ** -n), np.full(universe, 1.0), A, c)


def _dist_to_flat(X: np.ndarray, anchor: np.ndarray, basis: np.ndarray) -> np.ndarray:
    d = X - anchor
    if len(basis):
        d = d - (d @ basis.T) @ basis
    return np.linalg.norm(d, axis=1)


def _flat_basis(pts: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the directions spanned by ``pts - pts[0]``."""
    if len(pts) < 2:
        return np.empty((0, pts.shape[1]))
    M = pts[1:] - pts[0]
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return Vt[s > 1e-12 * max(1.0, s.max())]


def simplex_volume(pts: np.ndarray) -> float:
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[1]
    M = pts[1:] - pts[0]
    return abs(float(np.linalg.det(M))) / math.factorial(n)


def step_bound(c: float, n: int) -> list:
    """The per-coordinate bounds K_1..K_n of the multi-index."""
    K = []
    for k in range(n):
        q = 1
        for Kj in K:
            q = q * q + Kj
        K.append(1 + math.ceil(2 ** n * q * q / c))
    return K


@dataclass(frozen=True)
class SimplexResult:
    indices: tuple
    points: np.ndarray
    common_weight: float
    simplex_volume: float
    c_prime: float
    lam: float
    radii: tuple
    multi_index: tuple
    steps: int
    degenerate: bool = False
    trace: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "points": self.points.tolist(),
                "common_weight": self.common_weight, "simplex_volume": self.simplex_volume,
                "c_prime": self.c_prime, "lambda": self.lam, "radii": list(self.radii),
                "multi_index": list(self.multi_index), "steps": self.steps,
                "degenerate": self.degenerate}


def _median_radius(dist: np.ndarray, w: np.ndarray, target: float) -> float:
    """Smallest r with weight{dist <= r} >= target."""
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(w[order])
    j = int(np.searchsorted(cum, target * (1 - 1e-12), side="left"))
    return float(dist[order[min(j, len(order) - 1)]])


def select_simplex(inst: AssignmentInstance, max_steps: int | None = None) -> SimplexResult:
    """Find ``n+1`` points of S whose assigned sets share weight and which
    span a simplex of volume comparable to ``|S|``.

    Follows the step/substep elimination: each step grows a chain
    ``x_0, x_1, ...`` where ``x_{k+1}`` lies outside the neighborhood
    ``D_{k+1}`` of the flat through ``x_0..x_k`` that keeps half of the
    surviving mass, subject to a shrinking common-weight threshold. On failure
    the blocked region and the shared part of E are discarded and the
    multi-index advances.
    """
    P, w, mu, A = inst.points, inst.cell_weights, inst.universe_weights, inst.assignment
    n, c = inst.n, inst.c
    muE = float(mu.sum())
    Kb = step_bound(c, n)
    bound = max_steps if max_steps is not None else math.prod(Kb)
    I = [1] * n
    E_I = np.ones(len(mu), dtype=bool)
    S_I = np.ones(len(P), dtype=bool)
    c_I = c
    steps = 0
    trace = []
    while True:
        steps += 1
        if steps > bound:
            raise InternalError("simplex selection exceeded its step bound", steps=steps, bound=bound)
        if not S_I.any():
            return _degenerate(inst, trace, I, steps)
        Sw = float(w[S_I].sum())
        x0 = int(np.flatnonzero(S_I)[np.argmax(w[S_I])])
        chain = [x0]
        common = A[x0] & E_I
        region = S_I.copy()
        radii = []
        q = 1
        k = 0
        while k < n:
            q = q * q + I[k]
            thr = c_I * muE / (q * q)
            idx = np.flatnonzero(region)
            pts = P[chain]
            dist = _dist_to_flat(P[idx], pts[0], _flat_basis(pts))
            r = _median_radius(dist, w[idx], Sw / 2 ** (k + 1))
            inside = dist <= r
            cand = idx[~inside]
            if len(cand):
                inter = (A[cand] & common).astype(float) @ mu
                j = int(np.argmax(inter))
                ok = inter[j] >= thr
            else:
                ok = False
            if not ok:
                break
            radii.append(r)
            chain.append(int(cand[j]))
            common = common & A[cand[j]]
            region = np.zeros_like(region)
            region[idx[inside]] = True
            k += 1
        trace.append((tuple(I), tuple(chain), k))
        if k == n:
            pts = P[chain]
            weight = float(A[chain].all(axis=0).astype(float) @ mu)
            vol = simplex_volume(pts)
            return SimplexResult(tuple(chain), pts, weight, vol, weight / muE, vol / float(w.sum()),
                                 tuple(radii), tuple(I), steps, False, tuple(trace))
        shared = np.ones(len(mu), dtype=bool)
        for x in chain:
            shared &= A[x]
        shared &= E_I
        E_I = E_I & ~shared
        S_next = np.zeros_like(S_I)
        S_next[cand] = True
        S_I = S_next
        c_I = (1 - 1 / (q * q)) * c_I
        I = I[:k] + [I[k] + 1] + [1] * (n - k - 1)


def _degenerate(inst: AssignmentInstance, trace, I, steps) -> SimplexResult:
    """Best-effort completion when the discrete surrogate runs out of cells:
    greedy farthest points from the running flat, all in S."""
    P, mu, A = inst.points, inst.universe_weights, inst.assignment
    chain = [int(np.argmax(inst.cell_weights))]
    for _ in range(inst.n):
        pts = P[chain]
        dist = _dist_to_flat(P, pts[0], _flat_basis(pts))
        dist[chain] = -1
        chain.append(int(np.argmax(dist)))
    weight = float(A[chain].all(axis=0).astype(float) @ mu)
    vol = simplex_volume(P[chain])
    return SimplexResult(tuple(chain), P[chain], weight, vol, weight / float(mu.sum()),
                         vol / float(inst.cell_weights.sum()), (), tuple(I), steps, True, tuple(trace))


def verify_simplex(inst: AssignmentInstance, res: SimplexResult) -> dict:
    """Recompute both conclusions from scratch for a selection result.

    (a) the assigned sets of the chosen points share weight at least
    ``c' mu(E)``; (b) their simplex has volume at least ``lam |S|``. The
    shared set is enumerated element by element over the ground set.
    """
    idx = list(res.indices)
    if len(idx) != inst.n + 1 or len(set(idx)) != len(idx):
        return {"a": False, "b": False, "reason": "need n+1 distinct points"}
    shared = 0.0
    for u in range(len(inst.universe_weights)):
        if all(inst.assignment[i, u] for i in idx):
            shared += float(inst.universe_weights[u])
    muE = float(inst.universe_weights.sum())
    vol = simplex_volume(inst.points[idx])
    S = float(inst.cell_weights.sum())
    return {"a": shared >= res.c_prime * muE * (1 - 1e-12) and abs(shared - res.common_weight) <= 1e-9 * muE,
            "b": vol >= res.lam * S * (1 - 1e-12) and abs(vol - res.simplex_volume) <= 1e-12 + 1e-9 * vol,
            "common_weight": shared, "simplex_volume": vol,
            "c_prime": shared / muE, "lambda": vol / S}


# ---------------------------------------------------------------- sumsets

def _tuples(X) -> list:
    out = []
    for x in X:
        t = tuple(int(v) for v in np.atleast_1d(x))
        out.append(t)
    return out


def _norm_key(v: tuple):
    return (sum(a * a for a in v), v)


def max_difference_fiber(G) -> tuple[int, tuple | None]:
    """Largest fiber of ``(a, b) -> a - b`` over ``G`` and a maximizing difference.

    Among tied differences the one of smallest Euclidean norm is reported,
    then the lexicographically smallest.
    """
    pairs = [(_tuples([a])[0], _tuples([b])[0]) for a, b in G]
    if not pairs:
        return 0, None
    cnt = Counter(tuple(x - y for x, y in zip(a, b)) for a, b in pairs)
    M = max(cnt.values())
    witness = min((d for d, v in cnt.items() if v == M), key=_norm_key)
    return M, witness


@dataclass(frozen=True)
class SumsetInstance:
    A: tuple
    B: tuple
    G: tuple
    N0: int | None = None

    def __post_init__(self):
        A = tuple(_tuples(self.A))
        B = tuple(_tuples(self.B))
        G = tuple((_tuples([a])[0], _tuples([b])[0]) for a, b in self.G)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)
        sa, sb = set(A), set(B)
        for i, (a, b) in enumerate(G):
            if a not in sa or b not in sb:
                raise PreconditionError("G must be a subset of A x B", index=i)
        ranks = {len(x) for x in A + B}
        if len(ranks) > 1:
            raise PreconditionError("all points must share the group rank")
        if self.N0 is not None and max(len(sa), len(sb), len(self.C)) > self.N0:
            raise PreconditionError("#A, #B, #C must not exceed N0", N0=self.N0)

    @property
    def C(self) -> set:
        return {tuple(x + y for x, y in zip(a, b)) for a, b in self.G}

    @property
    def N0_effective(self) -> int:
        if self.N0 is not None:
            return int(self.N0)
        return max(len(set(self.A)), len(set(self.B)), len(self.C), 1)

    def to_dict(self) -> dict:
        return {"A": [list(a) for a in self.A], "B": [list(b) for b in self.B],
                "G": [[list(a), list(b)] for a, b in self.G], "N0": self.N0}

    @classmethod
    def from_dict(cls, d: dict) -> "SumsetInstance":
        return cls(tuple(map(tuple, d["A"])), tuple(map(tuple, d["B"])),
                   tuple((tuple(a), tuple(b)) for a, b in d["G"]), d.get("N0"))


@dataclass(frozen=True)
class SumsetReport:
    lhs: int
    rhs: float
    holds: bool
    M: int
    witness: tuple | None
    N0: int
    sizes: tuple

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "holds": self.holds, "M": self.M,
                "witness": list(self.witness) if self.witness is not None else None,
                "N0": self.N0, "sizes": {"A": self.sizes[0], "B": self.sizes[1], "C": self.sizes[2]}}


def sumset_bound_check(inst: SumsetInstance) -> SumsetReport:
    """Exhaustively compare ``#G`` with ``M^(1/6) N0^(11/6)``."""
    M, wit = max_difference_fiber(inst.G)
    N0 = inst.N0_effective
    lhs = len(set(inst.G))
    rhs = (max(M, 1) ** (1 / 6)) * N0 ** (11 / 6)
    return SumsetReport(lhs, rhs, lhs <= rhs * (1 + 1e-12), M, wit, N0,
                        (len(set(inst.A)), len(set(inst.B)), len(inst.C)))


def random_sumset_instance(rank: int = 2, max_size: int = 30, span: int = 6,
                           density: float | None = None, seed: int = 0) -> SumsetInstance:
    """Random A, B in a small box of Z^rank and a random G within A x B."""
    rng = np.random.default_rng(seed)
    pts = np.stack(np.meshgrid(*([np.arange(span)] * rank), indexing="ij"), -1).reshape(-1, rank)
    na, nb = rng.integers(1, max_size + 1, size=2)
    na, nb = min(na, len(pts)), min(nb, len(pts))
    A = pts[rng.choice(len(pts), na, replace=False)]
    B = pts[rng.choice(len(pts), nb, replace=False)]
    p = rng.random() if density is None else density
    keep = rng.random((na, nb)) < p
    G = [(A[i], B[j]) for i, j in zip(*np.nonzero(keep))]
    if not G:
        G = [(A[0], B[0])]
    return SumsetInstance(tuple(map(tuple, A)), tuple(map(tuple, B)), tuple(G))
