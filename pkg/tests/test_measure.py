import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Polygon
from shapely.ops import unary_union

from tubekit.constructions import standard_configuration
from tubekit.errors import PreconditionError
from tubekit.measure import (bush_check, lower_bound, multiplicity_at, multiplicity_many,
                             multiplicity_profile, resolve_threads, tail_separation_angle,
                             union_volume)
from tubekit.tubes import TubeFamily, lens_volume


def _random_family(seed, N=12, n=2, delta=0.1, spread=0.5):
    rng = np.random.default_rng(seed)
    return TubeFamily.from_arrays(rng.uniform(-spread, spread, (N, n)), rng.normal(size=(N, n)), delta)


def _shapely_area(f):
    polys = []
    for t in f.tubes:
        e = t.e
        u = np.array([-e[1], e[0]])
        polys.append(Polygon([t.a + s * e / 2 + q * t.radius * u
                              for s, q in ((-1, -1), (1, -1), (1, 1), (-1, 1))]))
    return unary_union(polys).area


@given(st.integers(0, 10_000))
def test_multiplicity_matches_bruteforce(seed):
    f = _random_family(seed, n=3)
    X = np.random.default_rng(seed + 1).uniform(-0.7, 0.7, (200, 3))
    brute = np.sum([t.contains(X) for t in f.tubes], axis=0)
    assert np.array_equal(multiplicity_many(f, X), brute)
    assert multiplicity_at(f, X[0]) == brute[0]


def test_union_volume_disjoint_is_sum():
    f = TubeFamily.from_arrays([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 0, 1]] * 3, 0.2)
    v = union_volume(f, budget=1 << 21, seed=1)
    exact = 3 * math.pi * 0.01
    assert abs(v.value - exact) <= max(v.abs_error_95, 1e-9) * 1.5


def test_union_volume_parallel_overlap():
    f = TubeFamily.from_arrays([[0, 0, 0], [0.05, 0, 0.5]], [[0, 0, 1]] * 2, 0.2)
    exact = 2 * math.pi * 0.01 - 0.5 * lens_volume(2, 0.1, 0.05)
    v = union_volume(f, budget=1 << 21, seed=2)
    assert abs(v.value - exact) <= 1.5 * v.abs_error_95


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_union_volume_n2_against_shapely(seed):
    f = _random_family(seed)
    ref = _shapely_area(f)
    mc = union_volume(f, budget=1 << 21, seed=seed)
    assert abs(mc.value - ref) <= 1.5 * mc.abs_error_95
    g = union_volume(f, method="grid", grid_h=0.005)
    assert abs(g.value - ref) <= g.abs_error_95


def test_union_volume_thread_invariant():
    f = _random_family(5, n=3)
    a = union_volume(f, budget=1 << 20, seed=9, threads=1)
    b = union_volume(f, budget=1 << 20, seed=9, threads=4)
    assert a == b


def test_union_volume_target_stops_early():
    f = _random_family(6)
    v = union_volume(f, budget=1 << 24, seed=0, target_rel_error=0.05)
    assert v.converged and v.samples < 1 << 24
    assert v.abs_error_95 <= 0.05 * v.value


def test_union_volume_rejects_bad_input():
    with pytest.raises(PreconditionError):
        union_volume(TubeFamily(2, 0.1, ()))
    with pytest.raises(PreconditionError):
        union_volume(_random_family(0), method="nope")


def test_resolve_threads_env(monkeypatch):
    monkeypatch.setenv("TUBEKIT_THREADS", "3")
    assert resolve_threads(8) == 3
    monkeypatch.delenv("TUBEKIT_THREADS")
    assert resolve_threads(None) == 1


def test_lower_bound_regimes():
    assert lower_bound(100, 0.01, 2) == pytest.approx(0.1)
    assert lower_bound(10 ** 6, 0.01, 2) == pytest.approx(100.0)
    with pytest.raises(PreconditionError):
        lower_bound(10, 0.05, 2, strict=True)
    with pytest.raises(PreconditionError):
        lower_bound(0, 0.01, 2)


def test_multiplicity_profile_on_standard():
    f = standard_configuration(2, 1 / 32)
    p = multiplicity_profile(f, seed=0)
    assert p.nu_max == multiplicity_at(f, p.argmax_point)
    assert sum(p.histogram.values()) > 0


def test_tail_angle_geometry():
    assert tail_separation_angle(0.1, 0.05) == math.inf
    assert tail_separation_angle(0.01, 0.25) == pytest.approx(math.asin(0.02 / 0.24))


def test_bush_bound_is_a_lower_bound():
    f = standard_configuration(2, 1 / 32)
    rep = bush_check(f, seed=0)
    assert rep.k >= 1 and set(rep.certified) <= set(rep.bush)
    v = union_volume(f, budget=1 << 21, seed=0)
    assert rep.certified_bound <= v.value + v.abs_error_95
