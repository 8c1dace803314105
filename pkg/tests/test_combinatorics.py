import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubekit.combinatorics import (AssignmentInstance, SumsetInstance, grid_assignment_instance,
                                   max_difference_fiber, random_assignment_instance,
                                   random_sumset_instance, select_simplex, simplex_volume,
                                   step_bound, sumset_bound_check, verify_simplex)
from tubekit.errors import PreconditionError


def test_simplex_volume_standard():
    assert simplex_volume(np.array([[0, 0], [1, 0], [0, 1]])) == pytest.approx(0.5)
    assert simplex_volume(np.vstack([np.zeros(3), np.eye(3)])) == pytest.approx(1 / 6)


def test_step_bound_by_hand():
    assert step_bound(0.5, 1) == [5]
    assert step_bound(0.5, 2) == [9, 801]


def test_instance_rejects_thin_rows():
    A = np.array([[True, False, False, False]])
    with pytest.raises(PreconditionError):
        AssignmentInstance([[0.0, 0.0]], [1.0], [1, 1, 1, 1], A, 0.5)


def test_instance_dict_roundtrip():
    inst = random_assignment_instance(seed=3, cells=10, universe=8)
    back = AssignmentInstance.from_dict(inst.to_dict())
    assert np.array_equal(back.assignment, inst.assignment) and np.allclose(back.points, inst.points)


def test_full_assignment_shares_everything():
    inst = grid_assignment_instance(2, 6, 10, 0.5, 1.0)
    res = select_simplex(inst)
    v = verify_simplex(inst, res)
    assert v["a"] and v["b"]
    assert v["common_weight"] == pytest.approx(10.0)


def test_degenerate_single_row_still_verifies():
    inst = grid_assignment_instance(2, 8, 16, 0.5, 0.9, rows=1)
    res = select_simplex(inst)
    v = verify_simplex(inst, res)
    assert v["a"] and v["b"]
    assert len(res.indices) == 3


@pytest.mark.parametrize("seed", range(5))
def test_random_instances_verify(seed):
    inst = random_assignment_instance(n=2 + seed % 2, cells=60, universe=32, c=0.5, seed=seed)
    res = select_simplex(inst)
    v = verify_simplex(inst, res)
    assert v["a"] and v["b"]
    assert res.c_prime > 0 and res.lam > 0


def test_verify_catches_tampering():
    inst = random_assignment_instance(seed=1, cells=40, universe=16)
    res = select_simplex(inst)
    bad = type(res)(res.indices, res.points, res.common_weight + 1, res.simplex_volume,
                    res.c_prime, res.lam, res.radii, res.multi_index, res.steps)
    assert not verify_simplex(inst, bad)["a"]
    dup = type(res)((0, 0, 1), res.points, 0, 0, 0, 0, (), (), 0)
    assert verify_simplex(inst, dup)["a"] is False


def test_sumset_worked_instance():
    A = tuple((a,) for a in range(10))
    G = tuple(((a,), (b,)) for a in range(10) for b in range(10) if a + b <= 9)
    rep = sumset_bound_check(SumsetInstance(A, A, G))
    assert rep.lhs == 55 and rep.M == 5 and rep.N0 == 10
    assert rep.witness == (0,)
    assert rep.rhs == pytest.approx(5 ** (1 / 6) * 10 ** (11 / 6))
    assert rep.holds


def test_sumset_rejects_foreign_pairs():
    with pytest.raises(PreconditionError):
        SumsetInstance(((0,),), ((0,),), (((1,), (0,)),))
    with pytest.raises(PreconditionError):
        SumsetInstance(((0,), (1, 2)), ((0,),), ())


@given(st.integers(0, 100_000))
def test_fiber_pigeonhole_and_bruteforce(seed):
    inst = random_sumset_instance(rank=2, max_size=12, span=4, seed=seed)
    M, w = max_difference_fiber(inst.G)
    cnt = Counter(tuple(x - y for x, y in zip(a, b)) for a, b in inst.G)
    assert M == max(cnt.values()) and cnt[w] == M
    assert M * len(cnt) >= len(set(inst.G))
    rep = sumset_bound_check(inst)
    assert rep.holds
    assert rep.lhs <= len(set(inst.A)) * len(set(inst.B))


def test_sumset_dict_roundtrip():
    inst = random_sumset_instance(seed=7)
    assert SumsetInstance.from_dict(inst.to_dict()) == inst


def test_max_fiber_empty():
    assert max_difference_fiber([]) == (0, None)
    assert math.isclose(sumset_bound_check(SumsetInstance(((0,),), ((0,),), (((0,), (0,)),))).rhs, 1.0)
