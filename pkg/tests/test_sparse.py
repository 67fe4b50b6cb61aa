import json
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedom.dyadic import DyadicCube, Interval, SparseFamily, dilate, sparseness_check
from sparsedom.errors import CalibrationFailure, NotDyadic, ResolutionFloor
from sparsedom.operators import ModulatedMaximalSup, ModulatedSup, handle, make_profile
from sparsedom.signal import Signal
from sparsedom.sparse import (dilated_sparse_field, lerner_check, lerner_decompose, sparse_apply,
                              sparse_apply_field, sparse_dominate, verify_domination)

UNIT = Interval(F(0), F(1))
Q = Interval(F(1, 4), F(1, 4))


def sparse_oracle(f: Signal, cubes, p, x):
    total = 0.0
    for q in cubes:
        inside = lambda j: (F(j, f.n) - q.left) % 1 < q.length
        members = [j for j in range(f.n) if inside(j)]
        if inside(x) and members:
            total += np.mean([abs(f.values[j]) ** p for j in members]) ** (1 / p)
    return total


def random_family(rng, n, size):
    cubes = {DyadicCube(int(rng.integers(2)), int(k), int(rng.integers(2 ** k)))
             for k in rng.integers(1, 6, size=size)}
    return SparseFamily(F(1, 2), tuple(c.interval for c in cubes))


# sparse operators -------------------------------------------------------------

def test_sparse_apply_examples():
    one = Signal.constant(64)
    for p in (1.0, 2.0, 3.5):
        assert np.allclose(sparse_apply_field(one, [UNIT], p), 1.0)
    fam = [UNIT, Interval(F(0), F(1, 2)), Interval(F(0), F(1, 4))]
    x = round(0.1 * 64)
    assert sparse_apply(one, fam, 2.0, x) == pytest.approx(3.0)


@pytest.mark.parametrize("p", [1.0, 2.0, 1.5])
def test_sparse_apply_matches_double_loop(rng, p):
    n = 64
    f = Signal(rng.standard_normal(n))
    fam = random_family(rng, n, 8)
    field = sparse_apply_field(f, fam, p)
    for x in range(0, n, 7):
        assert field[x] == pytest.approx(sparse_oracle(f, fam, p, x), abs=1e-12)


@given(st.integers(0, 2 ** 31))
def test_sparse_apply_additive_and_monotone(seed):
    rng = np.random.default_rng(seed)
    n = 32
    f = Signal(rng.standard_normal(n))
    a, b = list(random_family(rng, n, 4)), list(random_family(rng, n, 4))
    b = [q for q in b if q not in a]
    both = sparse_apply_field(f, a + b, 2.0)
    assert np.allclose(both, sparse_apply_field(f, a, 2.0) + sparse_apply_field(f, b, 2.0))
    bigger = Signal(np.abs(f.values) + rng.random(n))
    assert np.all(sparse_apply_field(f, a, 2.0) <= sparse_apply_field(bigger, a, 2.0) + 1e-12)


def test_dilated_sparse_field_uses_dilated_average():
    n = 64
    f = Signal.indicator(n, Q)
    c = DyadicCube(0, 2, 1)
    field = dilated_sparse_field(f, [c], 3, 1.0)
    inside = Q.sample_indices(n)
    assert np.allclose(field[inside], 1 / 3)
    assert np.count_nonzero(field) == inside.size


# local oscillation decomposition -------------------------------------------------

def test_lerner_constant_signal():
    f = Signal.constant(64, 2.5)
    fam = lerner_decompose(f, UNIT)
    assert list(fam) == [UNIT]
    chk = lerner_check(f, UNIT, fam)
    assert np.all(chk.lhs == 0) and np.all(chk.rhs == 0) and chk.holds


def test_lerner_spike():
    f = Signal.spike(256, 77, 5.0)
    fam = lerner_decompose(f, UNIT)
    chk = lerner_check(f, UNIT, fam)
    assert chk.holds and chk.packing_ok
    assert sparseness_check(fam).certified


def test_lerner_random_trig_signals():
    for trial in range(20):
        f = Signal.trig(1024, 32, [7, trial])
        fam = lerner_decompose(f, UNIT)
        chk = lerner_check(f, UNIT, fam)
        assert chk.holds, chk.worst_gap
        assert chk.packing_ok


@given(st.integers(0, 2 ** 31), st.integers(0, 3))
def test_lerner_bound_property(seed, level):
    rng = np.random.default_rng(seed)
    f = Signal(np.round(rng.standard_normal(128), 1))
    q0 = DyadicCube(0, level, int(rng.integers(2 ** level))).interval
    fam = lerner_decompose(f, q0)
    chk = lerner_check(f, q0, fam)
    assert chk.holds and chk.packing_ok
    assert all(q0.contains(q) for q in fam)


def test_lerner_rejects_non_dyadic():
    with pytest.raises(NotDyadic):
        lerner_decompose(Signal.constant(64), Interval(F(1, 3), F(1, 4)))


# sparse domination ------------------------------------------------------------------

def test_dominate_zero_signal():
    prof = make_profile(128, frequency_bound=2)
    res = sparse_dominate(Signal.zeros(128), ModulatedSup(prof), Q)
    assert list(res.family) == [Q]
    assert res.c_empirical == 0


def test_dominate_identity_hand_trace():
    # Q* = [0, 3/4), so <chi_Q>_{1,Q*} = 1/3; identity exceeds A/3 on all of Q until A = 4
    f = Signal.indicator(64, Q)
    res = sparse_dominate(f, handle("identity"), Q, s=1.0)
    assert [a["A"] for a in res.attempts] == [1.0, 2.0]
    assert res.A == 4.0 and res.c0 == 4.0
    assert list(res.family) == [Q]
    assert res.c_empirical == pytest.approx(3.0)
    assert res.recursion_depth == 0 and res.node_count == 1
    assert res.dilated == [dilate(Q, 3)]


def test_dominate_fixed_A_failures():
    f = Signal.indicator(64, Q)
    with pytest.raises(CalibrationFailure):
        sparse_dominate(f, handle("identity"), Q, s=1.0, A=2.0)
    assert sparse_dominate(f, handle("identity"), Q, s=1.0, A=3.0).c_empirical == pytest.approx(3)
    cell = DyadicCube(0, 6, 20).interval
    with pytest.raises(ResolutionFloor):
        sparse_dominate(Signal.spike(64, 20), handle("identity"), cell, s=1.0, A=1.0)


def test_dominate_rejects_outside_support():
    with pytest.raises(ValueError):
        sparse_dominate(Signal.constant(64), handle("identity"), Q)


@pytest.mark.parametrize("maximal", [False, True])
def test_dominate_random_trig(maximal):
    n = 256
    prof = make_profile(n, frequency_bound=8)
    op = (ModulatedMaximalSup if maximal else ModulatedSup)(prof)
    f = Signal.trig(n, 32, [1, 0], support=Q)
    res = sparse_dominate(f, op, Q, s=2.0)
    assert sparseness_check(res.family).certified
    assert 0 < res.c_empirical < np.inf
    assert all(a["A"] < res.A or a["c0"] < res.c0 for a in res.attempts)
    field = dilated_sparse_field(f, res.cubes, 3, 2.0)
    assert np.all(res.op_values <= res.c_empirical * field + 1e-12)


def test_dominate_auto_monotone():
    n = 256
    prof = make_profile(n, frequency_bound=8)
    op = ModulatedSup(prof)
    f = Signal.trig(n, 32, [3, 0], support=Q)
    ok = []
    for A in (0.5, 1, 2, 4, 8, 16, 32):
        try:
            sparse_dominate(f, op, Q, s=2.0, A=A, c0=64.0)
            ok.append(True)
        except CalibrationFailure:
            ok.append(False)
    assert ok[-1]
    first = ok.index(True)
    assert all(ok[first:])


def test_dominate_json_roundtrip():
    f = Signal.trig(128, 16, [0, 0], support=Q)
    res = sparse_dominate(f, ModulatedSup(make_profile(128, frequency_bound=4)), Q)
    doc = json.loads(json.dumps(res.to_json()))
    assert doc["family"] == [list(c.to_triple()) for c in res.cubes]
    for key in ("A", "c_empirical", "recursion_depth", "node_count", "skipped"):
        assert key in doc
    assert len(doc["shifted_covers"]) == len(res.cubes)


def test_verify_domination():
    n = 128
    f = Signal.trig(n, 16, [5, 0], support=Q)
    res = sparse_dominate(f, ModulatedSup(make_profile(n, frequency_bound=4)), Q)
    rep = verify_domination(f, res.op_values, res, 2.0)
    assert rep.max_ratio == res.c_empirical
    assert rep.packing_ok
    assert verify_domination(f, np.zeros(n), res, 2.0).max_ratio == 0
    doubled = verify_domination(f.scaled(2), 2 * res.op_values, res, 2.0)
    assert np.allclose(doubled.ratios, rep.ratios, rtol=1e-12)
    assert sum(rep.to_json()["histogram"]["counts"]) == Q.sample_indices(n).size - rep.skipped
