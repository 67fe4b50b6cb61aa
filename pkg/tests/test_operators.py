import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedom import _kernels
from sparsedom._accel import HAVE_NUMBA
from sparsedom.dyadic import DyadicCube, dilate
from sparsedom.errors import DivergentSum, EpsilonBelowResolution
from sparsedom.operators import (KappaProbe, KernelSpec, ModulatedMaximalSup, ModulatedSup,
                                 ModulationFamily, _annulus_term, calibrate_weak_norm,
                                 grand_sharp, grand_sharp_field, handle, kappa_estimate, kernel,
                                 make_profile, maximal_truncated, maximal_truncated_field,
                                 modulated_components, modulated_maximal_sup,
                                 modulated_maximal_sup_field, modulated_sup, modulated_sup_field,
                                 sharp_cubes, truncated_apply, truncated_field, weak_norm_estimate,
                                 wq_calibrate, wq_exceedance)
from sparsedom.signal import Signal

HILBERT = kernel("periodic_hilbert")


def modulate(f: Signal, xi: int) -> Signal:
    return Signal(f.values * np.exp(2j * np.pi * xi * np.arange(f.n) / f.n))


def loop_truncated(f: Signal, k: KernelSpec, eps: float, x: int):
    total = 0.0
    for j in range(f.n):
        d = (x - j) / f.n
        d -= round(d)
        if abs(d) > eps and d != 0:
            total += float(k.profile(np.array(d))) * f.values[j]
    return total / f.n


# kernels and truncations ---------------------------------------------------

def test_kernel_registry():
    assert kernel("periodic_hilbert").odd_symmetric
    assert kernel("perturbed_hilbert", a=0.3, h="cos").odd_symmetric
    assert not kernel("perturbed_hilbert", a=0.3, h="sin").odd_symmetric
    with pytest.raises(ValueError):
        kernel("perturbed_hilbert", a=1.0)
    with pytest.raises(ValueError):
        kernel("nope")
    with pytest.raises(ValueError):
        HILBERT.evaluate(0.25, 1.25)
    assert HILBERT.evaluate(0.25, 0.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kernel("line_hilbert").conv_vector(8)


def test_truncated_examples(rng):
    one = Signal.constant(64)
    for x in (0, 5, 63):
        assert abs(truncated_apply(one, HILBERT, 1 / 128, x)) < 1e-12
    f = Signal(rng.standard_normal(64))
    assert truncated_apply(f, HILBERT, 0.5, 3) == 0
    with pytest.raises(EpsilonBelowResolution):
        truncated_apply(f, HILBERT, 1 / 256, 0)


@pytest.mark.parametrize("eps", [1 / 128, 1 / 64, 3 / 64, 0.25])
def test_truncated_matches_loop(rng, eps):
    f = Signal(rng.standard_normal(64))
    k = kernel("perturbed_hilbert", a=0.4, h="sin")
    field = truncated_field(f, k, eps)
    for x in (0, 17, 40):
        expect = loop_truncated(f, k, eps, x)
        assert truncated_apply(f, k, eps, x) == pytest.approx(expect, abs=1e-12)
        assert field[x] == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("freq", [1, 3, 10])
def test_conjugate_function_discrete_multiplier(freq):
    n = 4096
    y = np.arange(n) / n
    f = Signal(np.cos(2 * np.pi * freq * y))
    got = truncated_field(f, HILBERT, 1 / (2 * n))
    # the sampled kernel acts on e(k y) as -i sgn(k) (1 - 2|k| / N)
    expect = (1 - 2 * freq / n) * np.sin(2 * np.pi * freq * y)
    assert np.max(np.abs(got - expect)) <= 1e-12
    assert np.max(np.abs(got - np.sin(2 * np.pi * freq * y))) == pytest.approx(2 * freq / n, rel=1e-9)


@pytest.mark.xfail(strict=True, reason="quadrature bias is 2/N, larger than 1e-6 at N=4096")
def test_conjugate_function_within_1e6():
    n = 4096
    y = np.arange(n) / n
    got = truncated_field(Signal(np.cos(2 * np.pi * y)), HILBERT, 1 / (2 * n))
    assert np.max(np.abs(got - np.sin(2 * np.pi * y))) <= 1e-6


@given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
def test_truncated_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    f, g = Signal(rng.standard_normal(32)), Signal(rng.standard_normal(32))
    lhs = truncated_field(Signal(a * f.values + b * g.values), HILBERT, 1 / 64)
    rhs = a * truncated_field(f, HILBERT, 1 / 64) + b * truncated_field(g, HILBERT, 1 / 64)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_maximal_truncated_matches_loop(rng):
    f = Signal(rng.standard_normal(64))
    prof = make_profile(64, frequency_bound=0)
    field = maximal_truncated_field(f, HILBERT)
    for x in (0, 9, 33):
        expect = max(abs(truncated_apply(f, HILBERT, e, x)) for e in prof.epsilon_grid)
        assert maximal_truncated(f, HILBERT, x) == pytest.approx(expect, abs=1e-12)
        assert field[x] == pytest.approx(expect, abs=1e-12)
        assert field[x] >= abs(truncated_apply(f, HILBERT, prof.base_epsilon, x)) - 1e-12
    assert np.all(np.abs(maximal_truncated_field(Signal.constant(64), HILBERT)) < 1e-12)


def test_epsilon_grid():
    prof = make_profile(16, frequency_bound=1)
    assert prof.epsilon_grid[0] == prof.base_epsilon == 1 / 32
    assert prof.epsilon_grid[1:] == tuple(2 ** l / 16 for l in range(5))


# modulated suprema -----------------------------------------------------------

def test_modulated_sup_single_frequency(rng):
    f = Signal(rng.standard_normal(64))
    prof = make_profile(64, frequency_bound=0)
    assert np.allclose(modulated_sup_field(f, prof),
                       np.abs(truncated_field(f, HILBERT, prof.base_epsilon)), atol=1e-12)


def test_modulated_sup_matches_loop(rng):
    f = Signal(rng.standard_normal(64))
    prof = make_profile(64, frequency_bound=3)
    for x in (0, 31):
        expect = max(abs(truncated_apply(modulate(f, xi), HILBERT, prof.base_epsilon, x))
                     for xi in prof.modulation.frequencies)
        assert modulated_sup(f, prof, x) == pytest.approx(expect, abs=1e-12)
        expect_max = max(abs(truncated_apply(modulate(f, xi), HILBERT, e, x))
                         for xi in prof.modulation.frequencies for e in prof.epsilon_grid)
        assert modulated_maximal_sup(f, prof, x) == pytest.approx(expect_max, abs=1e-12)


def test_modulated_sup_monotone_in_frequencies(rng):
    f = Signal(rng.standard_normal(128))
    small = make_profile(128, frequency_bound=2)
    big = small.with_frequencies(range(-5, 9))
    assert np.all(modulated_sup_field(f, small) <= modulated_sup_field(f, big) + 1e-12)


def test_symmetric_family_equals_nonnegative_for_real_signals(rng):
    f = Signal(rng.standard_normal(128))
    sym = make_profile(128, frequency_bound=6)
    pos = sym.with_frequencies(ModulationFamily.nonnegative(6).frequencies)
    assert np.allclose(modulated_sup_field(f, sym), modulated_sup_field(f, pos), atol=1e-12)


def test_maximal_modulated_dominates(rng):
    f = Signal(rng.standard_normal(128))
    prof = make_profile(128, frequency_bound=4)
    mx = modulated_maximal_sup_field(f, prof)
    assert np.all(mx >= modulated_sup_field(f, prof) - 1e-12)
    assert np.all(mx >= maximal_truncated_field(f, HILBERT) - 1e-12)
    assert np.all(modulated_maximal_sup_field(Signal.zeros(128), prof) == 0)


@given(st.integers(0, 2 ** 31))
def test_modulated_sup_sublinear(seed):
    rng = np.random.default_rng(seed)
    f, g = Signal(rng.standard_normal(64)), Signal(rng.standard_normal(64))
    prof = make_profile(64, frequency_bound=3)
    for op in (ModulatedSup(prof), ModulatedMaximalSup(prof)):
        lhs = op.field(Signal(f.values + g.values))
        assert np.all(lhs <= op.field(f) + op.field(g) + 1e-12)


def test_modulated_components(rng):
    f = Signal(rng.standard_normal(32))
    prof = make_profile(32, frequency_bound=2)
    comps = modulated_components(f, prof)
    assert comps.shape == (32, 5)
    assert np.allclose(np.abs(comps).max(axis=1), modulated_sup_field(f, prof), atol=1e-12)


def test_handle_registry():
    prof = make_profile(16, frequency_bound=1)
    assert isinstance(handle("modulated_sup", prof), ModulatedSup)
    assert handle("identity")(Signal(np.arange(16.0) - 3), 1) == 2
    with pytest.raises(ValueError):
        handle("nope", prof)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
@pytest.mark.parametrize("maximal", [False, True])
def test_backends_agree(rng, maximal):
    n = 256
    prof = make_profile(n, frequency_bound=5)
    f = rng.standard_normal(n) / n
    support = np.flatnonzero(rng.random(n) < 0.6)
    pts = rng.choice(n, 40, replace=False)
    a = _kernels.modulated_values(f, support, pts, prof.conv, prof.phase, prof.bucket, prof.m,
                                  maximal, use_numba=True)
    b = _kernels.modulated_values(f, support, pts, prof.conv, prof.phase, prof.bucket, prof.m,
                                  maximal, use_numba=False)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    cubes = sharp_cubes(n, 3)[:40]
    arcs = np.array([c.sample_arc(n) for c in cubes])
    ex = np.array([(arcs[i, 0] - arcs[i, 1], 3 * arcs[i, 1]) for i in range(len(cubes))]) % [n, n + 1]
    args = (f, support, arcs[:, 0], arcs[:, 1], ex[:, 0], ex[:, 1], prof.conv, prof.phase,
            prof.bucket, prof.m, maximal)
    assert np.allclose(_kernels.cube_oscillations(*args, use_numba=True),
                       _kernels.cube_oscillations(*args, use_numba=False), rtol=1e-12, atol=1e-14)


def test_bucket_table():
    b = _kernels.bucket_table(16)
    dist = np.minimum(np.arange(16), 16 - np.arange(16))
    for d in range(1, 16):
        assert b[d] == math.ceil(math.log2(dist[d]))
    assert b[0] == -1


# grand sharp maximal function ------------------------------------------------

def grand_sharp_oracle(f: Signal, prof, alpha, x):
    n = f.n
    best = 0.0
    for c in sharp_cubes(n, alpha):
        idx = c.sample_arc(n)
        pts = (idx[0] + np.arange(idx[1])) % n
        if x not in pts:
            continue
        inside = dilate(c.interval, alpha).sample_indices(n)
        g = f.values.copy()
        g[inside] = 0
        vals = modulated_sup_field(Signal(g), prof)[pts]
        best = max(best, max(abs(a - b) for a in vals for b in vals))
    return best


def test_grand_sharp_matches_pair_oracle(rng):
    n = 64
    f = Signal(rng.standard_normal(n))
    prof = make_profile(n, frequency_bound=2)
    field = grand_sharp_field(f, prof, 3)
    for x in (0, 21, 50):
        assert field[x] == pytest.approx(grand_sharp_oracle(f, prof, 3, x), abs=1e-12)
        assert grand_sharp(f, prof, 3, x) == pytest.approx(field[x], abs=1e-12)


def test_grand_sharp_trivial_cases():
    n = 128
    prof = make_profile(n, frequency_bound=2)
    assert np.all(grand_sharp_field(Signal.zeros(n), prof, 3) == 0)
    spike = Signal.spike(n, 40)
    assert grand_sharp(spike, prof, 3, 40) == 0
    with pytest.raises(ValueError):
        grand_sharp_field(spike, prof, 4)


def test_sharp_cubes_policy():
    cubes = sharp_cubes(256, 3)
    assert {c.grid_id for c in cubes} == {0, 1}
    assert all(F(8, 256) <= c.length <= F(1, 6) for c in cubes)


# Hormander constants -----------------------------------------------------------

def test_annulus_term_vanishes_for_equal_points():
    diff = np.zeros((3, 10))
    assert np.all(_annulus_term(diff, np.full(10, 0.1), 2.0, 0.5) == 0)


@pytest.mark.parametrize("s,r", [(1.5, 2.0), (2.0, 3.0), (1.0, 1.5)])
def test_kappa_nesting(s, r):
    probe = KappaProbe(n=512, seed=3)
    for name in ("periodic_hilbert", "line_hilbert"):
        k = kernel(name)
        assert kappa_estimate(k, s, probe).value <= kappa_estimate(k, r, probe).value * (1 + 1e-9)


def test_kappa_line_stabilizes():
    k = kernel("line_hilbert")
    a = kappa_estimate(k, 2, KappaProbe(n=1024, k_max=20)).value
    b = kappa_estimate(k, 2, KappaProbe(n=1024, k_max=30)).value
    assert abs(a - b) <= 0.01 * b


def test_kappa_reports_budget():
    est = kappa_estimate(HILBERT, 2, KappaProbe(n=256, positions=2, pairs=4))
    assert est.cubes > 0 and est.pairs > 0 and est.k_max == 20
    assert est.to_json()["kappa"] == est.value > 0


def test_kappa_divergent_kernel():
    grow = KernelSpec("linear", lambda t: t, False, periodic=False)
    with pytest.raises(DivergentSum):
        kappa_estimate(grow, 2, KappaProbe(n=256, k_max=20))


# empirical weak norms and W_q ---------------------------------------------------

def trig_family(n, count, seed=0, support=None):
    return [Signal.trig(n, 8, [seed, i], support=support) for i in range(count)]


def test_weak_norm_trivial_and_homogeneous():
    prof = make_profile(256, frequency_bound=0)
    assert weak_norm_estimate(prof, 2, [Signal.zeros(256)]) == 0
    fam = trig_family(256, 3)
    a = weak_norm_estimate(prof, 1.5, fam)
    b = weak_norm_estimate(prof, 1.5, [f.scaled(2) for f in fam])
    assert a == pytest.approx(b, rel=1e-12) and a > 0
    cal = calibrate_weak_norm(prof, 1.5, fam)
    assert cal.weak_norm_estimates[3.0] == pytest.approx(a)
    with pytest.raises(ValueError):
        weak_norm_estimate(prof, 3, fam)


def test_weak_norm_stable_across_resolutions():
    vals = [weak_norm_estimate(make_profile(n, frequency_bound=0), 2, trig_family(n, 4))
            for n in (512, 1024, 2048)]
    assert max(vals) <= 1.2 * min(vals)


WQ_LAMBDAS = (0.5, 0.25, 0.125)


def wq_setup():
    n = 512
    q = DyadicCube(0, 1, 0).interval
    prof = make_profile(n, frequency_bound=4)
    cal_family = trig_family(n, 12, seed=1, support=q)
    return q, cal_family, wq_calibrate(prof, q, 2.0, WQ_LAMBDAS, cal_family)


def test_wq_threshold_holds_per_trial_on_calibration_family():
    q, family, cal = wq_setup()
    assert set(cal.wq_threshold) == set(WQ_LAMBDAS)
    for f in family:
        for lam, frac in wq_exceedance(cal, q, 2.0, f).items():
            assert frac <= lam


def test_wq_threshold_holds_on_average_for_fresh_family():
    q, _, cal = wq_setup()
    fresh = [wq_exceedance(cal, q, 2.0, f) for f in trig_family(512, 30, seed=2, support=q)]
    for lam in WQ_LAMBDAS:
        assert np.mean([e[lam] for e in fresh]) <= lam


@pytest.mark.xfail(strict=True, reason="a sample-max threshold does not bound every unseen trial")
def test_wq_threshold_holds_per_trial_for_fresh_family():
    q, _, cal = wq_setup()
    for f in trig_family(512, 30, seed=2, support=q):
        for lam, frac in wq_exceedance(cal, q, 2.0, f).items():
            assert frac <= lam
