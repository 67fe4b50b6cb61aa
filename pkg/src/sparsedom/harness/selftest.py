"""Bundled invariant suites, run at fixed seeds on a few resolutions.

Each check reports (module, invariant id, n, witness). Failures are data,
never exceptions, so one broken invariant does not hide the others.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .. import dyadic, operators, signal, sparse
from ..dyadic import DyadicCube, Interval, SparseFamily
from ..errors import CalibrationFailure
from ..signal import Signal
from .config import ExperimentConfig

log = logging.getLogger(__name__)

LAMBDAS_MEDIAN = (Fraction(1, 8), Fraction(1, 4), Fraction(49, 100))


@dataclass
class Check:
    module: str
    invariant: str
    n: int
    passed: bool
    witness: dict = field(default_factory=dict)


@dataclass
class SelftestReport:
    checks: list
    experiment: str = "selftest"
    calibration: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    @property
    def violations(self) -> list:
        return [f"{c.module}/{c.invariant} n={c.n}: {c.witness}" for c in self.failures]

    @property
    def ok(self) -> bool:
        return not self.failures

    def table(self):
        rows = [[c.module, c.invariant, c.n, "pass" if c.passed else "fail"] for c in self.checks]
        return ["module", "invariant", "n", "status"], rows

    def to_json(self) -> dict:
        return {
            "checks": len(self.checks),
            "passed": len(self.checks) - len(self.failures),
            "failed": len(self.failures),
            "failures": [{"module": c.module, "invariant": c.invariant, "n": c.n,
                          "witness": c.witness} for c in self.failures],
            "violations": self.violations,
        }


class _Suite:
    def __init__(self, module: str, n: int):
        self.module, self.n = module, n
        self.checks: list[Check] = []

    def record(self, invariant: str, witness: dict | None = None):
        """Record a pass when ``witness`` is None, otherwise a failure."""
        self.checks.append(Check(self.module, invariant, self.n, witness is None, witness or {}))


def _rng(seed, *tags) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


def _random_cube(rng, max_level: int) -> DyadicCube:
    g = int(rng.integers(2))
    k = int(rng.integers(max_level + 1))
    return DyadicCube(g, k, int(rng.integers(1 << k)))


def _random_signal(rng, n: int) -> Signal:
    kind = rng.integers(3)
    if kind == 0:
        return Signal(rng.standard_normal(n))
    if kind == 1:
        return Signal(rng.integers(-3, 4, size=n).astype(float))
    return Signal(np.where(rng.random(n) < 0.3, rng.standard_normal(n), 0.0))


# ---------------------------------------------------------------------------


def dyadic_suite(n: int, seed: int) -> list[Check]:
    s = _Suite("dyadic", n)
    m = n.bit_length() - 1
    rng = _rng(seed, 1, n)
    wit = None
    for _ in range(50):
        c = _random_cube(rng, m - 3)
        d = int(rng.integers(1, 4))
        kids = dyadic.descendants(c, d)
        total = sum((k.length for k in kids), Fraction(0))
        ok = total == c.length and all(c.contains(k) for k in kids)
        ok &= all(kids[i].interval.intersection_measure(kids[j].interval) == 0
                  for i in range(len(kids)) for j in range(i + 1, len(kids)))
        if not ok:
            wit = {"cube": c.to_triple(), "depth": d}
            break
    s.record("partition", wit)

    wit = None
    for _ in range(200):
        a, b = _random_cube(rng, m), _random_cube(rng, m)
        b = DyadicCube(a.grid_id, b.level, b.index)
        inter = a.interval.intersection_measure(b.interval)
        if not (inter == 0 or a.contains(b) or b.contains(a)):
            wit = {"a": a.to_triple(), "b": b.to_triple()}
            break
    s.record("lattice", wit)

    wit = None
    for _ in range(200):
        length = int(rng.integers(1, n // 6 + 1))
        i = Interval(Fraction(int(rng.integers(n)), n), Fraction(length, n))
        c = dyadic.shifted_cover(i)
        if not (c.contains(i) and c.length <= 6 * i.length):
            wit = {"interval": i.to_json(), "cover": c.to_triple()}
            break
    s.record("cover_ratio", wit)

    fam = SparseFamily(Fraction(1, 2), tuple(c.interval for c in dyadic.all_cubes(range(2), (0,))))
    wit = None
    if dyadic.sparseness_check(fam).certified:
        for k in range(len(fam)):
            if not dyadic.sparseness_check(fam.without(k)).certified:
                wit = {"removed": k}
    else:
        wit = {"family": "levels 0..1 not certified"}
    s.record("packing_monotone", wit)
    return s.checks


def _is_admissible(vals: np.ndarray, med: float) -> bool:
    n = vals.size
    return 2 * np.count_nonzero(vals > med) <= n and 2 * np.count_nonzero(vals < med) <= n


def signal_suite(n: int, seed: int, median_fn: Callable = signal.median) -> list[Check]:
    s = _Suite("signal", n)
    rng = _rng(seed, 2, n)
    m = n.bit_length() - 1
    fails: dict[str, dict] = {}

    def fail(inv, **w):
        fails.setdefault(inv, w)

    for trial in range(10):
        f = _random_signal(rng, n)
        c = DyadicCube(0, int(rng.integers(0, m - 2)), 0)
        c = DyadicCube(0, c.level, int(rng.integers(1 << c.level)))
        q = c.interval
        vals = f.on(q)
        cnt = vals.size
        ts = [Fraction(j, n) for j in range(cnt + 1)]
        prof = np.array([signal.rearrangement(f, q, t) for t in ts])
        if np.any(np.diff(prof) > 0):
            fail("rearrangement_monotone", trial=trial, cube=c.to_triple())
        a = np.abs(vals)
        levels = np.unique(a)
        lhs = (prof[:-1, None] > levels[None, :]).sum(axis=0)
        rhs = (a[:, None] > levels[None, :]).sum(axis=0)
        if np.any(lhs != rhs):
            j = int(np.flatnonzero(lhs != rhs)[0])
            fail("equimeasurable", trial=trial, cube=c.to_triple(), level=float(levels[j]))
        for lam in (Fraction(1, 8), Fraction(1, 2)):
            rear = signal.rearrangement(f, q, lam * q.length)
            for delta in (0.5, 1.0, 2.0):
                rhs = (np.sum(a ** delta) / float(lam * cnt)) ** (1 / delta)
                if rear > rhs:
                    fail("average_bound", trial=trial, cube=c.to_triple(), lam=str(lam),
                         delta=delta)
        med = median_fn(f, q)
        if not _is_admissible(vals, med):
            i = int(np.argmin(np.abs(vals - med)))
            fail("median", check="admissible", trial=trial, cube=c.to_triple(), median=med,
                 sample=int(q.sample_indices(n)[i]))
        smaller = np.unique(vals[vals < med])
        if any(_is_admissible(vals, v) for v in smaller):
            fail("median", check="lowest_admissible", trial=trial, cube=c.to_triple(),
                 median=med)
        for lam in LAMBDAS_MEDIAN:
            if abs(med) > signal.rearrangement(f, q, lam * q.length):
                fail("median", check="median_bound", trial=trial, cube=c.to_triple(),
                     lam=str(lam), median=med)
        for p in (1.0, 1.5, 2.0, 3.0):
            a1 = signal.orlicz_norm(f, q, signal.power_young(p))
            a2 = signal.lp_average(f, q, p)
            if abs(a1 - a2) > 1e-8 * max(a2, 1e-300):
                fail("orlicz_power", trial=trial, p=p, orlicz=a1, lp=a2)
        k = float(rng.uniform(0.5, 3))
        g = f.scaled(k)
        for name, fn in (("lp", lambda h: signal.lp_average(h, q, 2)),
                         ("oscillation", lambda h: signal.oscillation(h, q, Fraction(1, 8)))):
            v1, v2 = fn(g), k * fn(f)
            if abs(v1 - v2) > 1e-12 * max(abs(v2), 1.0):
                fail("homogeneity", trial=trial, quantity=name, k=k)

    f = Signal(rng.standard_normal(n))
    q0 = Interval.full()
    for delta in (0.5, 1.0, 2.0):
        for lam in (Fraction(1, 8), Fraction(1, 4)):
            lhs = signal.local_sharp_maximal_field(f, q0, lam)
            rhs = float(lam) ** (-1 / delta) * signal.sharp_delta_maximal_field(f, q0, delta)
            bad = np.flatnonzero(lhs > rhs * (1 + 1e-12))
            if bad.size:
                fail("key_bound", delta=delta, lam=str(lam), sample=int(bad[0]))
    for inv in ("rearrangement_monotone", "equimeasurable", "average_bound", "median",
                "orlicz_power", "homogeneity", "key_bound"):
        s.record(inv, fails.get(inv))
    return s.checks


def operators_suite(n: int, seed: int) -> list[Check]:
    s = _Suite("operators", n)
    rng = _rng(seed, 3, n)
    prof = operators.make_profile(n, "periodic_hilbert", 4)
    sup, mx = operators.ModulatedSup(prof), operators.ModulatedMaximalSup(prof)
    f = Signal.trig(n, 8, [seed, 3, n, 0])
    g = Signal.trig(n, 8, [seed, 3, n, 1])
    a, b = sup.field(f), sup.field(g)
    ab = sup.field(Signal(f.values + g.values))
    bad = np.flatnonzero(ab > (a + b) * (1 + 1e-12) + 1e-12)
    s.record("sublinear", {"sample": int(bad[0])} if bad.size else None)
    fm = mx.field(f)
    bad = np.flatnonzero(fm < a * (1 - 1e-12))
    s.record("maximal_dominates", {"sample": int(bad[0])} if bad.size else None)
    k = operators.kernel("periodic_hilbert")
    probe = operators.KappaProbe(n=n, seed=seed, positions=4, pairs=8)
    k15, k2, k3 = (operators.kappa_estimate(k, r, probe).value for r in (1.5, 2.0, 3.0))
    wit = None
    if k15 > k2 * (1 + 1e-9) or k2 > k3 * (1 + 1e-9):
        wit = {"kappa_1.5": k15, "kappa_2": k2, "kappa_3": k3}
    s.record("hormander_nesting", wit)
    pts = rng.choice(n, size=16, replace=False)
    v1 = sup.restricted(f.values, f.support(), pts)
    v2 = np.array([max(abs(operators.truncated_apply(
        Signal(f.values * np.exp(2j * np.pi * xi * np.arange(n) / n)), k, prof.base_epsilon, int(x)))
        for xi in prof.modulation.frequencies) for x in pts])
    bad = np.flatnonzero(np.abs(v1 - v2) > 1e-10 * np.maximum(1, v2))
    s.record("modulated_direct", {"sample": int(pts[bad[0]])} if bad.size else None)
    return s.checks


def sparse_suite(n: int, seed: int) -> list[Check]:
    s = _Suite("sparse", n)
    wit = None
    for trial in range(3):
        f = Signal.trig(n, 16, [seed, 4, n, trial])
        fam = sparse.lerner_decompose(f, Interval.full())
        chk = sparse.lerner_check(f, Interval.full(), fam)
        if not (chk.holds and chk.packing_ok):
            i = int(np.argmax(chk.lhs - chk.rhs))
            wit = {"trial": trial, "sample": i, "gap": chk.worst_gap, "packing": chk.packing_ok}
            break
    s.record("lerner_bound", wit)

    q = DyadicCube(0, 2, 1).interval
    prof = operators.make_profile(n, "periodic_hilbert", 4)
    op = operators.ModulatedSup(prof)
    f = Signal.trig(n, 8, [seed, 4, n, 99], support=q)
    res = sparse.sparse_dominate(f, op, q, s=2.0)
    s.record("domination_sparse", None if dyadic.sparseness_check(res.family).certified
             else {"family": [c.to_triple() for c in res.cubes]})
    wit = None
    for factor in (1.5, 2.0, 8.0):
        try:
            sparse.sparse_dominate(f, op, q, s=2.0, A=res.A * factor, c0=res.c0)
        except CalibrationFailure as exc:
            wit = {"A": res.A * factor, "error": str(exc)}
            break
    s.record("auto_monotone", wit)

    rng = _rng(seed, 5, n)
    cubes = dyadic.all_cubes(range(4), (0,))
    pick = rng.permutation(len(cubes))
    half = len(cubes) // 2
    fa = SparseFamily(Fraction(1, 4), tuple(cubes[i].interval for i in pick[:half]))
    fb = SparseFamily(Fraction(1, 4), tuple(cubes[i].interval for i in pick[half:]))
    both = SparseFamily(Fraction(1, 4), fa.cubes + fb.cubes)
    g = Signal(rng.standard_normal(n))
    lhs = sparse.sparse_apply_field(g, both, 2)
    rhs = sparse.sparse_apply_field(g, fa, 2) + sparse.sparse_apply_field(g, fb, 2)
    bad = np.flatnonzero(np.abs(lhs - rhs) > 1e-12 * np.maximum(1, rhs))
    s.record("sparse_additive", {"sample": int(bad[0])} if bad.size else None)
    return s.checks


def harness_suite(n: int, seed: int) -> list[Check]:
    from .config import load
    from .experiments import run_decay

    s = _Suite("harness", n)
    cfg = load("decay", {"signal": {"n": n}, "params": {"trials": 2}}, seed=seed)
    try:
        rep = run_decay(cfg)
    except Exception as exc:  # fit problems still leave the fractions to inspect
        rep = getattr(exc, "report", None)
        if rep is None:
            raise
    bad = [i for i, row in enumerate(rep.per_trial) if np.any(np.diff(row) > 0)]
    s.record("decay_monotone", {"trial": bad[0]} if bad else None)
    two_pass = np.zeros_like(rep.fraction)
    for row in rep.per_trial:
        two_pass += row
    two_pass /= len(rep.per_trial)
    s.record("aggregation_linear", None if np.allclose(two_pass, rep.fraction, rtol=0, atol=1e-15)
             else {"max_diff": float(np.abs(two_pass - rep.fraction).max())})
    return s.checks


def run_selftest(cfg: ExperimentConfig, overrides: dict | None = None) -> SelftestReport:
    """Run every suite at each configured resolution.

    ``overrides`` swaps library functions for mutation testing; the key
    ``"median"`` replaces the median used by the signal suite.
    """
    overrides = overrides or {}
    checks = []
    for n in cfg.params["ns"]:
        checks += dyadic_suite(n, cfg.seed)
        checks += signal_suite(n, cfg.seed, overrides.get("median", signal.median))
        checks += operators_suite(n, cfg.seed)
        checks += sparse_suite(n, cfg.seed)
        checks += harness_suite(n, cfg.seed)
    rep = SelftestReport(checks)
    for c in rep.failures:
        log.warning("selftest failure %s/%s n=%d: %s", c.module, c.invariant, c.n, c.witness)
    return rep
