import json
import math

import numpy as np
import pytest

from sparsedom.errors import DegenerateFit, InsufficientRange, InvalidConfig, IoFailure
from sparsedom.harness import cli
from sparsedom.harness.config import defaults, load
from sparsedom.harness.experiments import (ExperimentResult, fit_exponential, level_fractions,
                                           run, run_decay, t_grid)
from sparsedom.harness.report import write_report
from sparsedom.harness.selftest import run_selftest
from sparsedom.signal import _real, _cube_values, as_signal

SMALL_DECAY = {"signal": {"n": 1024}, "params": {"trials": 2}}


# fitting ---------------------------------------------------------------------

def test_fit_exact_exponential():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    c, a, r2 = fit_exponential(t, np.exp(-2 * t))
    assert c == pytest.approx(1, abs=1e-9)
    assert a == pytest.approx(2, abs=1e-9)
    assert r2 == pytest.approx(1, abs=1e-12)


def test_fit_degenerate_and_short():
    with pytest.raises(DegenerateFit):
        fit_exponential([1, 2, 3, 4], [0.3] * 4)
    with pytest.raises(InsufficientRange):
        fit_exponential([1, 2, 3, 4], [0.3, 0.2, 0, 0])


@pytest.mark.parametrize("seed", range(5))
def test_fit_noisy_exponential(seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.2, 2.0, 10)
    frac = 0.5 * np.exp(-3 * t) * (1 + 0.01 * rng.standard_normal(10))
    c, a, r2 = fit_exponential(t, frac)
    assert 2.7 <= a <= 3.3
    assert c == pytest.approx(0.5, rel=0.05)


def test_t_grid_default():
    g = t_grid(defaults("decay")["params"])
    assert g.size == 24 and g[0] == pytest.approx(0.5) and g[-1] == pytest.approx(24)
    assert np.allclose(np.diff(np.log(g)), np.log(48) / 23)


def test_level_fractions_skip_zero_maximal():
    fr, skipped = level_fractions(np.array([3.0, 1.0, 0.0]), np.array([1.0, 1.0, 0.0]),
                                  np.array([0.5, 2.0]))
    assert skipped == 1
    assert np.allclose(fr, [2 / 3, 1 / 3])


# decay -------------------------------------------------------------------------

def test_decay_zero_signal():
    cfg = load("decay", {"signal": {"kind": "zeros", "n": 256}, "params": {"trials": 1}})
    with pytest.raises(InsufficientRange) as info:
        run_decay(cfg)
    rep = info.value.report
    assert np.all(rep.fraction == 0)
    assert rep.skipped == 128


def test_decay_monotone_and_two_pass_aggregation():
    rep = run_decay(load("decay", SMALL_DECAY, seed=4))
    assert np.all(np.diff(rep.per_trial, axis=1) <= 0)
    assert np.all((0 <= rep.fraction) & (rep.fraction <= 1))
    two_pass = sum(row for row in rep.per_trial) / rep.trials
    assert np.array_equal(two_pass, rep.fraction) or np.allclose(two_pass, rep.fraction, atol=1e-15)
    assert rep.alpha_hat > 0 and not rep.violations


def test_decay_fraction_oracle():
    # recount one trial from scratch
    from sparsedom.operators import ModulatedMaximalSup, make_profile
    from sparsedom.signal import maximal_r_field

    cfg = load("decay", {"signal": {"n": 256}, "operator": {"frequency_bound": 4},
                         "params": {"trials": 1, "t_grid": [0.1, 0.2, 0.3, 0.5, 1, 2], "min_count": 1}})
    rep = run_decay(cfg)
    f = cfg.make_signal([cfg.seed, 0])
    op = ModulatedMaximalSup(make_profile(256, frequency_bound=4)).field(f)
    mr = maximal_r_field(f.values, 2.0)
    inside = [x for x in range(256) if 64 <= x < 192]
    for t, got in zip([0.1, 0.2, 0.3, 0.5, 1, 2], rep.per_trial[0]):
        assert got == sum(op[x] > t * mr[x] for x in inside) / len(inside)


# reports -------------------------------------------------------------------------

def test_report_schema(tmp_path):
    cfg = load("decay", SMALL_DECAY)
    rep = run_decay(cfg)
    paths = write_report(rep, tmp_path / "out", "both", cfg)
    assert [p.name for p in paths] == ["decay.csv", "decay.json"]
    csv_lines = paths[0].read_text().splitlines()
    assert csv_lines[0] == "t,fraction" and len(csv_lines) == 25
    doc = json.loads(paths[1].read_text())
    assert {"alpha_hat", "c_hat", "r_squared", "skipped", "trials"} <= set(doc)
    assert doc["seed"] == 0 and doc["config"]["experiment"] == "decay" and "version" in doc


def test_report_byte_stable(tmp_path):
    outs = []
    for i in range(2):
        cfg = load("decay", SMALL_DECAY, seed=11)
        paths = write_report(run_decay(cfg), tmp_path / str(i), "both", cfg)
        outs.append([p.read_bytes() for p in paths])
    assert outs[0] == outs[1]


def test_report_errors(tmp_path):
    res = ExperimentResult("lerner", ["a"], [[1]], {})
    with pytest.raises(IoFailure, match="csv, json, both"):
        write_report(res, tmp_path, "xml")
    with pytest.raises(IoFailure):
        write_report(res, tmp_path / "missing" / "deeper", "csv")
    assert [p.name for p in write_report(res, tmp_path / "x", "json")] == ["lerner.json"]


def test_report_non_finite_values(tmp_path):
    res = ExperimentResult("kappa", ["v"], [[math.inf]], {"v": math.nan})
    path = write_report(res, tmp_path / "o", "both")
    assert json.loads(path[1].read_text())["v"] == "nan"
    assert path[0].read_text() == "v\ninf\n"


# configuration -------------------------------------------------------------------

@pytest.mark.parametrize("patch", [
    {"signal": {"n": 1000}},
    {"signal": {"kind": "noise"}},
    {"signal": {"support": {"left": "1/4", "length": "x"}}},
    {"operator": {"alpha": 4}},
    {"operator": {"kernel": "line_hilbert"}},
    {"operator": {"kernel": "perturbed_hilbert", "params": {"a": 2}}},
    {"seed": -1},
    {"output": {"format": "xml"}},
    {"params": {"r": 1.0}},
    {"params": {"trials": 0}},
    {"experiment": "kappa"},
])
def test_invalid_configs(patch):
    with pytest.raises(InvalidConfig):
        load("decay", patch)


def test_config_merge_and_overrides():
    cfg = load("dominate", {"params": {"ns": [128]}}, seed=9, out="x", fmt="csv")
    assert cfg.params["ns"] == [128] and cfg.params["A"] == "AUTO"
    assert cfg.seed == 9 and str(cfg.output_path) == "x" and cfg.output_format == "csv"
    assert load("kappa", {"operator": {"kernel": "line_hilbert"}}).operator["kernel"] == "line_hilbert"


def test_signal_generators():
    for kind in ("indicator", "constant", "zeros"):
        f = load("lerner", {"signal": {"kind": kind, "n": 64,
                                       "support": {"left": "0", "length": "1/2"}}}).make_signal(0)
        assert np.all(f.values[32:] == 0)
    step = load("lerner", {"signal": {"kind": "step", "n": 64, "breakpoints": ["1/4"],
                                      "levels": [1.0, 2.0]}}).make_signal(0)
    assert step.values[0] == 1.0 and step.values[-1] == 2.0


# CLI ------------------------------------------------------------------------------

def write_config(tmp_path, experiment, body):
    path = tmp_path / f"{experiment}.cfg.json"
    path.write_text(json.dumps(body))
    return str(path)


def test_cli_selftest_default(tmp_path, capsys):
    assert cli.main(["selftest", "--out", str(tmp_path / "st")]) == 0
    doc = json.loads((tmp_path / "st" / "selftest.json").read_text())
    assert doc["failed"] == 0 and doc["checks"] == doc["passed"] > 0


def test_cli_empty_config(tmp_path):
    cfg = write_config(tmp_path, "lerner", {})
    assert cli.main(["lerner", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_cli_invalid_config_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, "decay", {"signal": {"n": 100}})
    assert cli.main(["decay", "--config", cfg]) == 1
    assert "power of two" in capsys.readouterr().err
    assert cli.main(["decay", "--config", str(tmp_path / "absent.json")]) == 1
    assert cli.main(["lerner", "--out", str(tmp_path / "no" / "such" / "dir")]) == 1


def test_cli_bad_seed_rejected():
    with pytest.raises(SystemExit):
        cli.main(["lerner", "--seed", str(2 ** 64)])


def test_cli_calibration_failure_exit_2(tmp_path):
    cfg = write_config(tmp_path, "decay", {"signal": {"kind": "zeros", "n": 256},
                                           "params": {"trials": 1}})
    assert cli.main(["decay", "--config", cfg, "--out", str(tmp_path / "d")]) == 2
    assert (tmp_path / "d" / "decay.csv").exists()
    cfg = write_config(tmp_path, "dominate", {"params": {"ns": [128], "A": 0.01,
                                                         "handles": ["modulated_sup"]}})
    assert cli.main(["dominate", "--config", cfg, "--out", str(tmp_path / "m")]) == 2


def test_cli_violation_exit_3(tmp_path):
    cfg = write_config(tmp_path, "sharp-check", {"signal": {"n": 128}, "params": {"trials": 1,
                                                                                  "slack": 1e-6}})
    assert cli.main(["sharp-check", "--config", cfg, "--out", str(tmp_path / "s")]) == 3


def test_cli_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["decay", "--help"])
    out = capsys.readouterr().out
    assert "t_points" in out and "--workers" in out


# selftest mutation ------------------------------------------------------------------

def _shifted_median(shift):
    def med(f, q):
        s = np.sort(_real(_cube_values(as_signal(f), q)))
        return float(s[min(max((s.size + 1) // 2 - 1 + shift, 0), s.size - 1)])
    return med


@pytest.mark.parametrize("shift", [1, -1])
def test_selftest_catches_median_off_by_one(shift):
    cfg = load("selftest", {"params": {"ns": [256]}})
    rep = run_selftest(cfg, overrides={"median": _shifted_median(shift)})
    assert not rep.ok
    assert {(c.module, c.invariant) for c in rep.failures} == {("signal", "median")}
    assert rep.failures[0].witness


def test_run_dispatch_selftest():
    assert run(load("selftest", {"params": {"ns": [256]}})).ok
