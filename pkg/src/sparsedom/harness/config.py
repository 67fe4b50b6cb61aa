"""Experiment configuration: JSON schema, defaults and validation."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from ..dyadic import Interval, parse_fraction
from ..errors import InvalidConfig
from ..operators import KERNELS, OPERATOR_HANDLES
from ..signal import Signal

EXPERIMENTS = ("decay", "dominate", "sharp-check", "kappa", "lerner", "selftest")
FORMATS = ("csv", "json", "both")
SIGNAL_KINDS = ("trig", "indicator", "step", "constant", "zeros")

_COMMON = {
    "seed": 0,
    "signal": {"kind": "trig", "n": 1024, "max_frequency": 32,
               "support": {"left": "0", "length": "1"}},
    "operator": {"kernel": "periodic_hilbert", "params": {}, "frequency_bound": 32, "alpha": 3},
    "params": {},
    "output": {"path": "out", "format": "both"},
}

# per-experiment overrides of the common defaults
DEFAULTS: dict[str, dict] = {
    "decay": {
        "signal": {"n": 4096, "support": {"left": "1/4", "length": "1/2"}},
        "operator": {"handle": "modulated_maximal_sup"},
        "params": {"t_min": 0.5, "t_max": 24.0, "t_points": 24, "t_grid": None, "r": 2.0,
                   "trials": 8, "min_count": 16},
    },
    "dominate": {
        "signal": {"support": {"left": "1/4", "length": "1/4"}},
        "params": {"ns": [256, 512, 1024], "handles": ["modulated_sup", "modulated_maximal_sup"],
                   "r": 2.0, "q": 2.0, "s": None, "A": "AUTO", "A_init": 1.0, "c0": 4.0,
                   "trials": 1, "stability_factor": 2.0},
        "operator": {"frequency_bound": 8},
    },
    "sharp-check": {
        "signal": {"n": 512},
        "operator": {"frequency_bound": 8},
        "params": {"r": 2.0, "trials": 10, "slack": 1.1},
    },
    "kappa": {
        "signal": {"n": 1024},
        "params": {"rs": [1.5, 2.0, 3.0], "kernels": ["periodic_hilbert", "line_hilbert"],
                   "k_max": 20, "k_max_check": 30, "positions": 8, "pairs": 16,
                   "stability_tol": 0.01, "nesting_tol": 1e-9},
    },
    "lerner": {
        "params": {"trials": 20, "lambda": "1/8"},
    },
    "selftest": {
        "params": {"ns": [256, 1024]},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def defaults(experiment: str) -> dict:
    if experiment not in EXPERIMENTS:
        raise InvalidConfig(f"unknown experiment {experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    return _merge(_COMMON, {"experiment": experiment, **DEFAULTS[experiment]})


def parse_interval(value) -> Interval:
    if isinstance(value, Interval):
        return value
    try:
        if isinstance(value, dict):
            return Interval(parse_fraction(value["left"]), parse_fraction(value["length"]))
        left, length = value
        return Interval(parse_fraction(left), parse_fraction(length))
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise InvalidConfig(f"bad interval {value!r}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration; ``raw`` echoes the merged JSON."""

    experiment: str
    raw: dict

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def signal(self) -> dict:
        return self.raw["signal"]

    @property
    def operator(self) -> dict:
        return self.raw["operator"]

    @property
    def params(self) -> dict:
        return self.raw["params"]

    @property
    def n(self) -> int:
        return self.signal["n"]

    @property
    def support(self) -> Interval:
        return parse_interval(self.signal["support"])

    @property
    def output_path(self) -> Path:
        return Path(self.raw["output"]["path"])

    @property
    def output_format(self) -> str:
        return self.raw["output"]["format"]

    def make_signal(self, seed, n: int | None = None) -> Signal:
        """Signal from the generator settings; ``seed`` may be an int or a seed sequence."""
        s, n = self.signal, n or self.n
        kind = s["kind"]
        q = self.support
        if kind == "trig":
            return Signal.trig(n, int(s["max_frequency"]), seed, support=q)
        if kind == "indicator":
            return Signal.indicator(n, q)
        if kind == "constant":
            return Signal.constant(n, float(s.get("value", 1.0))).restrict(q)
        if kind == "zeros":
            return Signal.zeros(n)
        return Signal.step(n, [parse_fraction(b) for b in s["breakpoints"]], s["levels"]).restrict(q)

    def to_json(self) -> dict:
        return copy.deepcopy(self.raw)


def _require(cond: bool, msg: str):
    if not cond:
        raise InvalidConfig(msg)


def _is_pow2(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1 and v & (v - 1) == 0


def validate(raw: dict) -> ExperimentConfig:
    exp = raw.get("experiment")
    _require(exp in EXPERIMENTS, f"experiment must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    seed = raw.get("seed")
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64,
             f"seed must be an unsigned 64-bit integer, got {seed!r}")
    sig = raw.get("signal")
    _require(isinstance(sig, dict), "signal must be an object")
    _require(sig.get("kind") in SIGNAL_KINDS,
             f"signal.kind must be one of {', '.join(SIGNAL_KINDS)}, got {sig.get('kind')!r}")
    _require(_is_pow2(sig.get("n")), f"signal.n must be a power of two, got {sig.get('n')!r}")
    parse_interval(sig.get("support"))
    if sig["kind"] == "trig":
        mf = sig.get("max_frequency")
        _require(isinstance(mf, int) and mf >= 0, "signal.max_frequency must be a non-negative int")
    if sig["kind"] == "step":
        _require("breakpoints" in sig and "levels" in sig, "step signals need breakpoints and levels")
    op = raw.get("operator")
    _require(isinstance(op, dict), "operator must be an object")
    _require(op.get("kernel") in KERNELS,
             f"operator.kernel must be one of {', '.join(KERNELS)}, got {op.get('kernel')!r}")
    try:
        k = KERNELS[op["kernel"]](**op.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad kernel parameters: {exc}") from exc
    _require(k.periodic or exp == "kappa", f"{op['kernel']} is not a kernel on the circle")
    fb = op.get("frequency_bound")
    _require(isinstance(fb, int) and fb >= 0, "operator.frequency_bound must be a non-negative int")
    alpha = op.get("alpha")
    _require(isinstance(alpha, int) and alpha >= 3 and alpha % 2 == 1,
             "operator.alpha must be an odd integer >= 3")
    if "handle" in op:
        _require(op["handle"] in OPERATOR_HANDLES,
                 f"operator.handle must be one of {', '.join(OPERATOR_HANDLES)}")
    out = raw.get("output", {})
    _require(out.get("format") in FORMATS,
             f"output.format must be one of {', '.join(FORMATS)}, got {out.get('format')!r}")
    try:
        _validate_params(exp, raw.get("params", {}))
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise InvalidConfig(f"bad params: {exc!r}") from exc
    return ExperimentConfig(exp, raw)


def _validate_params(exp: str, p: dict):
    def pos_int(key):
        v = p.get(key)
        _require(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
                 f"params.{key} must be a positive integer, got {v!r}")

    if "trials" in p:
        pos_int("trials")
    if exp == "decay":
        _require(float(p["r"]) > 1, "params.r must exceed 1")
        if p.get("t_grid") is not None:
            t = [float(v) for v in p["t_grid"]]
            _require(len(t) >= 2 and all(a < b for a, b in zip(t, t[1:])) and t[0] > 0,
                     "params.t_grid must be strictly increasing and positive")
        else:
            _require(0 < float(p["t_min"]) < float(p["t_max"]), "need 0 < t_min < t_max")
            pos_int("t_points")
    if exp == "dominate":
        _require(all(_is_pow2(v) for v in p["ns"]), "params.ns must be powers of two")
        _require(all(h in OPERATOR_HANDLES for h in p["handles"]),
                 f"params.handles must be drawn from {', '.join(OPERATOR_HANDLES)}")
        A = p["A"]
        _require(A == "AUTO" or (isinstance(A, (int, float)) and A > 0),
                 "params.A must be a positive number or \"AUTO\"")
        if p.get("s") is not None:
            _require(float(p["s"]) >= 1, "params.s must be >= 1")
    if exp == "kappa":
        _require(all(float(r) >= 1 for r in p["rs"]), "params.rs must be >= 1")
        _require(all(k in KERNELS for k in p["kernels"]), "params.kernels must be registry names")
    if exp == "lerner":
        lam = parse_fraction(p["lambda"])
        _require(0 < lam < Fraction(1, 2), "params.lambda must lie in (0, 1/2)")
    if exp == "selftest":
        _require(all(_is_pow2(v) for v in p["ns"]), "params.ns must be powers of two")


def load(experiment: str, source: dict | str | Path | None = None, seed: int | None = None,
         out: str | Path | None = None, fmt: str | None = None) -> ExperimentConfig:
    """Merge ``source`` (dict, JSON path or None) over the experiment defaults and validate."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    else:
        try:
            user = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {source}: {exc}") from exc
    if not isinstance(user, dict):
        raise InvalidConfig("config must be a JSON object")
    if user.get("experiment", experiment) != experiment:
        raise InvalidConfig(f"config is for {user['experiment']!r}, not {experiment!r}")
    raw = _merge(defaults(experiment), user)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output"]["path"] = str(out)
    if fmt is not None:
        raw["output"]["format"] = fmt
    return validate(raw)
