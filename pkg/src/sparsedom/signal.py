"""Sampled functions on the circle and their local statistics.

A signal holds N = 2^m samples f(i/N). Every measure is the counting measure
``count / N``; a cube's measure is the number of samples it contains over N,
so grid-1 cubes (not sample aligned) are measured consistently with grid-0.

Sample points are addressed by integer index ``i`` (the point ``i/N``).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .dyadic import DyadicCube, Interval, as_dyadic, cube_containing
from .errors import EmptyCube, NonconvergentBisection, PointOutsideCube


@dataclass(frozen=True)
class Signal:
    values: np.ndarray
    support_mask: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.iscomplexobj(v):
            v = v.astype(np.float64)
        n = v.shape[0]
        if v.ndim != 1 or n < 1 or n & (n - 1):
            raise ValueError(f"signal length must be a power of two, got {v.shape}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.support_mask is not None:
            m = np.asarray(self.support_mask, dtype=bool).copy()
            m.setflags(write=False)
            object.__setattr__(self, "support_mask", m)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.n.bit_length() - 1

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def __len__(self):
        return self.n

    def on(self, q: Interval) -> np.ndarray:
        return self.values[q.sample_indices(self.n)]

    def restrict(self, q: Interval) -> "Signal":
        """f * indicator(q)."""
        mask = np.zeros(self.n, dtype=bool)
        mask[q.sample_indices(self.n)] = True
        return Signal(np.where(mask, self.values, 0), mask)

    def scaled(self, k) -> "Signal":
        return Signal(self.values * k, self.support_mask)

    def support(self) -> np.ndarray:
        if self.support_mask is not None:
            return np.flatnonzero(self.support_mask)
        return np.flatnonzero(self.values != 0)

    # generators -------------------------------------------------------

    @classmethod
    def zeros(cls, n: int) -> "Signal":
        return cls(np.zeros(n))

    @classmethod
    def constant(cls, n: int, c=1.0) -> "Signal":
        return cls(np.full(n, c, dtype=np.float64))

    @classmethod
    def indicator(cls, n: int, q: Interval) -> "Signal":
        v = np.zeros(n)
        v[q.sample_indices(n)] = 1.0
        return cls(v, v != 0)

    @classmethod
    def spike(cls, n: int, i: int, height=1.0) -> "Signal":
        v = np.zeros(n)
        v[i % n] = height
        return cls(v)

    @classmethod
    def step(cls, n: int, breakpoints, levels) -> "Signal":
        """Piecewise constant: ``levels[j]`` on ``[breakpoints[j-1], breakpoints[j])``."""
        bps = [Fraction(b) for b in breakpoints]
        if len(levels) != len(bps) + 1:
            raise ValueError("need one more level than breakpoints")
        x = np.arange(n)
        v = np.full(n, float(levels[0]))
        for b, lev in zip(bps, levels[1:]):
            v[x >= math.ceil(b * n)] = float(lev)
        return cls(v)

    @classmethod
    def trig(cls, n: int, max_frequency: int, seed, support: Interval | None = None) -> "Signal":
        """Random real trigonometric polynomial of degree ``max_frequency``.

        Coefficients depend only on (seed, max_frequency), so the same seed
        samples the same continuum function at every resolution.
        """
        rng = np.random.default_rng(seed)
        k = np.arange(max_frequency + 1)
        a = rng.standard_normal(max_frequency + 1)
        b = rng.standard_normal(max_frequency + 1)
        b[0] = 0.0
        y = np.arange(n) / n
        phase = 2 * np.pi * np.outer(k, y)
        v = (a @ np.cos(phase) + b @ np.sin(phase)) / math.sqrt(max_frequency + 1)
        f = cls(v)
        return f.restrict(support) if support is not None else f

    # IO ---------------------------------------------------------------

    def to_csv(self) -> str:
        if self.is_complex:
            raise ValueError("CSV storage holds real signals only; use JSON")
        buf = io.StringIO()
        buf.write("value\n")
        for v in self.values:
            buf.write(repr(float(v)) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Signal":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["value"]:
            raise ValueError("signal CSV must start with the header 'value'")
        return cls(np.array([float(r[0]) for r in rows[1:] if r]))

    def to_json(self) -> str:
        if self.is_complex:
            return json.dumps([[float(z.real), float(z.imag)] for z in self.values])
        return json.dumps([float(v) for v in self.values])

    @classmethod
    def from_json(cls, text: str) -> "Signal":
        data = json.loads(text)
        if data and isinstance(data[0], list):
            return cls(np.array([complex(a, b) for a, b in data]))
        return cls(np.array(data, dtype=np.float64))


def as_signal(f) -> Signal:
    return f if isinstance(f, Signal) else Signal(np.asarray(f))


def _cube_values(f: Signal, q: Interval) -> np.ndarray:
    vals = f.on(q)
    if vals.size == 0:
        raise EmptyCube(f"{q} contains no sample at N={f.n}")
    return vals


def _real(vals: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(vals):
        raise TypeError("medians and oscillations need a real-valued signal")
    return vals


def floor_count(t, count_scale: int) -> int:
    """Exact ``floor(t * count_scale)``; floats are read as their shortest decimal (0.49 is 49/100)."""
    if isinstance(t, float):
        t = Fraction(repr(t))
    return math.floor(Fraction(t) * count_scale)


# ---------------------------------------------------------------------------
# Young functions


@dataclass(frozen=True)
class YoungFunction:
    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    inverse_at_one: float | None = None

    def __post_init__(self):
        t = np.concatenate([[0.0], np.geomspace(1e-3, 1e2, 200)])
        v = np.asarray(self.evaluator(t), dtype=np.float64)
        if v[0] != 0:
            raise ValueError(f"Young function {self.name} must vanish at 0")
        if np.any(np.diff(v) < -1e-12 * np.abs(v[1:])):
            raise ValueError(f"Young function {self.name} is not non-decreasing")
        # convexity on the sampled checkpoints: slopes of secants increase
        slopes = np.diff(v) / np.diff(t)
        if np.any(np.diff(slopes) < -1e-9 * np.abs(slopes[1:])):
            raise ValueError(f"Young function {self.name} is not convex")

    def __call__(self, t):
        return self.evaluator(np.asarray(t, dtype=np.float64))

    def gamma_hat(self, p: float, t_grid=None) -> float:
        """max over t >= 1 (sampled) of Phi(t) / t^{p'}."""
        pp = conjugate(p)
        t = np.geomspace(1.0, 1e6, 4001) if t_grid is None else np.asarray(t_grid)
        t = t[t >= 1]
        return float(np.max(self(t) / t ** pp))


def conjugate(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


def power_young(p: float) -> YoungFunction:
    if p < 1:
        raise ValueError("power Young functions need p >= 1")
    return YoungFunction("power", lambda t: t ** p, {"p": p}, 1.0)


def llogl_young() -> YoungFunction:
    """Phi(t) = t log(e + t)."""
    return YoungFunction("llogl", lambda t: t * np.log(np.e + t), {})


def exp_young() -> YoungFunction:
    """Phi(t) = e^t - 1."""
    return YoungFunction("exp", np.expm1, {}, math.log(2.0))


YOUNG_REGISTRY = {"power": power_young, "llogl": llogl_young, "exp": exp_young}


def young(name: str, **params) -> YoungFunction:
    try:
        return YOUNG_REGISTRY[name](**params)
    except KeyError:
        raise ValueError(f"unknown Young function {name!r}; known: {sorted(YOUNG_REGISTRY)}") from None


# ---------------------------------------------------------------------------
# local statistics on one cube


def lp_average(f, q: Interval, p: float) -> float:
    vals = np.abs(_cube_values(as_signal(f), q))
    if p == 1:
        return float(vals.mean())
    return float(np.mean(vals ** p) ** (1.0 / p))


def _orlicz_rows(x: np.ndarray, phi: YoungFunction, rtol: float, max_doublings: int) -> np.ndarray:
    """Luxemburg norm of every row of the non-negative array ``x``."""
    rows = x.shape[0]
    out = np.zeros(rows)
    nz = x.max(axis=1) > 0
    if not nz.any():
        return out
    x = x[nz]

    def g(lam):
        return phi(x / lam[:, None]).mean(axis=1)

    start = x.mean(axis=1) + np.finfo(float).tiny
    hi = start.copy()
    for _ in range(max_doublings):
        bad = g(hi) > 1
        if not bad.any():
            break
        hi[bad] *= 2
    else:
        raise NonconvergentBisection("could not find an upper bracket")
    lo = start.copy()
    for _ in range(max_doublings):
        bad = g(lo) <= 1
        if not bad.any():
            break
        lo[bad] /= 2
    else:
        raise NonconvergentBisection("could not find a lower bracket")
    for _ in range(400):
        if np.all(hi - lo <= rtol * hi):
            break
        mid = 0.5 * (lo + hi)
        ok = g(mid) <= 1
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    out[nz] = hi
    return out


def orlicz_norm(f, q: Interval, phi: YoungFunction, rtol: float = 1e-9) -> float:
    """inf{lam > 0 : mean over q of Phi(|f| / lam) <= 1}, by bracketing and bisection."""
    vals = np.abs(_cube_values(as_signal(f), q))
    return float(_orlicz_rows(vals[None, :], phi, rtol, 200)[0])


def _rearr_sorted_desc(a_desc: np.ndarray, k: int) -> float:
    return float(a_desc[k]) if k < a_desc.size else 0.0


def rearrangement(f, q: Interval, t) -> float:
    """(f chi_q)^*(t) = inf{a >= 0 : |q and {|f| > a}| <= t}."""
    f = as_signal(f)
    vals = np.sort(np.abs(_cube_values(f, q)))[::-1]
    return _rearr_sorted_desc(vals, floor_count(t, f.n))


def _lower_median_sorted(s: np.ndarray) -> float:
    return float(s[(s.size + 1) // 2 - 1])


def median(f, q: Interval) -> float:
    """Lower median: the smallest admissible sample value."""
    vals = _real(_cube_values(as_signal(f), q))
    return _lower_median_sorted(np.sort(vals))


def _osc_sorted(s: np.ndarray, lam) -> float:
    n = s.size
    k = floor_count(lam, n)
    w = n - k
    if w <= 1:
        return 0.0
    return float(np.min(s[w - 1:] - s[: n - w + 1]) / 2)


def oscillation(f, q: Interval, lam) -> float:
    """omega_lam(f; q) = inf_c ((f - c) chi_q)^*(lam |q|).

    For fixed c the rearrangement at lam|q| is the (n-k)-th smallest
    distance |f_i - c|, k = floor(lam n). Minimising over c gives half the
    narrowest window holding n-k consecutive sorted samples.
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    vals = _real(_cube_values(as_signal(f), q))
    return _osc_sorted(np.sort(vals), lam)


def local_stats(f, q: Interval, lambdas=(1 / 8, 1 / 4), ts=()) -> "LocalStats":
    f = as_signal(f)
    return LocalStats(
        cube=q,
        median=median(f, q),
        oscillation={lam: oscillation(f, q, lam) for lam in lambdas},
        rearrangement_at={t: rearrangement(f, q, t) for t in ts},
    )


@dataclass(frozen=True)
class LocalStats:
    cube: Interval
    median: float
    oscillation: dict
    rearrangement_at: dict


def sharp_delta(f, q: Interval, delta: float) -> float:
    """inf_c (mean over q of |f - c|^delta)^{1/delta}.

    Exact for delta <= 1 (minimum sits on a sample value) and delta = 2
    (c = mean); golden-section search otherwise.
    """
    vals = _real(_cube_values(as_signal(f), q)).astype(np.float64)
    return _sharp_delta_vals(vals, delta)


def _sharp_delta_vals(vals: np.ndarray, delta: float) -> float:
    if delta == 2:
        return float(np.sqrt(np.mean((vals - vals.mean()) ** 2)))
    if delta <= 1:
        obj = np.mean(np.abs(vals[:, None] - vals[None, :]) ** delta, axis=0)
        return float(obj.min() ** (1 / delta))
    lo, hi = float(vals.min()), float(vals.max())
    gr = (math.sqrt(5) - 1) / 2

    def obj(c):
        return np.mean(np.abs(vals - c) ** delta)

    a, b = lo, hi
    c1, c2 = b - gr * (b - a), a + gr * (b - a)
    f1, f2 = obj(c1), obj(c2)
    for _ in range(200):
        if b - a <= 1e-14 * max(1.0, abs(a), abs(b)):
            break
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - gr * (b - a)
            f1 = obj(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + gr * (b - a)
            f2 = obj(c2)
    return float(min(f1, f2, obj(lo), obj(hi)) ** (1 / delta))


# ---------------------------------------------------------------------------
# maximal operators over the two-grid cube collection


def _grid_offset(n: int, grid_id: int) -> int:
    return 0 if grid_id == 0 else (n + 2) // 3


def _blocks(values: np.ndarray, grid_id: int, level: int) -> np.ndarray:
    """Samples of every level-``level`` cube of a grid, one cube per row."""
    n = values.shape[0]
    off = _grid_offset(n, grid_id) if level > 0 else 0
    return np.roll(values, -off).reshape(1 << level, n >> level)


def _unblock(stat: np.ndarray, n: int, grid_id: int, level: int) -> np.ndarray:
    off = _grid_offset(n, grid_id) if level > 0 else 0
    return np.roll(np.repeat(stat, n >> level), off)


def cube_field(values: np.ndarray, stat: Callable[[np.ndarray], np.ndarray], levels=None,
               grids=(0, 1)) -> np.ndarray:
    """max over cubes Q containing x (both grids, given levels) of stat(samples of Q)."""
    n = values.shape[0]
    m = n.bit_length() - 1
    levels = range(m + 1) if levels is None else levels
    out = np.full(n, -np.inf)
    for g in grids:
        for k in levels:
            if g == 1 and k == 0 and 0 in grids:
                continue
            out = np.maximum(out, _unblock(stat(_blocks(values, g, k)), n, g, k))
    return out


def maximal_r_field(f, r: float) -> np.ndarray:
    a = np.abs(as_signal(f).values)
    if r == 1:
        return cube_field(a, lambda b: b.mean(axis=1))
    ar = a ** r
    return cube_field(ar, lambda b: b.mean(axis=1)) ** (1.0 / r)


def maximal_r(f, r: float, x: int) -> float:
    """M_r f(x): sup of lp_average over cubes of both grids containing x."""
    return float(maximal_r_field(f, r)[x])


def maximal_orlicz_field(f, phi: YoungFunction, rtol: float = 1e-9) -> np.ndarray:
    a = np.abs(as_signal(f).values)
    return cube_field(a, lambda b: _orlicz_rows(b, phi, rtol, 200))


def maximal_orlicz(f, phi: YoungFunction, x: int) -> float:
    return float(maximal_orlicz_field(f, phi)[x])


def _dyadic_within(q0: Interval, n: int) -> list[DyadicCube]:
    """Grid-0 dyadic cubes contained in q0 down to single samples."""
    m = n.bit_length() - 1
    out = []
    for k in range(m + 1):
        size = Fraction(1, 1 << k)
        if size > q0.length:
            continue
        first = cube_containing(q0.left, 0, k).index
        count = math.ceil(q0.length / size) + 1
        for j in range(first, first + count):
            c = DyadicCube(0, k, j % (1 << k))
            if q0.contains(c.interval):
                out.append(c)
    return out


def _local_field(f: Signal, q0: Interval, stat: Callable[[np.ndarray], float]) -> np.ndarray:
    """max over grid-0 dyadic Q with x in Q subset q0 of stat(samples of Q); -inf off q0."""
    out = np.full(f.n, -np.inf)
    for c in _dyadic_within(q0, f.n):
        start, count = c.sample_arc(f.n)
        idx = (start + np.arange(count)) % f.n
        out[idx] = np.maximum(out[idx], stat(f.values[idx]))
    return out


def local_sharp_maximal_field(f, q0: Interval, lam) -> np.ndarray:
    f = as_signal(f)
    _real(f.values)
    by_level = {}
    for c in _dyadic_within(q0, f.n):
        by_level.setdefault(c.level, []).append(c)
    out = np.full(f.n, -np.inf)
    for k, cubes in by_level.items():
        starts = np.array([c.sample_arc(f.n)[0] for c in cubes])
        block = f.n >> k
        idx = starts[:, None] + np.arange(block)[None, :]
        s = np.sort(f.values[idx], axis=1)
        kk = floor_count(lam, block)
        w = block - kk
        if w <= 1:
            osc = np.zeros(len(cubes))
        else:
            osc = np.min(s[:, w - 1:] - s[:, : block - w + 1], axis=1) / 2
        flat = idx.ravel()
        out[flat] = np.maximum(out[flat], np.repeat(osc, block))
    return out


def local_sharp_maximal(f, q0: Interval, lam, x: int) -> float:
    """sup over grid-0 dyadic Q with x in Q subset q0 of omega_lam(f; Q)."""
    f = as_signal(f)
    if not q0.contains_point(Fraction(x, f.n)):
        raise PointOutsideCube(f"sample {x} is not in {q0}")
    return float(local_sharp_maximal_field(f, q0, lam)[x])


def sharp_delta_maximal_field(f, q0: Interval, delta: float) -> np.ndarray:
    """sup over grid-0 dyadic Q with x in Q subset q0 of inf_c <|f - c|>_{delta, Q}."""
    f = as_signal(f)
    return _local_field(f, q0, lambda v: _sharp_delta_vals(np.asarray(v, dtype=float), delta))


def sample_point(x, n: int) -> int:
    """Index of a sample point given as an index or an exact grid fraction."""
    if isinstance(x, (int, np.integer)):
        return int(x) % n
    xf = Fraction(x) * n
    if xf.denominator != 1:
        raise ValueError(f"{x} is not a sample point at N={n}")
    return int(xf) % n


__all__ = [
    "Signal", "YoungFunction", "LocalStats", "as_signal", "conjugate", "young", "power_young",
    "llogl_young", "exp_young", "lp_average", "orlicz_norm", "rearrangement", "median",
    "oscillation", "local_stats", "sharp_delta", "local_sharp_maximal", "local_sharp_maximal_field",
    "sharp_delta_maximal_field", "maximal_r", "maximal_r_field", "maximal_orlicz",
    "maximal_orlicz_field", "cube_field", "floor_count", "sample_point", "as_dyadic",
]
