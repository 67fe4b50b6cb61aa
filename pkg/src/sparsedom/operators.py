"""Singular-integral engine on the sampled circle.

Operators are realised by midpoint quadrature on the sample grid::

    T_eps f(i/N) = (1/N) * sum_{j : dist(i, j) > eps N} K((i - j)/N) f(j/N)

The base operator T is T_eps at eps = 1/(2N), which drops only the diagonal
sample. Maximally modulated versions take the max of |T_eps(e^{2 pi i xi y} f)|
over integer frequencies xi (and over the truncation grid for T^F_*).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .dyadic import DyadicCube, Interval, dilated_arc
from .errors import DivergentSum, EpsilonBelowResolution
from .signal import as_signal, conjugate, floor_count, lp_average

# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelSpec:
    """Convolution kernel K(x, y) = profile(x - y).

    For periodic kernels the difference is reduced to (-1/2, 1/2].
    """

    name: str
    profile: Callable[[np.ndarray], np.ndarray]
    odd_symmetric: bool
    params: dict = field(default_factory=dict)
    periodic: bool = True

    def evaluate(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if self.periodic:
            d = d - np.round(d)
        if np.any(d == 0):
            raise ValueError("kernel is singular on the diagonal")
        return self.profile(d)

    def conv_vector(self, n: int) -> np.ndarray:
        """K(d/N) for d = 0..N-1 with the diagonal entry set to 0."""
        if not self.periodic:
            raise ValueError(f"{self.name} is a kernel on the line, not on the circle")
        d = np.arange(n) / n
        d = d - np.round(d)
        out = np.zeros(n)
        out[1:] = self.profile(d[1:])
        return out


def _cot(t):
    return 1.0 / np.tan(np.pi * t)


def periodic_hilbert() -> KernelSpec:
    return KernelSpec("periodic_hilbert", _cot, True)


_PERTURBATIONS = {
    "cos": (lambda t: np.cos(2 * np.pi * t), True),
    "sin": (lambda t: np.sin(2 * np.pi * t), False),
}


def perturbed_hilbert(a: float = 0.5, h: str = "cos") -> KernelSpec:
    """(1 + a h(x - y)) cot(pi (x - y)) with a bounded Lipschitz h and |a| < 1."""
    if not abs(a) < 1:
        raise ValueError("perturbation amplitude must satisfy |a| < 1")
    try:
        hfun, even = _PERTURBATIONS[h]
    except KeyError:
        raise ValueError(f"unknown perturbation {h!r}; known: {sorted(_PERTURBATIONS)}") from None
    return KernelSpec("perturbed_hilbert", lambda t: (1 + a * hfun(t)) * _cot(t), even,
                      {"a": a, "h": h})


def line_hilbert() -> KernelSpec:
    return KernelSpec("line_hilbert", lambda t: 1.0 / t, True, periodic=False)


KERNELS = {"periodic_hilbert": periodic_hilbert, "perturbed_hilbert": perturbed_hilbert,
           "line_hilbert": line_hilbert}


def kernel(name: str, **params) -> KernelSpec:
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; known: {sorted(KERNELS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# modulation families and operator profiles


@dataclass(frozen=True)
class ModulationFamily:
    frequencies: tuple

    def __post_init__(self):
        fr = tuple(sorted({int(x) for x in self.frequencies}))
        if not fr:
            raise ValueError("modulation family needs at least one frequency")
        object.__setattr__(self, "frequencies", fr)

    @classmethod
    def symmetric(cls, bound: int) -> "ModulationFamily":
        return cls(tuple(range(-bound, bound + 1)))

    @classmethod
    def nonnegative(cls, bound: int) -> "ModulationFamily":
        return cls(tuple(range(bound + 1)))

    def __len__(self):
        return len(self.frequencies)


@dataclass(frozen=True)
class OperatorProfile:
    """Kernel + modulation family at resolution N, plus calibration results."""

    kernel: KernelSpec
    modulation: ModulationFamily
    n: int
    weak_norm_estimates: dict = field(default_factory=dict)
    wq_threshold: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("resolution must be a power of two")
        if not self.kernel.periodic:
            raise ValueError("operator profiles need a periodic kernel")

    @property
    def m(self) -> int:
        return self.n.bit_length() - 1

    @property
    def base_epsilon(self) -> float:
        return 1.0 / (2 * self.n)

    @property
    def epsilon_grid(self) -> tuple:
        # base_epsilon first, then 2^l / N; T_eps vanishes from eps = 1/2 on
        return (self.base_epsilon,) + tuple(2.0 ** l / self.n for l in range(self.m + 1))

    @cached_property
    def conv(self) -> np.ndarray:
        return self.kernel.conv_vector(self.n)

    @cached_property
    def phase(self) -> np.ndarray:
        return _kernels.phase_table(self.n, self.modulation.frequencies)

    @cached_property
    def bucket(self) -> np.ndarray:
        return _kernels.bucket_table(self.n)

    def with_frequencies(self, freqs: Iterable[int]) -> "OperatorProfile":
        return OperatorProfile(self.kernel, ModulationFamily(tuple(freqs)), self.n)

    def replace(self, **kw) -> "OperatorProfile":
        return dataclasses.replace(self, **kw)


def make_profile(n: int, kernel_name: str = "periodic_hilbert", frequency_bound: int = 32,
                 **kernel_params) -> OperatorProfile:
    return OperatorProfile(kernel(kernel_name, **kernel_params),
                           ModulationFamily.symmetric(frequency_bound), n)


# ---------------------------------------------------------------------------
# truncated operators


def _eps_check(eps: float, n: int):
    if eps < 1.0 / (2 * n):
        raise EpsilonBelowResolution(f"eps={eps} is below the resolution 1/(2N)={1 / (2 * n)}")


def truncated_apply(f, k: KernelSpec, eps: float, x: int):
    """Midpoint quadrature of T_eps f at the sample point x (index)."""
    f = as_signal(f)
    n = f.n
    _eps_check(eps, n)
    j = np.arange(n)
    d = (x - j) % n
    dist = np.minimum(d, n - d)
    keep = dist > eps * n
    val = np.sum(k.conv_vector(n)[d[keep]] * f.values[keep]) / n
    return val if f.is_complex else float(np.real(val))


def truncated_field(f, k: KernelSpec, eps: float) -> np.ndarray:
    """T_eps f at every sample point."""
    f = as_signal(f)
    n = f.n
    _eps_check(eps, n)
    conv = k.conv_vector(n)
    d = np.arange(n)
    dist = np.minimum(d, n - d)
    conv = np.where(dist > eps * n, conv, 0.0)
    # circulant product: out[i] = sum_j conv[(i - j) % n] f[j]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    out = conv[idx] @ f.values / n
    return out if f.is_complex else np.real(out)


class OperatorHandle:
    """Pointwise evaluator of a non-negative sublinear operator on restricted signals."""

    name = "operator"

    def restricted(self, values: np.ndarray, support: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Op(f chi_S)(x) for x in ``points``; S given by sample indices."""
        raise NotImplementedError

    def field(self, f) -> np.ndarray:
        f = as_signal(f)
        return self.restricted(f.values, f.support(), np.arange(f.n))

    def __call__(self, f, x: int) -> float:
        f = as_signal(f)
        return float(self.restricted(f.values, f.support(), np.array([x]))[0])

    def oscillations(self, values, support, starts, lens, ex_starts, ex_lens) -> np.ndarray:
        """Per cube: max - min over the cube's points of Op(f chi_{S minus exclusion arc})."""
        n = values.shape[0]
        out = np.zeros(len(starts))
        for c in range(len(starts)):
            sub = support[(support - ex_starts[c]) % n >= ex_lens[c]]
            if sub.size == 0:
                continue
            v = self.restricted(values, sub, (starts[c] + np.arange(lens[c])) % n)
            out[c] = v.max() - v.min()
        return out


class _Modulated(OperatorHandle):
    maximal = False

    def __init__(self, profile: OperatorProfile, use_numba=None):
        self.profile = profile
        self.use_numba = use_numba

    def restricted(self, values, support, points):
        p = self.profile
        return _kernels.modulated_values(values / p.n, support, points, p.conv, p.phase, p.bucket,
                                         p.m, self.maximal, self.use_numba)

    def oscillations(self, values, support, starts, lens, ex_starts, ex_lens):
        p = self.profile
        return _kernels.cube_oscillations(values / p.n, support, starts, lens, ex_starts, ex_lens,
                                          p.conv, p.phase, p.bucket, p.m, self.maximal,
                                          self.use_numba)


class ModulatedSup(_Modulated):
    """T^F f(x) = max_xi |T(e^{2 pi i xi .} f)(x)| at the base truncation."""

    name = "modulated_sup"


class ModulatedMaximalSup(_Modulated):
    """T^F_* f(x): max over truncations in the epsilon grid and over frequencies."""

    name = "modulated_maximal_sup"
    maximal = True


class IdentityScale(OperatorHandle):
    """T f = f, as an operator handle (modulus taken)."""

    name = "identity"

    def restricted(self, values, support, points):
        mask = np.zeros(values.shape[0], dtype=bool)
        mask[support] = True
        return np.where(mask[points], np.abs(values[points]), 0.0)


OPERATOR_HANDLES = {"modulated_sup": ModulatedSup, "modulated_maximal_sup": ModulatedMaximalSup}


def handle(name: str, profile: OperatorProfile | None = None) -> OperatorHandle:
    if name == "identity":
        return IdentityScale()
    try:
        return OPERATOR_HANDLES[name](profile)
    except KeyError:
        raise ValueError(f"unknown operator {name!r}; known: identity, "
                         f"{', '.join(sorted(OPERATOR_HANDLES))}") from None


def maximal_truncated(f, k: KernelSpec, x: int) -> float:
    """T_* f(x) = max over the epsilon grid of |T_eps f(x)|."""
    f = as_signal(f)
    prof = OperatorProfile(k, ModulationFamily((0,)), f.n)
    return ModulatedMaximalSup(prof)(f, x)


def maximal_truncated_field(f, k: KernelSpec) -> np.ndarray:
    f = as_signal(f)
    prof = OperatorProfile(k, ModulationFamily((0,)), f.n)
    return ModulatedMaximalSup(prof).field(f)


def modulated_sup(f, prof: OperatorProfile, x: int) -> float:
    return ModulatedSup(prof)(f, x)


def modulated_sup_field(f, prof: OperatorProfile) -> np.ndarray:
    return ModulatedSup(prof).field(f)


def modulated_maximal_sup(f, prof: OperatorProfile, x: int) -> float:
    return ModulatedMaximalSup(prof)(f, x)


def modulated_maximal_sup_field(f, prof: OperatorProfile) -> np.ndarray:
    return ModulatedMaximalSup(prof).field(f)


def modulated_components(f, prof: OperatorProfile, points=None) -> np.ndarray:
    """Complex T(M^xi f)(x), shape (points, frequencies)."""
    f = as_signal(f)
    pts = np.arange(f.n) if points is None else np.asarray(points)
    return _kernels.modulated_components(f.values / f.n, f.support(), pts, prof.conv, prof.phase)


# ---------------------------------------------------------------------------
# grand sharp maximal operator


def sharp_cubes(n: int, alpha: int, grids=(0, 1)) -> list[DyadicCube]:
    """Default cube collection: both grids, 8/N <= |Q| <= 1/(2 alpha)."""
    m = n.bit_length() - 1
    out = []
    for k in range(m + 1):
        if (n >> k) < 8 or (1 << k) < 2 * alpha:
            continue
        out.extend(DyadicCube(g, k, j) for g in grids for j in range(1 << k))
    return out


def _as_handle(op) -> OperatorHandle:
    if isinstance(op, OperatorHandle):
        return op
    if isinstance(op, OperatorProfile):
        return ModulatedSup(op)
    raise TypeError(f"expected an operator handle or profile, got {type(op).__name__}")


def cube_oscillation_table(values: np.ndarray, support: np.ndarray, op, alpha: int,
                           cubes: Sequence[DyadicCube]) -> np.ndarray:
    """For each cube P: max over x', x'' in P of |Op(f chi_{S minus alpha P})(x') - (x'')|."""
    n = values.shape[0]
    op = _as_handle(op)
    if len(cubes) == 0:
        return np.zeros(0)
    arcs = np.array([c.sample_arc(n) for c in cubes], dtype=np.int64)
    ex = np.array([dilated_arc(c, alpha, n) for c in cubes], dtype=np.int64)
    return op.oscillations(values, np.asarray(support, dtype=np.int64), arcs[:, 0], arcs[:, 1],
                           ex[:, 0], ex[:, 1])


def _spread(osc: np.ndarray, cubes: Sequence[DyadicCube], n: int) -> np.ndarray:
    out = np.zeros(n)
    for c, v in zip(cubes, osc):
        start, count = c.sample_arc(n)
        idx = (start + np.arange(count)) % n
        out[idx] = np.maximum(out[idx], v)
    return out


def grand_sharp_field(f, op, alpha: int = 3, cubes: Sequence[DyadicCube] | None = None) -> np.ndarray:
    """M#_{T, alpha} f at every sample.

    Over pairs x', x'' in a cube the largest |difference| is max - min of the
    values, so every pair is accounted for at linear cost.
    """
    f = as_signal(f)
    if alpha < 3 or alpha % 2 == 0:
        raise ValueError("alpha must be an odd integer >= 3")
    cubes = sharp_cubes(f.n, alpha) if cubes is None else list(cubes)
    osc = cube_oscillation_table(f.values, f.support(), op, alpha, cubes)
    return _spread(osc, cubes, f.n)


def grand_sharp(f, op, alpha: int, x: int) -> float:
    f = as_signal(f)
    cubes = [c for c in sharp_cubes(f.n, alpha)
             if (x - c.sample_arc(f.n)[0]) % f.n < c.sample_arc(f.n)[1]]
    return float(grand_sharp_field(f, op, alpha, cubes)[x])


# ---------------------------------------------------------------------------
# Hormander constant


@dataclass(frozen=True)
class KappaProbe:
    n: int = 1024
    levels: tuple | None = None
    positions: int = 8
    pairs: int = 16
    k_max: int = 20
    seed: int = 0
    line_nodes: int = 256
    tail_fraction: float = 0.1

    def probe_levels(self) -> tuple:
        if self.levels is not None:
            return tuple(self.levels)
        m = self.n.bit_length() - 1
        return tuple(range(2, m - 2))


@dataclass(frozen=True)
class KappaEstimate:
    value: float
    r: float
    kernel: str
    k_max: int
    cubes: int
    pairs: int
    annuli: int
    argmax: dict

    def __float__(self):
        return self.value

    def to_json(self) -> dict:
        return {"kappa": self.value, "r": self.r, "kernel": self.kernel, "k_max": self.k_max,
                "cubes": self.cubes, "pairs": self.pairs, "annuli": self.annuli}


def _annulus_term(diff: np.ndarray, weight, r: float, dilate_measure: float) -> np.ndarray:
    """|2^k Q|^{1/r'} * ||diff||_{L^r(annulus)} for each row of ``diff``."""
    rp = conjugate(r)
    scale = 1.0 if math.isinf(rp) else dilate_measure ** (1.0 / rp)
    if math.isinf(r):
        norm = np.abs(diff).max(axis=1)
    else:
        norm = (np.abs(diff) ** r @ weight) ** (1.0 / r)
    return scale * norm


def _check_tail(terms: np.ndarray, probe: KappaProbe, name: str):
    k = terms.shape[-1]
    if k < 8:
        return
    tail = terms[..., -(k // 4):].sum(axis=-1)
    total = terms.sum(axis=-1)
    if np.any(tail > probe.tail_fraction * np.maximum(total, 1e-300)):
        raise DivergentSum(f"partial sums for {name} do not level off within k_max={k}")


def kappa_estimate(k: KernelSpec, r: float, probe: KappaProbe | None = None) -> KappaEstimate:
    """Empirical L^r-Hormander constant: max over probed cubes and pairs in Q/2 of

        sum_k |2^k Q|^{1/r'} ||K(x', .) - K(x'', .)||_{L^r(2^k Q minus 2^{k-1} Q)}.

    The random probes depend only on ``probe`` (never on r), so two calls that
    differ only in r see identical cubes and pairs.
    """
    probe = probe or KappaProbe()
    if r < 1:
        raise ValueError("r must be >= 1")
    rng = np.random.default_rng(probe.seed)
    best, arg = 0.0, {}
    cubes = pairs = annuli = 0
    n = probe.n
    for level in probe.probe_levels():
        count = min(probe.positions, 1 << level)
        idxs = rng.choice(1 << level, size=count, replace=False)
        for j in idxs:
            cubes += 1
            if k.periodic:
                terms, info = _kappa_periodic(k, r, n, level, int(j), rng, probe)
            else:
                terms, info = _kappa_line(k, r, level, rng, probe)
            pairs += terms.shape[0]
            annuli = max(annuli, terms.shape[1])
            sums = terms.sum(axis=1)
            i = int(np.argmax(sums))
            if sums[i] > best:
                best = float(sums[i])
                arg = {"level": level, "index": int(j), **{key: v[i] for key, v in info.items()}}
    return KappaEstimate(best, r, k.name, probe.k_max, cubes, pairs, annuli, arg)


def _kappa_periodic(k, r, n, level, j, rng, probe):
    from .dyadic import scale

    conv = k.conv_vector(n)
    q = DyadicCube(0, level, j).interval
    half = scale(q, 0.5).sample_indices(n)
    x1 = rng.choice(half, size=probe.pairs)
    x2 = rng.choice(half, size=probe.pairs)
    terms = []
    inner = q.sample_indices(n)
    for kk in range(1, probe.k_max + 1):
        if q.length * (1 << kk) > 1:
            break
        outer = scale(q, 1 << kk).sample_indices(n)
        ann = np.setdiff1d(outer, inner, assume_unique=True)
        inner = outer
        if ann.size == 0:
            terms.append(np.zeros(probe.pairs))
            continue
        diff = conv[(x1[:, None] - ann[None, :]) % n] - conv[(x2[:, None] - ann[None, :]) % n]
        weight = np.full(ann.size, 1.0 / n)
        terms.append(_annulus_term(diff, weight, r, outer.size / n))
    terms = np.stack(terms, axis=1) if terms else np.zeros((probe.pairs, 1))
    return terms, {"x1": [int(v) for v in x1], "x2": [int(v) for v in x2]}


def _kappa_line(k, r, level, rng, probe):
    h = 2.0 ** -level
    c = rng.uniform(0.0, 1.0)
    x1 = c + rng.uniform(-h / 4, h / 4, size=probe.pairs)
    x2 = c + rng.uniform(-h / 4, h / 4, size=probe.pairs)
    m = probe.line_nodes
    terms = []
    for kk in range(1, probe.k_max + 1):
        a, b = 2.0 ** (kk - 2) * h, 2.0 ** (kk - 1) * h
        step = (b - a) / m
        off = a + step * (np.arange(m) + 0.5)
        ys = np.concatenate([c - off, c + off])
        weight = np.full(ys.size, step)
        diff = k.profile(x1[:, None] - ys[None, :]) - k.profile(x2[:, None] - ys[None, :])
        terms.append(_annulus_term(diff, weight, r, 2.0 ** kk * h))
    terms = np.stack(terms, axis=1)
    _check_tail(terms, probe, k.name)
    return terms, {"x1": [float(v) for v in x1], "x2": [float(v) for v in x2]}


# ---------------------------------------------------------------------------
# empirical weak norms and the W_q property


def weak_lp_quotient(values: np.ndarray, n: int, norm: float, p: float) -> float:
    """sup_lam lam |{values > lam}|^{1/p} / norm with |.| = count / n."""
    if norm == 0:
        return 0.0
    v = np.sort(np.asarray(values))[::-1]
    ranks = np.arange(1, v.size + 1) / n
    return float(np.max(v * ranks ** (1.0 / p)) / norm)


def weak_norm_estimate(prof: OperatorProfile, p: float, trials: Sequence) -> float:
    """Largest observed weak-L^p quotient of T^F over the trial signals.

    This is a lower bound for the operator's weak-type norm.
    """
    if not 1 < p <= 2:
        raise ValueError("p must lie in (1, 2]")
    op = ModulatedSup(prof)
    best = 0.0
    for f in trials:
        f = as_signal(f)
        norm = float(np.mean(np.abs(f.values) ** p) ** (1.0 / p))
        if norm == 0:
            continue
        best = max(best, weak_lp_quotient(op.field(f), f.n, norm, p))
    return best


def calibrate_weak_norm(prof: OperatorProfile, p: float, trials: Sequence) -> OperatorProfile:
    est = dict(prof.weak_norm_estimates)
    est[float(conjugate(p))] = weak_norm_estimate(prof, p, trials)
    return prof.replace(weak_norm_estimates=est)


def _wq_ratios(prof: OperatorProfile, f, q: Interval, qexp: float) -> np.ndarray:
    f = as_signal(f).restrict(q)
    idx = q.sample_indices(f.n)
    avg = lp_average(f, q, qexp)
    vals = ModulatedSup(prof).restricted(f.values, f.support(), idx)
    return vals / avg if avg > 0 else np.zeros_like(vals)


def wq_calibrate(prof: OperatorProfile, q: Interval, qexp: float, lambdas: Sequence[float],
                 trials: Sequence) -> OperatorProfile:
    """Threshold xi(lam) such that T^F(f chi_Q) > xi <f>_{q,Q} on at most lam |Q| of Q.

    Per trial this is the rearrangement of the ratio at lam |Q|; the stored
    value is the largest over the calibration family.
    """
    thr = {float(lam): 0.0 for lam in lambdas}
    for f in trials:
        ratios = np.sort(_wq_ratios(prof, f, q, qexp))[::-1]
        for lam in lambdas:
            k = floor_count(lam, ratios.size)
            val = float(ratios[k]) if k < ratios.size else 0.0
            thr[float(lam)] = max(thr[float(lam)], val)
    return prof.replace(wq_threshold=thr)


def wq_exceedance(prof: OperatorProfile, q: Interval, qexp: float, f) -> dict:
    """Fraction of Q where T^F(f chi_Q) > xi(lam) <f>_{q,Q}, per calibrated lam."""
    ratios = _wq_ratios(prof, f, q, qexp)
    return {lam: float(np.count_nonzero(ratios > xi)) / ratios.size
            for lam, xi in prof.wq_threshold.items()}
