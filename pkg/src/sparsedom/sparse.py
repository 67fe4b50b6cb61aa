"""Sparse operators, local-oscillation decomposition, and recursive sparse domination."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import (DyadicCube, Interval, SparseFamily, as_dyadic, dilate, dilated_arc,
                     fraction_str, shifted_cover, sparseness_check)
from .errors import CalibrationFailure, NotDyadic, ResolutionFloor
from .operators import OperatorHandle, _spread, cube_oscillation_table, sharp_cubes
from .signal import Signal, _osc_sorted, as_signal, floor_count, maximal_r_field

log = logging.getLogger(__name__)

HALF = Fraction(1, 2)


# ---------------------------------------------------------------------------
# sparse operators


def _avg_on_arc(values: np.ndarray, start: int, count: int, p: float) -> float:
    idx = (start + np.arange(count)) % values.shape[0]
    a = np.abs(values[idx])
    return float(a.mean()) if p == 1 else float(np.mean(a ** p) ** (1.0 / p))


def sparse_apply_field(f, fam: SparseFamily | Sequence[Interval], p: float) -> np.ndarray:
    """A_{p,S} f = sum over Q in S of <f>_{Q,p} 1_Q, at every sample."""
    f = as_signal(f)
    out = np.zeros(f.n)
    for q in fam:
        start, count = q.sample_arc(f.n)
        if count == 0:
            continue
        idx = (start + np.arange(count)) % f.n
        out[idx] += _avg_on_arc(f.values, start, count, p)
    return out


def sparse_apply(f, fam, p: float, x: int) -> float:
    return float(sparse_apply_field(f, fam, p)[x])


def dilated_sparse_field(f, cubes: Sequence[DyadicCube], alpha: int, s: float) -> np.ndarray:
    """sum over R of <f>_{s, alpha R} 1_R."""
    f = as_signal(f)
    out = np.zeros(f.n)
    for c in cubes:
        start, count = c.sample_arc(f.n)
        avg = _avg_on_arc(f.values, *dilated_arc(c, alpha, f.n), s)
        out[(start + np.arange(count)) % f.n] += avg
    return out


# ---------------------------------------------------------------------------
# local mean oscillation decomposition


def _root_cube(q0: Interval) -> DyadicCube:
    c = as_dyadic(q0, 0)
    if c is None:
        raise NotDyadic(f"{q0} is not a cube of the standard dyadic grid")
    return c


def _select_maximal(mask: np.ndarray, level: int, index: int, strict: bool) -> list[DyadicCube]:
    """Maximal dyadic P strictly inside the cube with density of ``mask`` above 1/4.

    ``mask`` holds the cube's samples in order. ``strict`` selects
    ``|P & mask| > |P|/4``, otherwise ``>= |P|/4``.
    """
    n = mask.size
    if not mask.any():
        return []
    covered = np.zeros(n, dtype=bool)
    out = []
    d = 1
    while (n >> d) >= 1 and d <= n.bit_length() - 1:
        b = n >> d
        counts = mask.reshape(-1, b).sum(axis=1)
        hit = 4 * counts > b if strict else 4 * counts >= b
        hit &= counts > 0
        hit &= ~covered[::b]
        for j in np.flatnonzero(hit):
            out.append(DyadicCube(0, level + d, (index << d) + int(j)))
            covered[j * b:(j + 1) * b] = True
        d += 1
    return out


def lerner_decompose(f, q0: Interval, lam=Fraction(1, 8)) -> SparseFamily:
    """Sparse family L in D(q0) with |f - m_f(q0)| <= 2 sum_L omega_lam(f; L) 1_L on q0.

    At each cube Q, E = {|f - m_f(Q)| > ((f - m_f(Q)) 1_Q)^*(lam |Q|)} has
    |E| <= lam |Q|; the maximal dyadic P in Q with |P & E| >= |P|/4 are the
    next generation. They cover E, satisfy |P & E| < |P|/2 (so the median
    of P is within the rearrangement level of m_f(Q)), and have total
    measure at most 4 lam |Q| = |Q|/2.
    """
    f = as_signal(f)
    root = _root_cube(q0)
    n = f.n
    if f.is_complex:
        raise TypeError("the decomposition needs a real-valued signal")
    out = []
    stack = [root]
    while stack:
        c = stack.pop()
        out.append(c)
        start, count = c.sample_arc(n)
        if count <= 1:
            continue
        vals = f.values[(start + np.arange(count)) % n]
        s = np.sort(vals)
        med = s[(count + 1) // 2 - 1]
        g = np.abs(vals - med)
        k = floor_count(lam, count)
        level = np.sort(g)[::-1][k] if k < count else 0.0
        stack.extend(reversed(_select_maximal(g > level, c.level, c.index, strict=False)))
    out.sort(key=lambda c: (c.level, c.index))
    return SparseFamily(HALF, tuple(c.interval for c in out))


@dataclass
class LernerCheck:
    lhs: np.ndarray
    rhs: np.ndarray
    holds: bool
    worst_gap: float
    packing_ok: bool


def lerner_check(f, q0: Interval, fam: SparseFamily, lam=Fraction(1, 8)) -> LernerCheck:
    f = as_signal(f)
    idx = q0.sample_indices(f.n)
    s = np.sort(f.values[idx])
    med = s[(idx.size + 1) // 2 - 1]
    lhs = np.abs(f.values[idx] - med)
    rhs_full = np.zeros(f.n)
    for q in fam:
        start, count = q.sample_arc(f.n)
        sub = (start + np.arange(count)) % f.n
        rhs_full[sub] += 2 * _osc_sorted(np.sort(f.values[sub]), lam)
    rhs = rhs_full[idx]
    gap = lhs - rhs
    return LernerCheck(lhs, rhs, bool(np.all(gap <= 0)), float(gap.max()),
                       sparseness_check(fam).certified)


# ---------------------------------------------------------------------------
# sparse domination


@dataclass
class DominationResult:
    family: SparseFamily
    cubes: list
    dilated: list
    A: float
    c0: float
    c_empirical: float
    recursion_depth: int
    node_count: int
    skipped: int
    root: Interval
    alpha: int
    s: float
    op_name: str
    op_values: np.ndarray = field(repr=False)
    attempts: list = field(default_factory=list)
    covers: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "operator": self.op_name,
            "root": self.root.to_json(),
            "alpha": self.alpha,
            "s": self.s,
            "A": self.A,
            "c0": self.c0,
            "c_empirical": self.c_empirical,
            "recursion_depth": self.recursion_depth,
            "node_count": self.node_count,
            "skipped": self.skipped,
            "family": [c.to_triple() for c in self.cubes],
            "dilated": [[fraction_str(i.left), fraction_str(i.length)] for i in self.dilated],
            "shifted_covers": [c.to_triple() if c is not None else None for c in self.covers],
            "attempts": self.attempts,
        }


@dataclass
class _Node:
    cube: DyadicCube
    avg: float
    maximal: np.ndarray
    op: np.ndarray


class _NodeCache:
    """Per-cube quantities that do not depend on A or c0."""

    def __init__(self, f: Signal, op: OperatorHandle, alpha: int, s: float):
        self.f, self.op, self.alpha, self.s = f, op, alpha, s
        self.support = f.support()
        self.cache = {}
        n = f.n
        self.sharp_cubes = sharp_cubes(n, alpha)
        self._levels = sorted({c.level for c in self.sharp_cubes})

    def __getitem__(self, c: DyadicCube) -> _Node:
        node = self.cache.get(c)
        if node is None:
            node = self.cache[c] = self._compute(c)
        return node

    def _compute(self, c: DyadicCube) -> _Node:
        f, n = self.f, self.f.n
        start, count = c.sample_arc(n)
        pts = (start + np.arange(count)) % n
        ds, dc = dilated_arc(c, self.alpha, n)
        sup = self.support[(self.support - ds) % n < dc]
        g = np.zeros(n, dtype=f.values.dtype)
        g[sup] = f.values[sup]
        avg = _avg_on_arc(g, ds, dc, self.s)
        if sup.size == 0:
            z = np.zeros(count)
            return _Node(c, avg, z, z)
        ms = maximal_r_field(g, self.s)[pts]
        opv = self.op.restricted(f.values, sup, pts)
        sharp = self._sharp_on(f.values, sup, pts)
        return _Node(c, avg, ms, np.maximum(opv, sharp))

    def _sharp_on(self, values, sup, pts):
        n = values.shape[0]
        m = n.bit_length() - 1
        cubes = []
        for g in (0, 1):
            off = (n + 2) // 3 if g == 1 else 0
            for k in self._levels:
                ids = np.unique(((pts - off) % n) >> (m - k))
                cubes.extend(DyadicCube(g, k, int(j)) for j in ids)
        if not cubes:
            return np.zeros(pts.size)
        osc = cube_oscillation_table(values, sup, self.op, self.alpha, cubes)
        return _spread(osc, cubes, n)[pts]


def _omega(node: _Node, A: float, c0: float):
    m_part = node.maximal > c0 * node.avg
    t_part = node.op > A * node.avg
    return m_part, t_part


def _traverse(cache: _NodeCache, root: DyadicCube, A: float, c0: float):
    """Run the stopping-time recursion. Returns (cubes, depth, failure)."""
    cubes, depth = [], 0
    queue = [(root, 0)]
    while queue:
        queue.sort(key=lambda t: (t[0].level, t[0].index))
        c, d = queue.pop(0)
        node = cache[c]
        m_part, t_part = _omega(node, A, c0)
        omega = m_part | t_part
        count = omega.size
        if 8 * int(omega.sum()) > count:
            reason = "maximal" if 8 * int(m_part.sum()) > count else "operator"
            return cubes, depth, (c, reason)
        cubes.append(c)
        depth = max(depth, d)
        if count <= 1:
            continue
        for p in _select_maximal(omega, c.level, c.index, strict=True):
            queue.append((p, d + 1))
    return cubes, depth, None


def sparse_dominate(f, op_handle: OperatorHandle, q: Interval, alpha: int = 3, s: float = 2.0,
                    A="AUTO", c0: float = 4.0, A_init: float = 1.0,
                    max_doublings: int = 64, covers: bool = True) -> DominationResult:
    """Stopping-time construction of a 1/2-sparse family dominating op(f) on q.

    At a node Q with Q* = alpha Q the exceptional set is

        Omega = {x in Q : M_s(f 1_{Q*}) > c0 <f>_{s,Q*}
                          or max(|op(f 1_{Q*})|, M#(f 1_{Q*})) > A <f>_{s,Q*}}

    and must satisfy |Omega| <= |Q|/8. The next generation is the maximal
    grid-0 dyadic P strictly inside Q with |P & Omega| > |P|/4.

    ``A="AUTO"`` starts from ``A_init`` and doubles A (or c0, when the
    maximal-function part alone overflows the budget) until every node passes.
    """
    f = as_signal(f)
    root = _root_cube(q)
    n = f.n
    sup = f.support()
    outside = sup[~np.isin(sup, q.sample_indices(n))]
    if outside.size and np.any(f.values[outside] != 0):
        raise ValueError("sparse_dominate needs supp(f) inside q")
    auto = isinstance(A, str) and A.upper() == "AUTO"
    A_val = float(A_init if auto else A)
    cache = _NodeCache(f, op_handle, alpha, s)
    attempts = []
    for _ in range(max_doublings + 1):
        cubes, depth, failure = _traverse(cache, root, A_val, c0)
        if failure is None:
            break
        cube, reason = failure
        attempts.append({"A": A_val, "c0": c0, "failed_at": cube.to_triple(), "reason": reason})
        if not auto:
            if cube.sample_arc(n)[1] <= 1:
                raise ResolutionFloor(f"single-sample node {cube.to_triple()} fails at A={A_val}")
            raise CalibrationFailure(f"node {cube.to_triple()} fails ({reason}) at A={A_val}, c0={c0}")
        if reason == "maximal":
            c0 *= 2
        else:
            A_val *= 2
        log.debug("AUTO: %s failure at %s, now A=%g c0=%g", reason, cube.to_triple(), A_val, c0)
    else:
        raise CalibrationFailure(f"no admissible constants after {max_doublings} doublings")

    cubes.sort(key=lambda c: (c.level, c.index))
    family = SparseFamily(HALF, tuple(c.interval for c in cubes))
    dil = [dilate(c.interval, alpha) for c in cubes]
    cov = [shifted_cover(i) if i.length <= Fraction(1, 6) else None for i in dil] if covers else []
    qidx = q.sample_indices(n)
    op_vals = np.zeros(n)
    op_vals[qidx] = op_handle.restricted(f.values, sup, qidx)
    res = DominationResult(family, cubes, dil, A_val, c0, 0.0, depth, len(cubes), 0, q, alpha, s,
                           getattr(op_handle, "name", type(op_handle).__name__), op_vals, attempts,
                           cov)
    rep = verify_domination(f, op_vals, res, s)
    res.c_empirical = rep.max_ratio
    res.skipped = rep.skipped
    return res


@dataclass
class DominationReport:
    max_ratio: float
    argmax: int
    histogram: tuple
    packing_ok: bool
    skipped: int
    ratios: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        counts, edges = self.histogram
        return {"max_ratio": self.max_ratio, "argmax": self.argmax, "packing_ok": self.packing_ok,
                "skipped": self.skipped,
                "histogram": {"counts": [int(c) for c in counts], "edges": [float(e) for e in edges]}}


def verify_domination(f, op_values, res: DominationResult, s: float, bins: int = 20) -> DominationReport:
    """Pointwise ratio |op(f)(x)| / sum_R <f>_{s,R*} 1_R(x) over the root cube.

    Points where both sides vanish are skipped and counted.
    """
    f = as_signal(f)
    vals = np.abs(np.asarray(getattr(op_values, "values", op_values)))
    qidx = res.root.sample_indices(f.n)
    dom = dilated_sparse_field(f, res.cubes, res.alpha, s)[qidx]
    top = vals[qidx]
    both_zero = (top == 0) & (dom == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(both_zero, 0.0, top / dom)
    valid = ~both_zero
    if valid.any():
        i = int(np.argmax(np.where(valid, ratio, -np.inf)))
        mx = float(ratio[i])
    else:
        i, mx = 0, 0.0
    hist = np.histogram(ratio[valid], bins=bins, range=(0.0, mx if mx > 0 else 1.0))
    return DominationReport(mx, int(qidx[i]), hist, sparseness_check(res.family).certified,
                            int(both_zero.sum()), ratio)
