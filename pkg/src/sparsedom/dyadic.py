"""Exact interval and dyadic-cube arithmetic on the periodic unit circle.

Everything here is rational (``fractions.Fraction``); nothing touches floating
point. Two grids are supported: the standard dyadic grid (``grid_id=0``) and
the grid shifted by one third (``grid_id=1``). Together they cover every short
interval by a cube of comparable length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DepthExceeded, IntervalTooLong, RootHasNoParent

DEFAULT_MAX_DEPTH = 24
GRID_SHIFTS = {0: Fraction(0), 1: Fraction(1, 3)}


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        # floats are accepted only when they are exact binary fractions
        return Fraction(v)
    return Fraction(v)


def fraction_str(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def parse_fraction(s) -> Fraction:
    if isinstance(s, (int, Fraction)):
        return Fraction(s)
    if isinstance(s, float):
        return Fraction(s)
    return Fraction(str(s).strip())


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open arc ``[left, left + length)`` of the circle R/Z.

    ``left`` is reduced to [0, 1) and the full circle is stored canonically as
    ``left=0, length=1``. With ``periodic=False`` the interval lives on the
    line and no reduction happens.
    """

    left: Fraction
    length: Fraction
    periodic: bool = True

    def __post_init__(self):
        left = _frac(self.left)
        length = _frac(self.length)
        if length <= 0:
            raise ValueError(f"interval length must be positive, got {length}")
        if self.periodic:
            if length > 1:
                raise ValueError(f"periodic interval longer than the circle: {length}")
            left = left - math.floor(left)
            if length == 1:
                left = Fraction(0)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "length", length)

    @classmethod
    def from_endpoints(cls, a, b, periodic=True) -> "Interval":
        a, b = _frac(a), _frac(b)
        return cls(a, b - a, periodic)

    @classmethod
    def full(cls) -> "Interval":
        return cls(Fraction(0), Fraction(1))

    @property
    def right(self) -> Fraction:
        return self.left + self.length

    @property
    def is_full(self) -> bool:
        return self.periodic and self.length == 1

    @property
    def center(self) -> Fraction:
        c = self.left + self.length / 2
        return c - math.floor(c) if self.periodic else c

    def contains_point(self, x) -> bool:
        x = _frac(x)
        if not self.periodic:
            return self.left <= x < self.right
        if self.is_full:
            return True
        return (x - self.left) % 1 < self.length

    def contains(self, other: "Interval") -> bool:
        if not self.periodic:
            return self.left <= other.left and other.right <= self.right
        if self.is_full:
            return True
        if other.is_full:
            return False
        return (other.left - self.left) % 1 + other.length <= self.length

    def intersection_measure(self, other: "Interval") -> Fraction:
        if not self.periodic:
            return max(Fraction(0), min(self.right, other.right) - max(self.left, other.left))
        total = Fraction(0)
        for shift in (-1, 0, 1):
            lo = max(self.left, other.left + shift)
            hi = min(self.right, other.right + shift)
            if hi > lo:
                total += hi - lo
        return min(total, self.length, other.length)

    def sample_arc(self, n: int) -> tuple[int, int]:
        """First sample index and count of grid points ``i/n`` inside the arc."""
        if self.is_full:
            return 0, n
        start = math.ceil(self.left * n)
        stop = math.ceil(self.right * n)
        return start % n, stop - start

    def sample_indices(self, n: int) -> np.ndarray:
        start, count = self.sample_arc(n)
        return (start + np.arange(count)) % n

    def to_json(self) -> dict:
        return {"left": fraction_str(self.left), "length": fraction_str(self.length)}

    @classmethod
    def from_json(cls, d) -> "Interval":
        if isinstance(d, dict):
            return cls(parse_fraction(d["left"]), parse_fraction(d["length"]))
        a, b = d
        return cls.from_endpoints(parse_fraction(a), parse_fraction(b))

    def __repr__(self):
        return f"Interval[{self.left}, {self.right})"


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube ``[m 2^-k + s, (m+1) 2^-k + s) mod 1`` of grid ``grid_id``."""

    grid_id: int
    level: int
    index: int

    def __post_init__(self):
        if self.grid_id not in GRID_SHIFTS:
            raise ValueError(f"unknown grid {self.grid_id}")
        if self.level < 0 or not 0 <= self.index < (1 << self.level):
            raise ValueError(f"bad cube ({self.grid_id}, {self.level}, {self.index})")

    @property
    def length(self) -> Fraction:
        return Fraction(1, 1 << self.level)

    @property
    def interval(self) -> Interval:
        return Interval(Fraction(self.index, 1 << self.level) + GRID_SHIFTS[self.grid_id], self.length)

    def sample_arc(self, n: int) -> tuple[int, int]:
        # integer shortcut; agrees with self.interval.sample_arc(n) for n = 2^m, level <= m
        block = n >> self.level
        if block >= n:
            return 0, n
        start = self.index * block
        if self.grid_id == 1:
            start += (n + 2) // 3
        return start % n, block

    def contains(self, other: "DyadicCube | Interval") -> bool:
        other_iv = other.interval if isinstance(other, DyadicCube) else other
        return self.interval.contains(other_iv)

    def to_triple(self) -> list[int]:
        return [self.grid_id, self.level, self.index]

    @classmethod
    def from_triple(cls, t) -> "DyadicCube":
        return cls(int(t[0]), int(t[1]), int(t[2]))


def cube_containing(x, grid_id: int, level: int) -> DyadicCube:
    x = _frac(x)
    u = (x - GRID_SHIFTS[grid_id]) % 1
    return DyadicCube(grid_id, level, math.floor(u * (1 << level)))


def children(c: DyadicCube, max_depth: int = DEFAULT_MAX_DEPTH) -> tuple[DyadicCube, DyadicCube]:
    if c.level >= max_depth:
        raise DepthExceeded(f"cube {c.to_triple()} is at the maximum depth {max_depth}")
    return (DyadicCube(c.grid_id, c.level + 1, 2 * c.index),
            DyadicCube(c.grid_id, c.level + 1, 2 * c.index + 1))


def parent(c: DyadicCube) -> DyadicCube:
    if c.level == 0:
        raise RootHasNoParent(f"cube {c.to_triple()} is a grid root")
    return DyadicCube(c.grid_id, c.level - 1, c.index // 2)


def descendants(c: DyadicCube, depth: int, max_depth: int = DEFAULT_MAX_DEPTH) -> list[DyadicCube]:
    if c.level + depth > max_depth:
        raise DepthExceeded(f"level {c.level + depth} exceeds maximum depth {max_depth}")
    k = c.level + depth
    base = c.index << depth
    return [DyadicCube(c.grid_id, k, base + j) for j in range(1 << depth)]


def as_dyadic(q: Interval, grid_id: int = 0) -> DyadicCube | None:
    """The grid cube equal to ``q``, or None when ``q`` is not one."""
    if not q.periodic:
        return None
    k = q.length.denominator.bit_length() - 1
    if q.length.numerator != 1 or (1 << k) != q.length.denominator:
        return None
    c = cube_containing(q.left, grid_id, k)
    return c if c.interval == q else None


def scale(q: Interval, factor) -> Interval:
    """Concentric dilation by an arbitrary positive rational factor.

    Saturates to the full circle once the dilated length reaches 1.
    """
    factor = _frac(factor)
    if factor <= 0:
        raise ValueError("dilation factor must be positive")
    new_len = q.length * factor
    if q.periodic and new_len >= 1:
        return Interval.full()
    return Interval(q.center - new_len / 2, new_len, q.periodic)


def dilate(q: Interval, alpha: int) -> Interval:
    """``alpha * q`` with the same center; the full circle when ``alpha |q| >= 1``.

    Saturation is reported through ``result.is_full``.
    """
    if int(alpha) != alpha or alpha < 1 or alpha % 2 == 0:
        raise ValueError(f"alpha must be an odd positive integer, got {alpha}")
    return scale(q, int(alpha))


def dilated_arc(c: DyadicCube, alpha: int, n: int) -> tuple[int, int]:
    """Sample arc of ``dilate(c.interval, alpha)`` by integer arithmetic."""
    start, block = c.sample_arc(n)
    if alpha * block >= n:
        return 0, n
    return (start - (alpha - 1) // 2 * block) % n, alpha * block


def shifted_cover(i: Interval, max_depth: int = DEFAULT_MAX_DEPTH) -> DyadicCube:
    """Smallest cube of grid 0 or grid 1 containing ``i``.

    For ``|i| <= 1/6`` a container with ``|Q| < 6 |i|`` always exists: at the
    largest level k with ``|i| <= 2^-k / 3`` the endpoints of the two grids
    are at least ``2^-k / 3`` apart, so the interior of ``i`` cannot meet
    endpoints of both grids.
    """
    if i.length > Fraction(1, 6):
        raise IntervalTooLong(f"interval length {i.length} exceeds 1/6")
    # deepest level whose cubes are at least as long as i
    inv = 1 / i.length
    k = min(max_depth, (inv.numerator // inv.denominator).bit_length() - 1)
    for level in range(k, -1, -1):
        for grid in (0, 1):
            c = cube_containing(i.left, grid, level)
            if c.interval.contains(i):
                return c
    raise AssertionError("the full circle always contains the interval")  # pragma: no cover


@dataclass(frozen=True)
class SparseFamily:
    """A finite family of distinct intervals with a target sparseness ``eta``."""

    eta: Fraction
    cubes: tuple
    certificate: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        eta = _frac(self.eta)
        if not 0 < eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {eta}")
        cubes = tuple(c.interval if isinstance(c, DyadicCube) else c for c in self.cubes)
        if len(set(cubes)) != len(cubes):
            raise ValueError("sparse families may not contain duplicate cubes")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "cubes", cubes)

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def without(self, k: int) -> "SparseFamily":
        return SparseFamily(self.eta, self.cubes[:k] + self.cubes[k + 1:])


@dataclass
class PackingReport:
    certified: bool
    sums: dict | None = None
    violator: Interval | None = None
    violator_sum: Fraction | None = None

    def __bool__(self):
        return self.certified


def packing_sums(cubes: Sequence[Interval]) -> list[Fraction]:
    """For every cube Q, the exact sum of |P| over family cubes P contained in Q."""
    if not cubes:
        return []
    denom = 1
    for c in cubes:
        denom = math.lcm(denom, c.left.denominator, c.length.denominator)
    lefts = [int(c.left * denom) for c in cubes]
    lens = [int(c.length * denom) for c in cubes]
    n = len(cubes)
    if denom < (1 << 40) and n * denom < (1 << 62):
        lo = np.asarray(lefts, dtype=np.int64)
        ln = np.asarray(lens, dtype=np.int64)
        full = ln == denom
        sums = np.zeros(n, dtype=np.int64)
        chunk = max(1, (1 << 22) // n)
        for a in range(0, n, chunk):
            b = min(n, a + chunk)
            # rows: containers Q, columns: members P
            off = (lo[None, :] - lo[a:b, None]) % denom
            inside = (off + ln[None, :] <= ln[a:b, None]) & ~full[None, :]
            inside |= full[a:b, None]
            sums[a:b] = inside.astype(np.int64) @ ln
        raw = [int(s) for s in sums]
    else:  # pragma: no cover - enormous denominators only
        raw = [sum(lens[j] for j in range(n) if cubes[i].contains(cubes[j])) for i in range(n)]
    return [Fraction(s, denom) for s in raw]


def sparseness_check(fam: SparseFamily) -> PackingReport:
    """Carleson packing test: sum_{P in fam, P subset Q} |P| <= |Q| / eta for all Q."""
    sums = packing_sums(fam.cubes)
    cert = {}
    for q, s in zip(fam.cubes, sums):
        if s * fam.eta > q.length:
            return PackingReport(False, None, q, s)
        cert[q] = s
    return PackingReport(True, cert)


def certify(fam: SparseFamily) -> SparseFamily:
    rep = sparseness_check(fam)
    if not rep.certified:
        raise ValueError(f"family violates packing at {rep.violator}: {rep.violator_sum}")
    return SparseFamily(fam.eta, fam.cubes, rep.sums)


def all_cubes(levels: Iterable[int], grids=(0, 1)) -> list[DyadicCube]:
    return [DyadicCube(g, k, j) for g in grids for k in levels for j in range(1 << k)]
