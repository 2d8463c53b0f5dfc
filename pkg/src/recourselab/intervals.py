"""Exact finite-union interval algebra with open/closed endpoints.

Endpoints are 64-bit floats compared exactly (no epsilon): every endpoint in
this artifact comes from closed-form analysis or from grid points, both
exactly representable.  The canonical form of an :class:`IntervalSet` is a
sorted tuple of maximal intervals in which every adjacent pair is separated,
so set-level predicates reduce to endpoint comparisons.

Separatedness is the topological notion used by the one-dimensional decision
procedure: ``A`` and ``B`` are separated when ``cl(A) & B`` and ``A & cl(B)``
are both empty.  Disjoint does not imply separated ([0,1) vs [1,2]).

Everything here is a pure value type: operations allocate fresh sets and are
safe to call from many threads at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, NotSeparated

INF = math.inf


def _canon_endpoint(v: float) -> float:
    v = float(v)
    if math.isnan(v):
        raise ConfigError("interval endpoint is NaN")
    if v == 0.0:
        return 0.0  # collapse -0.0 so serialization round-trips bit-exactly
    return v


@dataclass(frozen=True, order=False)
class Interval:
    """A nonempty real interval with open/closed endpoint flags."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lo", _canon_endpoint(self.lo))
        object.__setattr__(self, "hi", _canon_endpoint(self.hi))
        if math.isinf(self.lo) and self.lo_closed:
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi) and self.hi_closed:
            object.__setattr__(self, "hi_closed", False)
        if self.lo > self.hi:
            raise ConfigError(f"interval endpoints out of order: {self.lo} > {self.hi}")
        if self.lo == self.hi and not (self.lo_closed and self.hi_closed):
            raise ConfigError("degenerate interval must be a closed singleton")

    # -- point/interval predicates -------------------------------------------------

    def contains(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def contains_interval(self, other: "Interval") -> bool:
        lo_ok = self.lo < other.lo or (self.lo == other.lo and (self.lo_closed or not other.lo_closed))
        hi_ok = other.hi < self.hi or (other.hi == self.hi and (self.hi_closed or not other.hi_closed))
        return lo_ok and hi_ok

    def closure(self) -> "Interval":
        return Interval(self.lo, self.hi,
                        self.lo_closed or not math.isinf(self.lo),
                        self.hi_closed or not math.isinf(self.hi))

    def intersect(self, other: "Interval") -> "Interval | None":
        if self.lo > other.lo:
            lo, lo_c = self.lo, self.lo_closed
        elif other.lo > self.lo:
            lo, lo_c = other.lo, other.lo_closed
        else:
            lo, lo_c = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_c = self.hi, self.hi_closed
        elif other.hi < self.hi:
            hi, hi_c = other.hi, other.hi_closed
        else:
            hi, hi_c = self.hi, self.hi_closed and other.hi_closed
        if lo > hi or (lo == hi and not (lo_c and hi_c)):
            return None
        return Interval(lo, hi, lo_c, hi_c)

    def midpoint(self) -> float:
        """A representative interior-or-member point, always contained."""
        if self.lo == self.hi:
            return self.lo
        if math.isinf(self.lo) and math.isinf(self.hi):
            return 0.0
        if math.isinf(self.lo):
            return self.hi - 1.0
        if math.isinf(self.hi):
            return self.lo + 1.0
        return 0.5 * (self.lo + self.hi)

    def __str__(self) -> str:
        lb = "[" if self.lo_closed else "("
        rb = "]" if self.hi_closed else ")"
        return f"{lb}{_fmt(self.lo)},{_fmt(self.hi)}{rb}"


def _fmt(v: float) -> str:
    if v == INF:
        return "inf"
    if v == -INF:
        return "-inf"
    return repr(v)


def _mergeable(a: Interval, b: Interval) -> bool:
    # assumes a.lo <= b.lo; merge when overlapping or touching with a closed side
    if b.lo < a.hi:
        return True
    if b.lo == a.hi and (a.hi_closed or b.lo_closed):
        return True
    return False


class IntervalSet:
    """Canonical finite union of maximal intervals."""

    __slots__ = ("parts",)

    def __init__(self, parts: Sequence[Interval] = ()):
        self.parts: tuple[Interval, ...] = _normalize_parts(parts)

    # -- constructors --------------------------------------------------------------

    @staticmethod
    def empty() -> "IntervalSet":
        return IntervalSet(())

    @staticmethod
    def full_line() -> "IntervalSet":
        return IntervalSet((Interval(-INF, INF, False, False),))

    @staticmethod
    def point(x: float) -> "IntervalSet":
        return IntervalSet((Interval(x, x, True, True),))

    # -- predicates -----------------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return not self.parts

    def contains(self, x: float) -> bool:
        return any(p.contains(x) for p in self.parts)

    def contains_batch(self, xs) -> "list[bool]":
        return [self.contains(float(x)) for x in xs]

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalSet) and self.parts == other.parts

    def __hash__(self):
        return hash(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def __str__(self) -> str:
        if not self.parts:
            return "{}"
        return " u ".join(str(p) for p in self.parts)

    def __repr__(self) -> str:
        return f"IntervalSet({self})"

    # -- algebra ---------------------------------------------------------------------

    def closure(self) -> "IntervalSet":
        return IntervalSet([p.closure() for p in self.parts])

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.parts + other.parts)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a in self.parts:
            for b in other.parts:
                c = a.intersect(b)
                if c is not None:
                    out.append(c)
        return IntervalSet(out)

    def complement(self) -> "IntervalSet":
        if not self.parts:
            return IntervalSet.full_line()
        out = []
        cursor, cursor_closed = -INF, False
        for p in self.parts:
            lo_c, hi_c = cursor_closed, not p.lo_closed
            if cursor < p.lo or (cursor == p.lo and lo_c and hi_c):
                out.append(Interval(cursor, p.lo, lo_c, hi_c))
            cursor, cursor_closed = p.hi, not p.hi_closed
        if cursor < INF:
            out.append(Interval(cursor, INF, cursor_closed, False))
        return IntervalSet(out)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self.intersection(other.complement())

    def is_separated(self, other: "IntervalSet") -> bool:
        """Exact evaluation of: cl(A) & B == {} and A & cl(B) == {}."""
        if self.closure().intersection(other).parts:
            return False
        if self.intersection(other.closure()).parts:
            return False
        return True

    def min_gap(self, other: "IntervalSet") -> float:
        """Infimum of |a - b| over the two sets; +inf when either is empty.

        Requires separated inputs: overlapping sets raise NotSeparated rather
        than silently reporting zero.
        """
        if self.is_empty or other.is_empty:
            return INF
        if not self.is_separated(other):
            raise NotSeparated(f"min_gap on non-separated sets {self} vs {other}")
        best = INF
        for a in self.parts:
            for b in other.parts:
                if b.lo >= a.hi:
                    gap = b.lo - a.hi
                elif a.lo >= b.hi:
                    gap = a.lo - b.hi
                else:  # pragma: no cover - separated parts cannot interleave
                    gap = 0.0
                best = min(best, gap)
        return best

    def distance_to(self, x: float) -> float:
        """inf_{y in set} |x - y| (0 on the closure; +inf for the empty set)."""
        if not self.parts:
            return INF
        best = INF
        for p in self.parts:
            if p.lo <= x <= p.hi:
                return 0.0
            best = min(best, abs(x - p.lo), abs(x - p.hi))
        return best

    def representative_points(self) -> list[float]:
        return [p.midpoint() for p in self.parts]

    def finite_endpoints(self) -> list[float]:
        out = []
        for p in self.parts:
            if not math.isinf(p.lo):
                out.append(p.lo)
            if not math.isinf(p.hi):
                out.append(p.hi)
        return out


def _normalize_parts(parts: Iterable[Interval]) -> tuple[Interval, ...]:
    items = sorted(parts, key=lambda p: (p.lo, not p.lo_closed, p.hi, p.hi_closed))
    if not items:
        return ()
    merged: list[Interval] = [items[0]]
    for nxt in items[1:]:
        cur = merged[-1]
        if _mergeable(cur, nxt):
            if nxt.hi > cur.hi:
                hi, hi_c = nxt.hi, nxt.hi_closed
            elif nxt.hi == cur.hi:
                hi, hi_c = cur.hi, cur.hi_closed or nxt.hi_closed
            else:
                hi, hi_c = cur.hi, cur.hi_closed
            lo_c = cur.lo_closed or (nxt.lo == cur.lo and nxt.lo_closed)
            merged[-1] = Interval(cur.lo, hi, lo_c, hi_c)
        else:
            merged.append(nxt)
    return tuple(merged)


def normalize(parts: Iterable[Interval]) -> IntervalSet:
    """Canonical maximal-interval form of a union of intervals."""
    return IntervalSet(tuple(parts))


def union(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return a.union(b)


def intersection(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return a.intersection(b)


def difference(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return a.difference(b)


def closure(a: IntervalSet) -> IntervalSet:
    return a.closure()


def contains(a: IntervalSet, x: float) -> bool:
    return a.contains(x)


def is_separated(a: IntervalSet, b: IntervalSet) -> bool:
    return a.is_separated(b)


def min_gap(a: IntervalSet, b: IntervalSet) -> float:
    return a.min_gap(b)


# -- textual serialization: "[a,b)" grammar with -inf/inf tokens ---------------------

_INTERVAL_RE = re.compile(r"\s*([\[(])\s*([^,\s]+)\s*,\s*([^\])\s]+)\s*([\])])\s*")


def _parse_float(tok: str) -> float:
    if tok == "inf":
        return INF
    if tok == "-inf":
        return -INF
    return float(tok)


def parse_interval(text: str) -> Interval:
    m = _INTERVAL_RE.fullmatch(text)
    if not m:
        raise ConfigError(f"cannot parse interval: {text!r}")
    lb, lo, hi, rb = m.groups()
    return Interval(_parse_float(lo), _parse_float(hi), lb == "[", rb == "]")


def parse_interval_set(text: str) -> IntervalSet:
    text = text.strip()
    if text in ("{}", ""):
        return IntervalSet.empty()
    return IntervalSet([parse_interval(tok) for tok in text.split(" u ")])


def format_interval_set(s: IntervalSet) -> str:
    return str(s)
