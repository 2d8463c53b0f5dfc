import math

import pytest
from hypothesis import given, settings, strategies as st

from recourselab.errors import ConfigError, NotSeparated
from recourselab.intervals import (
    Interval,
    IntervalSet,
    format_interval_set,
    normalize,
    parse_interval_set,
)

INF = math.inf


def iv(lo, hi, lc=True, hc=True):
    return Interval(lo, hi, lc, hc)


def iset(*parts):
    return IntervalSet(parts)


class TestNormalize:
    def test_touching_closed_endpoints_merge(self):
        assert normalize([iv(0, 1), iv(1, 2)]) == iset(iv(0, 2))

    def test_open_endpoints_do_not_merge(self):
        s = normalize([iv(0, 1, False, False), iv(1, 2, False, False)])
        assert s.parts == (iv(0, 1, False, False), iv(1, 2, False, False))

    def test_containment(self):
        assert normalize([iv(0, 3), iv(1, 2)]) == iset(iv(0, 3))

    def test_half_open_touch_merges(self):
        assert normalize([iv(0, 1, True, False), iv(1, 2)]) == iset(iv(0, 2))

    def test_singleton_fills_hole(self):
        s = normalize([iv(0, 1, True, False), iv(1, 1), iv(1, 2, False, True)])
        assert s == iset(iv(0, 2))

    def test_idempotent(self):
        s = normalize([iv(0, 1, False, True), iv(2, 3), iv(-5, -4)])
        assert normalize(s.parts) == s

    def test_invalid_intervals_rejected(self):
        with pytest.raises(ConfigError):
            Interval(2, 1)
        with pytest.raises(ConfigError):
            Interval(1, 1, True, False)
        with pytest.raises(ConfigError):
            Interval(float("nan"), 1)

    def test_infinite_endpoints_forced_open(self):
        p = Interval(-INF, 0, True, True)
        assert not p.lo_closed and p.hi_closed

    def test_negative_zero_canonicalized(self):
        assert repr(Interval(-0.0, 1.0).lo) == "0.0"


class TestOps:
    def test_closure(self):
        assert iset(iv(0, 1, False, False)).closure() == iset(iv(0, 1))

    def test_closure_merges_touching_open_parts(self):
        s = iset(iv(0, 1, False, False), iv(1, 2, False, False))
        assert s.closure() == iset(iv(0, 2))

    def test_intersection(self):
        a, b = iset(iv(0, 2)), iset(iv(1, 3, False, False))
        assert a.intersection(b) == iset(iv(1, 2, False, True))

    def test_difference(self):
        a, b = iset(iv(0, 3)), iset(iv(1, 2, False, False))
        assert a.difference(b) == iset(iv(0, 1), iv(2, 3))

    def test_difference_closed_hole(self):
        a, b = iset(iv(0, 3)), iset(iv(1, 2))
        assert a.difference(b) == iset(iv(0, 1, True, False), iv(2, 3, False, True))

    def test_complement_roundtrip(self):
        s = iset(iv(-INF, 0, False, False), iv(1, 2), iv(5, INF, False, False))
        assert s.complement().complement() == s

    def test_contains(self):
        s = iset(iv(0, 1, False, True))
        assert not s.contains(0) and s.contains(0.5) and s.contains(1)

    def test_empty_and_full(self):
        assert IntervalSet.empty().is_empty
        assert IntervalSet.full_line().contains(1e300)
        assert IntervalSet.full_line().complement().is_empty


class TestSeparated:
    def test_half_open_touch_not_separated(self):
        assert not iset(iv(0, 1, True, False)).is_separated(iset(iv(1, 2)))

    def test_open_touch_separated(self):
        a = iset(iv(0, 1, False, False))
        b = iset(iv(1, 2, False, False))
        assert a.is_separated(b)

    def test_forced_band_overlap_case(self):
        # forced left/right bands of the plateau-ramp counterexample at delta=1
        a = iset(iv(-0.75, 0.125))
        b = iset(iv(-0.125, 0.75))
        assert not a.is_separated(b)

    def test_symmetry_and_disjointness(self):
        a, b = iset(iv(0, 1, True, False)), iset(iv(1, 2))
        assert a.is_separated(b) == b.is_separated(a)
        assert a.intersection(b).is_empty  # disjoint yet not separated


class TestMinGap:
    def test_positive_gap(self):
        assert iset(iv(0, 1)).min_gap(iset(iv(2, 3))) == 1

    def test_zero_gap_separated(self):
        a = iset(iv(0, 1, False, False))
        b = iset(iv(1, 2, False, False))
        assert a.min_gap(b) == 0

    def test_empty_gives_inf(self):
        assert iset(iv(0, 1)).min_gap(IntervalSet.empty()) == INF

    def test_not_separated_raises(self):
        with pytest.raises(NotSeparated):
            iset(iv(0, 2)).min_gap(iset(iv(1, 3)))


class TestSerialization:
    @pytest.mark.parametrize("text", [
        "[0.0,1.0)",
        "(-inf,0.5] u [1.5,2.25) u (3.0,inf)",
        "{}",
        "[0.1,0.1]",
    ])
    def test_roundtrip(self, text):
        assert format_interval_set(parse_interval_set(text)) == text

    def test_roundtrip_is_bit_exact(self):
        s = iset(iv(0.1, 0.30000000000000004, False, True))
        t = parse_interval_set(format_interval_set(s))
        assert t.parts[0].lo == s.parts[0].lo and t.parts[0].hi == s.parts[0].hi


finite = st.floats(min_value=-50, max_value=50, allow_nan=False)


@st.composite
def raw_intervals(draw):
    lo = draw(finite)
    hi = draw(finite)
    lo, hi = min(lo, hi), max(lo, hi)
    if lo == hi:
        return Interval(lo, hi, True, True)
    return Interval(lo, hi, draw(st.booleans()), draw(st.booleans()))


@settings(max_examples=200, derandomize=True)
@given(st.lists(raw_intervals(), max_size=6), st.lists(finite, min_size=1, max_size=20))
def test_pointwise_oracle(parts, probes):
    # membership of the canonical set must agree with the raw pre-normalized list
    s = normalize(parts)
    for x in probes:
        assert s.contains(x) == any(p.contains(x) for p in parts)


@settings(max_examples=200, derandomize=True)
@given(st.lists(raw_intervals(), max_size=6), st.lists(raw_intervals(), max_size=6))
def test_setops_pointwise(parts_a, parts_b):
    a, b = normalize(parts_a), normalize(parts_b)
    probes = sorted({p.lo for p in a.parts} | {p.hi for p in a.parts}
                    | {p.lo for p in b.parts} | {p.hi for p in b.parts} | {0.0, 0.3})
    probes += [x + 0.25 for x in probes if math.isfinite(x)]
    for result in (a.union(b), a.intersection(b), a.difference(b), a.complement()):
        assert normalize(result.parts) == result  # results are always canonical
    for x in probes:
        if not math.isfinite(x):
            continue
        assert a.union(b).contains(x) == (a.contains(x) or b.contains(x))
        assert a.intersection(b).contains(x) == (a.contains(x) and b.contains(x))
        assert a.difference(b).contains(x) == (a.contains(x) and not b.contains(x))
        assert a.complement().contains(x) == (not a.contains(x))


def test_pointwise_oracle_dense():
    # 10k random rationals against a fixed awkward raw list
    import random

    rng = random.Random(20240817)
    parts = [
        iv(-3, -1, False, True), iv(-1, 0), iv(0.25, 0.25),
        iv(0.25, 2, False, False), iv(2, 4, True, False), iv(-2, 3, False, False),
    ]
    s = normalize(parts)
    for _ in range(10_000):
        x = rng.randrange(-4000, 4000) / rng.randrange(1, 997)
        assert s.contains(x) == any(p.contains(x) for p in parts)
