"""One-dimensional characterization engine.

Computes the sets L / R / O of points where recourse is achievable by moving
left, moving right, or staying put; decides whether a continuous
recourse-sensitive attribution exists (separated-decomposition criterion);
and, when it does, constructs one from set distances:

    phi(x) = d(x, R \\ V) / (1 + d(x, R \\ V)) - d(x, R \\ U) / (1 + d(x, R \\ U))

for disjoint open neighborhoods U of the left set and V of the right set.

All operations are pure.  The partition search is sequential and
lexicographic-first, so certificates are bit-identical across runs (a
parallel search would have to reduce by minimum bitmask to match).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import intervals as iv
from .core import RecourseProblem
from .errors import (
    ConfigError,
    KTooLarge,
    NeedsManualDecomposition,
    NonEmptyO,
    UnsupportedModel,
)
from .intervals import Interval, IntervalSet

PARTITION_CAP = 20


@dataclass(frozen=True)
class LRO:
    """Left / right / stay-put recourse sets with provenance of how they were computed."""

    L: IntervalSet
    R: IntervalSet
    O: IntervalSet
    mode: str  # "exact" | "sampled"
    grid_step: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ConfigError(f"unknown LRO mode {self.mode!r}")
        if self.mode == "sampled" and not (self.grid_step and self.grid_step > 0):
            raise ConfigError("sampled mode records a positive grid step")


@dataclass(frozen=True)
class IndexSets:
    """Interval indices of the forced-left, forced-right and free families."""

    I_tilde: tuple
    J_tilde: tuple
    K_tilde: tuple


@dataclass(frozen=True)
class Witness:
    """Forced-overlap impossibility witness: two pinned intervals that meet."""

    left_interval: Interval
    right_interval: Interval
    shared_point: float
    forced_point_left: float
    forced_point_right: float


@dataclass
class Certificate:
    verdict: str  # "possible" | "impossible"
    L: IntervalSet
    R: IntervalSet
    O: IntervalSet
    mode: str
    grid_step: Optional[float] = None
    L_tilde: Optional[IntervalSet] = None
    R_tilde: Optional[IntervalSet] = None
    O_tilde: Optional[IntervalSet] = None
    partition_bitmask: Optional[int] = None
    k_count: int = 0
    witness: Optional[Witness] = None
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "mode": self.mode,
            "grid_step": self.grid_step,
            "k_count": self.k_count,
            "partition_bitmask": self.partition_bitmask,
            "sets": {
                "L": str(self.L), "R": str(self.R), "O": str(self.O),
                "L_tilde": None if self.L_tilde is None else str(self.L_tilde),
                "R_tilde": None if self.R_tilde is None else str(self.R_tilde),
                "O_tilde": None if self.O_tilde is None else str(self.O_tilde),
            },
            "witness": None,
        }
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "left_interval": str(w.left_interval),
                "right_interval": str(w.right_interval),
                "shared_point": w.shared_point,
                "forced_point_left": w.forced_point_left,
                "forced_point_right": w.forced_point_right,
            }
        return out


# ---------------------------------------------------------------------------
# L / R / O computation
# ---------------------------------------------------------------------------

def compute_lro(problem: RecourseProblem, mode: str = "exact",
                grid: Optional[tuple] = None) -> LRO:
    """Compute L, R, O for a one-dimensional problem.

    Exact mode covers registered model/utility pairs with hand-derived closed
    forms; Sampled mode scans x over ``grid = (lo, hi, step)`` and, for each
    x, scans y over [x - delta, x) resp. (x, x + delta] with inner step
    step/4, merging consecutive marked grid points into closed intervals.
    """
    if problem.model.dim != 1:
        raise ConfigError("compute_lro needs a one-dimensional problem")
    if mode == "exact":
        return _exact_lro(problem)
    if mode == "sampled":
        if grid is None:
            raise ConfigError("sampled mode needs grid=(lo, hi, step)")
        return _sampled_lro(problem, *grid)
    raise ConfigError(f"unknown mode {mode!r}")


def _full() -> IntervalSet:
    return IntervalSet.full_line()


def _exact_lro(problem: RecourseProblem) -> LRO:
    model, u, tau, delta = problem.model, problem.utility, problem.tau, problem.delta
    if problem.constraint.kind == "directions":
        raise UnsupportedModel("exact mode supports full/sparse constraints only")
    family = model.meta.get("family")
    empty = IntervalSet.empty()

    if family == "quad" and u.kind == "difference":
        if tau < 0:
            return LRO(_full(), _full(), _full(), "exact")
        if tau == 0:
            half = IntervalSet([Interval(-math.inf, delta / 2.0, False, True)])
            return LRO(half, _mirror(half), _full(), "exact")
        edge = (delta * delta - tau) / (2.0 * delta)
        L = IntervalSet([Interval(-math.inf, edge, False, True)])
        return LRO(L, _mirror(L), empty, "exact")

    if family == "gauss" and u.kind == "ratio" and u.ratio_orientation == "x_over_y":
        # u = exp(y^2 - x^2) >= tau  <=>  y^2 - x^2 >= log(tau)
        if tau <= 0:
            return LRO(_full(), _full(), _full(), "exact")
        t = math.log(tau)
        if t < 0:
            return LRO(_full(), _full(), _full(), "exact")
        if t == 0:
            half = IntervalSet([Interval(-math.inf, delta / 2.0, False, True)])
            return LRO(half, _mirror(half), _full(), "exact")
        edge = (delta * delta - t) / (2.0 * delta)
        L = IntervalSet([Interval(-math.inf, edge, False, True)])
        return LRO(L, _mirror(L), empty, "exact")

    if family == "thm1" and u.kind == "difference":
        z1, z2, dm = model.meta["z1"], model.meta["z2"], model.meta["delta"]
        if dm != delta:
            raise UnsupportedModel("exact thm1 closed form requires problem delta == model delta")
        if z2 <= z1:
            raise UnsupportedModel("exact thm1 closed form requires z2 > z1")
        if tau < 0:
            return LRO(_full(), _full(), _full(), "exact")
        if tau == 0:
            raise UnsupportedModel("exact thm1 closed form needs tau != 0 (use sampled)")
        s = tau / (z2 - z1)
        if s > 1:
            return LRO(empty, empty, empty, "exact")
        L = IntervalSet([Interval(-(7.0 - s) * delta / 8.0, (2.0 - s) * delta / 8.0)])
        return LRO(L, _mirror(L), empty, "exact")

    if family == "vee" and u.kind == "difference":
        a = model.meta["a"]
        if tau < 0:
            return LRO(_full(), _full(), _full(), "exact")
        if tau == 0:
            edge = max(a, delta / 2.0)
            L = IntervalSet([Interval(-math.inf, edge, False, True)])
            return LRO(L, _mirror(L), _full(), "exact")
        parts = []
        if delta >= tau:
            parts.append(Interval(-math.inf, -a, False, True))
        if delta - a - tau > -a:
            parts.append(Interval(-a, min(a, delta - a - tau), False, True))
        if (delta - tau) / 2.0 > a:
            parts.append(Interval(a, (delta - tau) / 2.0, False, True))
        L = IntervalSet(parts)
        return LRO(L, _mirror(L), empty, "exact")

    raise UnsupportedModel(
        f"no exact closed form for model {model.id!r} with utility {u.name!r}")


def _mirror(s: IntervalSet) -> IntervalSet:
    return IntervalSet([Interval(-p.hi, -p.lo, p.hi_closed, p.lo_closed) for p in s.parts])


def _sampled_lro(problem: RecourseProblem, lo: float, hi: float, step: float) -> LRO:
    model, u, tau, delta = problem.model, problem.utility, problem.tau, problem.delta
    if step <= 0 or hi <= lo:
        raise ConfigError("sampled grid needs hi > lo and step > 0")
    n = int(round((hi - lo) / step))
    xs = lo + step * np.arange(n + 1)

    allow_left = allow_right = True
    if problem.constraint.kind == "directions":
        dirs = [z[0] for z in problem.constraint.directions]
        allow_left = any(d < 0 for d in dirs)
        allow_right = any(d > 0 for d in dirs)

    inner = step / 4.0
    m = int(math.ceil(delta / inner))
    offs = -delta + inner * np.arange(m)          # y = x + off, off in [-delta, 0)
    offs = offs[offs < 0.0]

    mark_L = np.zeros(xs.size, dtype=bool)
    mark_R = np.zeros(xs.size, dtype=bool)
    chunk = max(1, int(2_000_000 // max(1, offs.size)))
    for start in range(0, xs.size, chunk):
        xc = xs[start:start + chunk]
        fx = model.values(xc[:, None])
        for sign, mark, allowed in ((1.0, mark_L, allow_left), (-1.0, mark_R, allow_right)):
            if not allowed or offs.size == 0:
                continue
            Y = xc[:, None] + sign * offs[None, :]
            ok = model.domain.contains_batch(Y.reshape(-1, 1)).reshape(Y.shape)
            fY = np.full(Y.shape, np.nan)
            flat_ok = ok.reshape(-1)
            if flat_ok.any():
                fY.reshape(-1)[flat_ok] = model.values(Y.reshape(-1, 1)[flat_ok])
            with np.errstate(invalid="ignore", divide="ignore"):
                vals = u.value_batch(fx[:, None], fY)
            hit = ok & np.isfinite(vals) & (vals >= tau)
            mark[start:start + chunk] |= hit.any(axis=1)

    ok_x = model.domain.contains_batch(xs[:, None])
    fx_all = np.full(xs.size, np.nan)
    fx_all[ok_x] = model.values(xs[ok_x][:, None])
    with np.errstate(invalid="ignore", divide="ignore"):
        u_self = u.value_batch(fx_all, fx_all)
    mark_O = ok_x & np.isfinite(u_self) & (u_self >= tau)
    mark_L &= ok_x
    mark_R &= ok_x

    return LRO(_runs_to_set(xs, mark_L), _runs_to_set(xs, mark_R),
               _runs_to_set(xs, mark_O), "sampled", grid_step=step)


def _runs_to_set(xs: np.ndarray, mark: np.ndarray) -> IntervalSet:
    parts = []
    i = 0
    n = mark.size
    while i < n:
        if mark[i]:
            j = i
            while j + 1 < n and mark[j + 1]:
                j += 1
            parts.append(Interval(float(xs[i]), float(xs[j])))
            i = j + 1
        else:
            i += 1
    return IntervalSet(parts)


# ---------------------------------------------------------------------------
# Decision procedure
# ---------------------------------------------------------------------------

def decompose_maximal(lro: LRO):
    """Canonical maximal decompositions of L, R and O."""
    return list(lro.L.parts), list(lro.R.parts), list(lro.O.parts)


def index_sets(lro: LRO) -> IndexSets:
    """The forced/free index sets of the partition criterion (O must be empty)."""
    if not lro.O.is_empty:
        raise NonEmptyO("index sets are defined under u_f(x,x) < tau for all x (O empty)")
    return _index_sets(list(lro.L.parts), list(lro.R.parts))


def _index_sets(Ls, Rs) -> IndexSets:
    I_tilde = tuple(i for i, Li in enumerate(Ls)
                    if not any(Rj.contains_interval(Li) for Rj in Rs))
    J_tilde = tuple(j for j, Rj in enumerate(Rs)
                    if not any(Li.contains_interval(Rj) for Li in Ls))
    K_tilde = tuple(i for i, Li in enumerate(Ls) if any(Li == Rj for Rj in Rs))
    return IndexSets(I_tilde, J_tilde, K_tilde)


def decide(lro: LRO) -> Certificate:
    """Decide whether a continuous recourse-sensitive attribution exists.

    With O empty this is the partition criterion over the equal-interval
    family (lexicographic bitmask search, first success wins).  With O
    nonempty only restricted configurations are handled automatically;
    anything else raises NeedsManualDecomposition instead of guessing.
    """
    Ls, Rs, Os = decompose_maximal(lro)
    base = dict(L=lro.L, R=lro.R, O=lro.O, mode=lro.mode, grid_step=lro.grid_step)

    if lro.O.is_empty:
        idx = _index_sets(Ls, Rs)
        if len(idx.K_tilde) > PARTITION_CAP:
            raise KTooLarge(f"|K| = {len(idx.K_tilde)} exceeds cap {PARTITION_CAP}")
        base_L = [Ls[i] for i in idx.I_tilde]
        base_R = [Rs[j] for j in idx.J_tilde]
        k_parts = [Ls[i] for i in idx.K_tilde]
        for mask in range(1 << len(idx.K_tilde)):
            Lt = IntervalSet(base_L + [p for b, p in enumerate(k_parts) if not (mask >> b) & 1])
            Rt = IntervalSet(base_R + [p for b, p in enumerate(k_parts) if (mask >> b) & 1])
            if Lt.is_separated(Rt):
                return Certificate(verdict="possible", L_tilde=Lt, R_tilde=Rt,
                                   O_tilde=IntervalSet.empty(), partition_bitmask=mask,
                                   k_count=len(idx.K_tilde), **base)
        witness = _forced_witness(Ls, Rs, lro)
        if witness is None:  # pragma: no cover - cannot happen for O empty
            raise NeedsManualDecomposition("no partition works yet no forced conflict found")
        return Certificate(verdict="impossible", witness=witness,
                           k_count=len(idx.K_tilde), **base)

    return _decide_general_o(Ls, Rs, Os, lro, base)


def _forced_witness(Ls, Rs, lro: LRO) -> Optional[Witness]:
    """A pinned L-interval and R-interval that cannot be separated."""
    RO = lro.R.union(lro.O)
    LO = lro.L.union(lro.O)
    for Li in Ls:
        left_free = IntervalSet([Li]).difference(RO)
        if left_free.is_empty or not IntervalSet([Li]).intersection(lro.O).is_empty:
            continue
        for Rj in Rs:
            right_free = IntervalSet([Rj]).difference(LO)
            if right_free.is_empty or not IntervalSet([Rj]).intersection(lro.O).is_empty:
                continue
            if not IntervalSet([Li]).is_separated(IntervalSet([Rj])):
                overlap = IntervalSet([Li]).closure().intersection(IntervalSet([Rj]).closure())
                shared = overlap.parts[0].midpoint()
                return Witness(Li, Rj, shared,
                               left_free.parts[0].midpoint(),
                               right_free.parts[0].midpoint())
    return None


def _decide_general_o(Ls, Rs, Os, lro: LRO, base: dict) -> Certificate:
    L, R, O = lro.L, lro.R, lro.O
    if L.union(R).difference(O).is_empty:
        # staying put suffices everywhere recourse exists: phi = 0 works
        return Certificate(verdict="possible", L_tilde=IntervalSet.empty(),
                           R_tilde=IntervalSet.empty(), O_tilde=O,
                           partition_bitmask=0, k_count=0,
                           meta={"path": "stay_put"}, **base)
    o_tilde_parts, covered = [], []
    for Om in Os:
        om = IntervalSet([Om])
        if om.is_separated(L) and om.is_separated(R):
            o_tilde_parts.append(Om)
        elif om.difference(L.union(R)).is_empty:
            covered.append(Om)
        else:
            raise NeedsManualDecomposition(
                f"O component {Om} neither separated from L/R nor covered by them")
    Ot = IntervalSet(o_tilde_parts)

    witness = _forced_witness(Ls, Rs, lro)
    if witness is not None:
        return Certificate(verdict="impossible", witness=witness, k_count=0, **base)

    Lt_parts = [Li for Li in Ls if not IntervalSet([Li]).difference(R.union(Ot)).is_empty]
    Rt_parts = [Rj for Rj in Rs if not IntervalSet([Rj]).difference(L.union(Ot)).is_empty]
    Lt, Rt = IntervalSet(Lt_parts), IntervalSet(Rt_parts)
    if not Lt.is_separated(Rt):
        raise NeedsManualDecomposition("restricted covering produces a non-forced conflict")

    target = L.union(R).union(O)
    used_L = set(map(id, Lt_parts))
    used_R = set(map(id, Rt_parts))
    for _ in range(2):  # two sweeps suffice for finite families
        uncovered = target.difference(Lt.union(Rt).union(Ot))
        if uncovered.is_empty:
            break
        for Li in Ls:
            if id(Li) in used_L:
                continue
            cand = IntervalSet(list(Lt.parts) + [Li])
            if not IntervalSet([Li]).intersection(uncovered).is_empty and cand.is_separated(Rt) \
                    and cand.intersection(Ot.closure()).is_empty:
                Lt = cand
                used_L.add(id(Li))
        uncovered = target.difference(Lt.union(Rt).union(Ot))
        for Rj in Rs:
            if id(Rj) in used_R:
                continue
            cand = IntervalSet(list(Rt.parts) + [Rj])
            if not IntervalSet([Rj]).intersection(uncovered).is_empty and Lt.is_separated(cand) \
                    and cand.intersection(Ot.closure()).is_empty:
                Rt = cand
                used_R.add(id(Rj))

    uncovered = target.difference(Lt.union(Rt).union(Ot))
    ok = (uncovered.is_empty and Lt.is_separated(Rt)
          and Ot.closure().intersection(Lt).is_empty
          and Ot.closure().intersection(Rt).is_empty)
    if not ok:
        raise NeedsManualDecomposition("restricted greedy covering failed to verify")
    return Certificate(verdict="possible", L_tilde=Lt, R_tilde=Rt, O_tilde=Ot,
                       partition_bitmask=0, k_count=0,
                       meta={"path": "general_o"}, **base)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

@dataclass
class ConstructedAttribution:
    """Distance-quotient attribution built from a Possible certificate."""

    U_nbhd: IntervalSet
    V_nbhd: IntervalSet
    O_tilde: IntervalSet

    def __post_init__(self):
        self._u_comp = self.U_nbhd.complement()
        self._v_comp = self.V_nbhd.complement()

    def phi(self, x: float) -> float:
        dv = self._v_comp.distance_to(float(x))
        du = self._u_comp.distance_to(float(x))
        return dv / (1.0 + dv) - du / (1.0 + du)

    def phi_batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        dv = _set_distance_batch(self._v_comp, xs)
        du = _set_distance_batch(self._u_comp, xs)
        return dv / (1.0 + dv) - du / (1.0 + du)

    def evaluator(self, x) -> np.ndarray:
        """verify-compatible evaluator: (1,) point -> (1,) attribution."""
        p = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([self.phi(p[0])])


def _set_distance_batch(s: IntervalSet, xs: np.ndarray) -> np.ndarray:
    if not s.parts:
        return np.full(xs.shape, math.inf)
    los = np.array([p.lo for p in s.parts])
    his = np.array([p.hi for p in s.parts])
    with np.errstate(invalid="ignore"):
        d = np.maximum(los[None, :] - xs[..., None], xs[..., None] - his[None, :])
    d = np.maximum(d, 0.0)
    d = np.where(np.isnan(d), 0.0, d)  # inf - inf at doubly-infinite parts
    return d.min(axis=-1)


def construct_attribution(cert: Certificate) -> ConstructedAttribution:
    """Open neighborhoods U ⊇ L-tilde, V ⊇ R-tilde and the phi evaluator.

    Each interval is expanded outward by g/3 (g = smallest positive gap
    between any two assigned intervals) at finite endpoints whose distance to
    every other assigned piece is positive; zero-gap open touchpoints are
    left unexpanded, which keeps U and V disjoint and phi continuous.
    """
    if cert.verdict != "possible":
        raise ConfigError("construct_attribution needs a Possible certificate")
    labeled = ([("L", p) for p in cert.L_tilde.parts]
               + [("R", p) for p in cert.R_tilde.parts]
               + [("O", p) for p in cert.O_tilde.parts])
    pieces = [p for _, p in labeled]

    gaps = []
    for a in range(len(pieces)):
        for b in range(a + 1, len(pieces)):
            g = _closure_gap(pieces[a], pieces[b])
            if g > 0:
                gaps.append(g)
    exp = min(min(gaps) / 3.0, 1.0) if gaps else 1.0

    def expand(parts):
        out = []
        for p in parts:
            others = [q for q in pieces if q is not p]
            lo, lo_c = p.lo, p.lo_closed
            hi, hi_c = p.hi, p.hi_closed
            if not math.isinf(lo):
                if all(_point_gap(lo, q) > 0 for q in others):
                    lo, lo_c = lo - exp, False
                else:
                    assert not lo_c, "closed endpoint touching another assigned set"
            if not math.isinf(hi):
                if all(_point_gap(hi, q) > 0 for q in others):
                    hi, hi_c = hi + exp, False
                else:
                    assert not hi_c, "closed endpoint touching another assigned set"
            out.append(Interval(lo, hi, lo_c, hi_c))
        return IntervalSet(out)

    U = expand(cert.L_tilde.parts)
    V = expand(cert.R_tilde.parts)
    assert U.intersection(V).is_empty
    assert U.intersection(cert.O_tilde.closure()).is_empty
    assert V.intersection(cert.O_tilde.closure()).is_empty
    return ConstructedAttribution(U, V, cert.O_tilde)


def _closure_gap(a: Interval, b: Interval) -> float:
    if b.lo >= a.hi:
        return b.lo - a.hi
    if a.lo >= b.hi:
        return a.lo - b.hi
    return 0.0


def _point_gap(x: float, q: Interval) -> float:
    if q.lo <= x <= q.hi:
        return 0.0
    return min(abs(x - q.lo), abs(x - q.hi))
