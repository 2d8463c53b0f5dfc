"""Numerical verification of recourse sensitivity and robustness.

``check_recourse_at`` tests the pointing condition at a single input: a zero
attribution is acceptable only where staying put already reaches the target
set, and a nonzero attribution must point at some attainable y with utility
above the threshold.  ``continuity_probe`` hunts for jumps and separates
discontinuity candidates from mere steepness by halving the probe step.
``run_counterexample_battery`` replays the named analytic counterexamples as
machine-checked claims.

Grid scans are order-independent: verdicts are aggregated after sorting the
probe points, so a parallel driver would produce the same reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import onedim
from .core import ConstraintSpec, RecourseProblem, as_point, in_target
from .errors import ConfigError, UnsupportedConstraint
from .intervals import IntervalSet

ZERO_TOL = 1e-12
GEOM_POINTS = 64
UNIFORM_POINTS = 256
BALL_SAMPLES = 4096


@dataclass
class RecourseVerdict:
    status: str  # "satisfied" | "violated" | "vacuous"
    at: np.ndarray
    witness: Optional[np.ndarray] = None
    step: Optional[float] = None
    searched: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "at": [float(v) for v in np.atleast_1d(self.at)],
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "step": self.step,
            "searched": self.searched,
        }


def _ray_steps(delta: float) -> np.ndarray:
    geom = delta * 2.0 ** (-np.linspace(20, 0, GEOM_POINTS))
    unif = delta * np.arange(1, UNIFORM_POINTS + 1) / UNIFORM_POINTS
    return np.unique(np.concatenate([geom, unif]))


def _halton_ball(d: int, n: int, radius: float) -> np.ndarray:
    """Deterministic low-discrepancy samples of the radius ball (via rejection)."""
    from scipy.stats import qmc

    sampler = qmc.Halton(d, scramble=False)
    out = []
    while sum(len(b) for b in out) < n:
        cube = sampler.random(4 * n) * 2.0 - 1.0
        keep = cube[np.linalg.norm(cube, axis=1) <= 1.0]
        out.append(keep)
    return np.concatenate(out)[:n] * radius


def _target_nonempty(problem: RecourseProblem, x: np.ndarray, resolution: int):
    """Sample A(x) for a target point; exact rays in 1D/axis cases."""
    model, delta = problem.model, problem.delta
    d = model.dim
    cands = [x.copy()]
    kind = problem.constraint.kind
    if d == 1:
        ts = np.linspace(-delta, delta, resolution)
        ys = x[0] + ts
        if kind == "directions":
            dirs = [z[0] for z in problem.constraint.directions]
            keep = np.zeros_like(ys, dtype=bool)
            keep |= ts == 0.0
            if any(v > 0 for v in dirs):
                keep |= ts > 0
            if any(v < 0 for v in dirs):
                keep |= ts < 0
            ys = ys[keep]
        cands.append(ys[:, None])
        note = {"kind": "1d-ray", "points": int(resolution)}
    elif kind == "sparse" and problem.constraint.k == 1:
        ts = np.linspace(-delta, delta, max(16, resolution // d))
        rays = []
        for i in range(d):
            Y = np.tile(x, (ts.size, 1))
            Y[:, i] += ts
            rays.append(Y)
        cands.append(np.concatenate(rays))
        note = {"kind": "axis-rays", "points": int(ts.size) * d}
    elif kind == "directions":
        ts = np.linspace(0.0, delta, max(16, resolution // max(1, len(problem.constraint.directions))))
        rays = [x[None, :] + ts[:, None] * np.asarray(z)[None, :]
                for z in problem.constraint.directions]
        cands.append(np.concatenate(rays))
        note = {"kind": "direction-rays", "points": sum(r.shape[0] for r in rays)}
    elif kind == "full":
        cands.append(x[None, :] + _halton_ball(d, BALL_SAMPLES, delta))
        note = {"kind": "halton-ball", "points": BALL_SAMPLES,
                "caveat": "emptiness certified only at this resolution"}
    else:
        raise UnsupportedConstraint(
            "emptiness sampling for Sparse(k>=2) in d>1 is not implemented")

    Y = np.vstack([np.atleast_2d(c) for c in cands])
    ok = model.domain.contains_batch(Y)
    dist_ok = np.linalg.norm(Y - x[None, :], axis=1) <= delta
    adm = np.array([problem.constraint.admits(x, y) for y in Y])
    keep = ok & dist_ok & adm
    if not keep.any():
        return False, note
    fx = model.eval(x)
    fy = model.values(Y[keep])
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = problem.utility.value_batch(fx, fy)
    return bool(np.any(np.isfinite(vals) & (vals >= problem.tau))), note


def check_recourse_at(problem: RecourseProblem, evaluator: Callable, x,
                      resolution: int = 2048) -> RecourseVerdict:
    """Single-point recourse-sensitivity verdict for an attribution evaluator."""
    p = as_point(x, problem.model.dim)
    phi = np.atleast_1d(np.asarray(evaluator(p), dtype=float))
    if not np.all(np.isfinite(phi)):
        raise ConfigError(f"evaluator returned non-finite attribution at {p}")
    searched = {"zero_tol": ZERO_TOL, "resolution": resolution}

    if float(np.linalg.norm(phi)) <= ZERO_TOL:
        searched["branch"] = "zero-attribution"
        if in_target(problem, p, p):
            return RecourseVerdict("satisfied", p, witness=p.copy(), step=0.0,
                                   searched=searched)
        nonempty, note = _target_nonempty(problem, p, resolution)
        searched["emptiness"] = note
        return RecourseVerdict("violated" if nonempty else "vacuous", p,
                               searched=searched)

    direction = phi / float(np.linalg.norm(phi))
    searched["branch"] = "ray-search"
    searched["direction"] = [float(v) for v in direction]
    if problem.constraint.admits_direction(phi):
        # admissibility along a fixed ray is uniform in t, so the whole ray
        # evaluates in one batch; the winning step is re-checked pointwise
        ts = _ray_steps(problem.delta)
        Y = p[None, :] + ts[:, None] * direction[None, :]
        ok = problem.model.domain.contains_batch(Y)
        ok &= np.linalg.norm(Y - p[None, :], axis=1) <= problem.delta
        if ok.any():
            fy = np.full(ts.size, np.nan)
            fy[ok] = problem.model.values(Y[ok])
            fx = problem.model.eval(p)
            with np.errstate(invalid="ignore", divide="ignore"):
                vals = problem.utility.value_batch(fx, fy)
            hits = np.flatnonzero(ok & np.isfinite(vals) & (vals >= problem.tau))
            for idx in hits:
                y = Y[idx]
                if in_target(problem, p, y):  # authoritative witness re-check
                    return RecourseVerdict("satisfied", p, witness=y,
                                           step=float(ts[idx]), searched=searched)
    else:
        searched["branch"] = "inadmissible-direction"
    nonempty, note = _target_nonempty(problem, p, resolution)
    searched["emptiness"] = note
    return RecourseVerdict("violated" if nonempty else "vacuous", p, searched=searched)


@dataclass
class ScanReport:
    total: int
    satisfied: int
    violated: int
    vacuous: int
    non_satisfied: list

    def to_json_dict(self) -> dict:
        return {
            "total": self.total, "satisfied": self.satisfied,
            "violated": self.violated, "vacuous": self.vacuous,
            "non_satisfied": [v.to_json_dict() for v in self.non_satisfied],
        }


def scan_recourse(problem: RecourseProblem, evaluator: Callable,
                  points: Iterable, resolution: int = 2048) -> ScanReport:
    """Batch wrapper over check_recourse_at; returns the non-Satisfied verdicts."""
    pts = [as_point(p, problem.model.dim) for p in points]
    pts.sort(key=lambda q: tuple(q))
    counts = {"satisfied": 0, "violated": 0, "vacuous": 0}
    bad = []
    for p in pts:
        v = check_recourse_at(problem, evaluator, p, resolution)
        counts[v.status] += 1
        if v.status != "satisfied":
            bad.append(v)
    return ScanReport(total=len(pts), satisfied=counts["satisfied"],
                      violated=counts["violated"], vacuous=counts["vacuous"],
                      non_satisfied=bad)


def scan_recourse_sets(L: IntervalSet, R: IntervalSet, O: IntervalSet,
                       phi: Callable, xs: np.ndarray) -> list:
    """Set-level recourse check for hand-built L/R/O instances.

    phi(x) < 0 requires x in L, phi(x) > 0 requires x in R, phi(x) = 0
    requires x in O; points outside L u R u O accept anything.
    """
    bad = []
    vals = np.asarray([float(np.atleast_1d(phi(np.array([x])))[0]) for x in xs])
    for x, v in zip(xs, vals):
        x = float(x)
        relevant = L.contains(x) or R.contains(x) or O.contains(x)
        if not relevant:
            continue
        if v < -ZERO_TOL:
            ok = L.contains(x)
        elif v > ZERO_TOL:
            ok = R.contains(x)
        else:
            ok = O.contains(x)
        if not ok:
            bad.append((x, v))
    return bad


# ---------------------------------------------------------------------------
# Continuity probe
# ---------------------------------------------------------------------------

@dataclass
class Jump:
    x: np.ndarray
    x_prime: np.ndarray
    magnitude: float
    separation: float
    location: np.ndarray
    refined_magnitudes: tuple
    discontinuity_candidate: bool

    def to_json_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "x_prime": [float(v) for v in self.x_prime],
            "magnitude": self.magnitude,
            "separation": self.separation,
            "location": [float(v) for v in self.location],
            "refined_magnitudes": list(self.refined_magnitudes),
            "discontinuity_candidate": self.discontinuity_candidate,
        }


@dataclass
class JumpReport:
    pair_step: float
    jump_threshold: float
    jumps: list

    @property
    def candidates(self) -> list:
        return [j for j in self.jumps if j.discontinuity_candidate]

    def to_json_dict(self) -> dict:
        return {"pair_step": self.pair_step, "jump_threshold": self.jump_threshold,
                "jumps": [j.to_json_dict() for j in self.jumps]}


def continuity_probe(evaluator: Callable, points: Iterable, pair_step: float,
                     jump_threshold: float) -> JumpReport:
    """Flag attribution jumps between nearby point pairs.

    A flagged jump is bisected twice toward its steepest half; if the
    magnitude changes by less than 25% it is a discontinuity candidate
    rather than mere steepness.
    """
    if pair_step <= 0:
        raise ValueError("pair_step must be positive")
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    jumps = []
    for g in pts:
        d = g.size
        for i in range(d):
            a = g.copy()
            b = g.copy()
            b[i] += pair_step
            fa, fb = np.atleast_1d(evaluator(a)), np.atleast_1d(evaluator(b))
            j0 = float(np.linalg.norm(fa - fb))
            if j0 <= jump_threshold:
                continue
            lo, hi, mags = a, b, [j0]
            for _ in range(2):
                mid = 0.5 * (lo + hi)
                fl, fm, fh = (np.atleast_1d(evaluator(q)) for q in (lo, mid, hi))
                j_left = float(np.linalg.norm(fl - fm))
                j_right = float(np.linalg.norm(fm - fh))
                if j_left >= j_right:
                    hi, mags = mid, mags + [j_left]
                else:
                    lo, mags = mid, mags + [j_right]
            stable = mags[-1] >= 0.75 * mags[0]
            jumps.append(Jump(x=a, x_prime=b, magnitude=j0,
                              separation=float(np.linalg.norm(b - a)),
                              location=0.5 * (lo + hi),
                              refined_magnitudes=tuple(mags),
                              discontinuity_candidate=stable))
    return JumpReport(pair_step=pair_step, jump_threshold=jump_threshold, jumps=jumps)


# ---------------------------------------------------------------------------
# Zero-detection probe for never-inward-pointing fields
# ---------------------------------------------------------------------------

@dataclass
class ZeroProbeReport:
    boundary_hypothesis_ok: bool
    boundary_violations: int
    min_norm: float
    argmin: np.ndarray

    def to_json_dict(self) -> dict:
        return {"boundary_hypothesis_ok": self.boundary_hypothesis_ok,
                "boundary_violations": self.boundary_violations,
                "min_norm": self.min_norm,
                "argmin": [float(v) for v in self.argmin]}


def zero_detection_probe(evaluator: Callable, radius: float = 1.0,
                         boundary_points: int = 256, grid_n: int = 81,
                         inward_tol: float = 1e-9) -> ZeroProbeReport:
    """Check the boundary hypothesis "phi never points at the center" on a
    circle of the given radius, then locate the interior point of smallest
    attribution norm (a continuous field meeting the hypothesis must vanish
    somewhere inside)."""
    violations = 0
    thetas = 2 * math.pi * np.arange(boundary_points) / boundary_points
    for th in thetas:
        x = radius * np.array([math.cos(th), math.sin(th)])
        v = np.atleast_1d(evaluator(x))
        nv = float(np.linalg.norm(v))
        if nv <= ZERO_TOL:
            continue
        cos_inward = float(v @ (-x)) / (nv * radius)
        if cos_inward >= 1.0 - inward_tol:
            violations += 1
    axis = np.linspace(-radius, radius, grid_n)
    best, arg = math.inf, np.zeros(2)
    for a in axis:
        for b in axis:
            if a * a + b * b > radius * radius:
                continue
            x = np.array([a, b])
            nv = float(np.linalg.norm(np.atleast_1d(evaluator(x))))
            if nv < best:
                best, arg = nv, x
    return ZeroProbeReport(boundary_hypothesis_ok=violations == 0,
                           boundary_violations=violations,
                           min_norm=best, argmin=arg)


# ---------------------------------------------------------------------------
# Counterexample battery
# ---------------------------------------------------------------------------

@dataclass
class Claim:
    name: str
    passed: bool
    details: dict

    def to_json_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


@dataclass
class BatteryReport:
    claims: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def to_json_dict(self) -> dict:
        return {"all_passed": self.all_passed,
                "claims": [c.to_json_dict() for c in self.claims]}

    def to_table(self) -> str:
        width = max(len(c.name) for c in self.claims) + 2
        lines = [f"{'claim'.ljust(width)}status", "-" * (width + 6)]
        for c in self.claims:
            lines.append(f"{c.name.ljust(width)}{'PASS' if c.passed else 'FAIL'}")
        lines.append("-" * (width + 6))
        lines.append(f"overall: {'PASS' if self.all_passed else 'FAIL'}")
        return "\n".join(lines)


def run_counterexample_battery(raster_cells: int = 200) -> BatteryReport:
    """Replay the named analytic counterexamples and workaround as claims."""
    from . import attributions as attr
    from . import multidim
    from .core import BUILTIN_MODELS, UtilitySpec

    claims = []

    # SmoothGrad on the square model fails exactly at the origin.
    quad = BUILTIN_MODELS.make("quad")
    prob1 = RecourseProblem(quad, UtilitySpec.difference(), 1.0, 2.0)
    sg = attr.smoothgrad_evaluator(quad, attr.SmoothGradConfig(sigma=0.5, mode="analytic"))
    xs = np.linspace(-3, 3, 100)
    exact_2x = all(sg(np.array([x]))[0] == 2.0 * x for x in xs)
    at0 = check_recourse_at(prob1, sg, 0.0)
    sat_pts = [x for x in (-2.0, -0.5, -0.1, 0.1, 0.5, 2.0)]
    sides = [check_recourse_at(prob1, sg, x).status for x in sat_pts]
    claims.append(Claim(
        "smoothgrad_quad_origin",
        exact_2x and at0.status == "violated" and all(s == "satisfied" for s in sides),
        {"sg_is_2x": exact_2x, "origin": at0.status, "offsets": sides}))

    # Integrated Gradients on the bell-curve model with a ratio target.
    gauss = BUILTIN_MODELS.make("gauss")
    delta2 = math.sqrt(math.log(2.0)) + 0.2
    prob2 = RecourseProblem(gauss, UtilitySpec.ratio("x_over_y"), 2.0, delta2)
    ig = attr.ig_evaluator(gauss, attr.IGConfig(baseline=0.0, steps=2000))
    grid2 = np.linspace(-3, 3, 61)
    ig_err = max(abs(ig(np.array([x]))[0] - (gauss.eval(x) - 1.0)) for x in grid2)
    v_origin = check_recourse_at(prob2, ig, 0.0)
    v_right = check_recourse_at(prob2, ig, delta2 + 0.1)
    claims.append(Claim(
        "integrated_gradients_gauss_ratio",
        ig_err <= 1e-6 and v_origin.status == "violated" and v_right.status == "violated",
        {"max_ig_error": ig_err, "origin": v_origin.status,
         "right_of_delta": v_right.status}))

    # Counterfactual projection for the circle model jumps at the origin.
    circle = BUILTIN_MODELS.make("circle")
    prob3 = RecourseProblem(circle, UtilitySpec.class_score(), 0.0, 1.5)
    proj = attr.projection_evaluator(prob3)
    rep = continuity_probe(proj, [np.array([-1e-3, 0.0])], 2e-3, 1.9)
    jump_found = len(rep.candidates) == 1 and rep.jumps[0].magnitude >= 1.9
    grid = [np.array([a, b]) for a in np.linspace(-0.9, 0.9, 20)
            for b in np.linspace(-0.9, 0.9, 20)
            if 1e-6 < math.hypot(a, b) < 0.999]
    scan = scan_recourse(prob3, proj, grid)
    claims.append(Claim(
        "counterfactual_circle_jump",
        jump_found and scan.violated == 0,
        {"jump": None if not rep.jumps else rep.jumps[0].magnitude,
         "stable": jump_found, "violated": scan.violated,
         "scanned": scan.total}))

    # Overlap formula for the square model.
    overlap_ok, overlap_details = True, {}
    for tau, delta in ((1.0, 2.0), (0.5, 1.5), (2.0, 3.0)):
        prob = RecourseProblem(quad, UtilitySpec.difference(), tau, delta)
        edge = (delta * delta - tau) / (2.0 * delta)
        ex = onedim.compute_lro(prob, "exact")
        inter = ex.L.intersection(ex.R)
        err_exact = max(abs(inter.parts[0].lo + edge), abs(inter.parts[0].hi - edge))
        h = 1e-3
        sm = onedim.compute_lro(prob, "sampled", grid=(-edge - 1.0, edge + 1.0, h))
        inter_s = sm.L.intersection(sm.R)
        err_samp = max(abs(inter_s.parts[0].lo + edge), abs(inter_s.parts[0].hi - edge))
        overlap_details[f"tau={tau},delta={delta}"] = {
            "exact_err": err_exact, "sampled_err": err_samp}
        overlap_ok &= err_exact <= 1e-9 and err_samp <= 2 * h
    claims.append(Claim("quad_overlap_formula", overlap_ok, overlap_details))

    # Forced-overlap certificate for the plateau-ramp construction.
    thm1 = BUILTIN_MODELS.make("thm1", z1=0.0, z2=1.0, delta=1.0)
    prob5 = RecourseProblem(thm1, UtilitySpec.difference(), 0.5, 1.0)
    cert = onedim.decide(onedim.compute_lro(prob5, "exact"))
    ok5 = (cert.verdict == "impossible"
           and -0.125 <= cert.witness.shared_point <= 0.125)
    claims.append(Claim("plateau_ramp_forced_overlap", ok5,
                        {"verdict": cert.verdict,
                         "shared_point": None if cert.witness is None
                         else cert.witness.shared_point}))

    # Single-feature impossibility for the circle-squared classifier.
    ok6, det6 = True, {}
    for delta in (0.6, 1.0):
        prob6 = RecourseProblem(BUILTIN_MODELS.make("circle_sq"), UtilitySpec.flip(),
                                1.0, delta, ConstraintSpec.sparse(1))
        ex_cert = multidim.decide_axes(multidim.compute_axis_regions(prob6, "exact"))
        w = ex_cert.witness.point
        band_ok = 1.0 < float(w @ w) < min(2.0, 2.0 * delta) and abs(w[0] - w[1]) < 1e-12
        ra_cert = multidim.decide_axes(
            multidim.compute_axis_regions(prob6, "raster", cells=raster_cells))
        agree = ex_cert.verdict == ra_cert.verdict == "impossible"
        det6[f"delta={delta}"] = {"exact": ex_cert.verdict, "raster": ra_cert.verdict,
                                  "witness_norm_sq": float(w @ w)}
        ok6 &= band_ok and agree
    claims.append(Claim("circle_sq_single_feature_impossible", ok6, det6))

    # Abstract-feature workaround: the 2D head of the feature attribution obeys
    # the no-inward-pointing hypothesis, so a zero is forced inside (found at 0),
    # while the 5-feature map stays informative there.
    abstract = BUILTIN_MODELS.make("abstract_circle")

    def head2(x):
        return attr.abstract_feature_attribution(abstract, x).weights[:2]

    zp = zero_detection_probe(head2, radius=0.9)
    full0 = attr.abstract_feature_attribution(abstract, [0.0, 0.0]).weights
    probe_pts = [np.array([a, b]) for a in np.linspace(-1.5, 1.5, 13)
                 for b in np.linspace(-1.5, 1.5, 13)]
    full_rep = continuity_probe(
        lambda x: attr.abstract_feature_attribution(abstract, x).weights,
        probe_pts, 1e-3, 0.05)
    ok7 = (zp.boundary_hypothesis_ok and zp.min_norm <= 1e-9
           and float(np.linalg.norm(zp.argmin)) <= 1e-9
           and float(np.linalg.norm(full0)) > 1.0
           and len(full_rep.candidates) == 0)
    claims.append(Claim("abstract_feature_workaround", ok7,
                        {"boundary_ok": zp.boundary_hypothesis_ok,
                         "zero_at": [float(v) for v in zp.argmin],
                         "full_map_norm_at_zero": float(np.linalg.norm(full0))}))

    return BatteryReport(claims)
