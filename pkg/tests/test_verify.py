import math

import numpy as np

from recourselab import attributions as attr
from recourselab import onedim
from recourselab.core import (
    BUILTIN_MODELS,
    ConstraintSpec,
    RecourseProblem,
    UtilitySpec,
)
from recourselab.intervals import Interval, IntervalSet
from recourselab.verify import (
    check_recourse_at,
    continuity_probe,
    run_counterexample_battery,
    scan_recourse,
    scan_recourse_sets,
    zero_detection_probe,
)


def quad_problem(tau=1.0, delta=2.0):
    return RecourseProblem(BUILTIN_MODELS.make("quad"), UtilitySpec.difference(),
                           tau, delta)


class TestCheckRecourseAt:
    def test_smoothgrad_quad_origin_violated(self):
        m = BUILTIN_MODELS.make("quad")
        sg = attr.smoothgrad_evaluator(m, attr.SmoothGradConfig(sigma=0.5, mode="analytic"))
        v = check_recourse_at(quad_problem(), sg, 0.0)
        assert v.status == "violated"

    def test_smoothgrad_quad_offsets_satisfied(self):
        m = BUILTIN_MODELS.make("quad")
        sg = attr.smoothgrad_evaluator(m, attr.SmoothGradConfig(sigma=0.5, mode="analytic"))
        for x in (-0.5, 0.1, 1.0, -2.0):
            v = check_recourse_at(quad_problem(), sg, x)
            assert v.status == "satisfied"
            assert v.witness is not None

    def test_ig_gauss_origin_and_right(self):
        m = BUILTIN_MODELS.make("gauss")
        delta = math.sqrt(math.log(2.0)) + 0.2
        p = RecourseProblem(m, UtilitySpec.ratio("x_over_y"), 2.0, delta)
        ig = attr.ig_evaluator(m, attr.IGConfig(baseline=0.0, steps=2000))
        assert check_recourse_at(p, ig, 0.0).status == "violated"
        assert check_recourse_at(p, ig, delta + 0.1).status == "violated"
        # left points do get recourse from the negative attribution
        assert check_recourse_at(p, ig, -1.0).status == "satisfied"

    def test_vacuous_when_target_empty(self):
        p = quad_problem(tau=100.0, delta=0.5)
        zero = lambda x: np.zeros(1)
        v = check_recourse_at(p, zero, 0.0)
        assert v.status == "vacuous"
        assert "emptiness" in v.searched

    def test_zero_attribution_satisfied_inside_target(self):
        p = RecourseProblem(BUILTIN_MODELS.make("quad"), UtilitySpec.class_score(),
                            1.0, 1.0)
        zero = lambda x: np.zeros(1)
        v = check_recourse_at(p, zero, 2.0)  # f(2) = 4 >= 1, staying put works
        assert v.status == "satisfied" and v.step == 0.0

    def test_inadmissible_direction_violated(self):
        p = RecourseProblem(BUILTIN_MODELS.make("circle_sq"), UtilitySpec.class_score(),
                            0.0, 2.0, ConstraintSpec.sparse(1))
        diag = lambda x: np.array([1.0, 1.0])  # changes two coordinates
        v = check_recourse_at(p, diag, [0.2, 0.2])
        assert v.status == "violated"
        assert v.searched["branch"] == "inadmissible-direction"

    def test_monotone_in_delta(self):
        # growing delta keeps satisfied verdicts satisfied (same witness attainable)
        m = BUILTIN_MODELS.make("quad")
        sg = attr.smoothgrad_evaluator(m, attr.SmoothGradConfig(sigma=0.5, mode="analytic"))
        v1 = check_recourse_at(quad_problem(delta=2.0), sg, 0.5)
        assert v1.status == "satisfied"
        for delta in (2.5, 3.0, 4.0):
            v2 = check_recourse_at(quad_problem(delta=delta), sg, 0.5)
            assert v2.status == "satisfied"


class TestScan:
    def test_circle_projection_no_violations(self):
        m = BUILTIN_MODELS.make("circle")
        p = RecourseProblem(m, UtilitySpec.class_score(), 0.0, 1.5)
        proj = attr.projection_evaluator(p)
        pts = [np.array([a, b]) for a in np.linspace(-0.9, 0.9, 20)
               for b in np.linspace(-0.9, 0.9, 20)
               if 1e-6 < math.hypot(a, b) < 0.999]
        rep = scan_recourse(p, proj, pts)
        assert rep.total == len(pts)
        assert rep.violated == 0

    def test_constant_zero_on_quad(self):
        p = quad_problem()
        rep = scan_recourse(p, lambda x: np.zeros(1), np.linspace(-1, 1, 21)[:, None])
        assert rep.violated == rep.total  # T(x) nonempty everywhere at delta=2

    def test_low_threshold_all_satisfied(self):
        # tau below min utility: staying put satisfies a zero attribution
        p = RecourseProblem(BUILTIN_MODELS.make("quad"), UtilitySpec.difference(),
                            -1.0, 1.0)
        rep = scan_recourse(p, lambda x: np.zeros(1), np.linspace(-2, 2, 11)[:, None])
        assert rep.satisfied == rep.total

    def test_set_level_scan(self):
        L = IntervalSet([Interval(-2, -1)])
        R = IntervalSet([Interval(1, 2)])
        O = IntervalSet.empty()
        cert = onedim.decide(onedim.LRO(L, R, O, "exact"))
        built = onedim.construct_attribution(cert)
        xs = np.linspace(-3, 3, 1001)
        assert scan_recourse_sets(L, R, O, built.evaluator, xs) == []
        bad = scan_recourse_sets(L, R, O, lambda x: np.array([1.0]), xs)
        assert bad  # always-positive attribution violates on L


class TestContinuityProbe:
    def test_circle_jump_flagged_stable(self):
        m = BUILTIN_MODELS.make("circle")
        p = RecourseProblem(m, UtilitySpec.class_score(), 0.0, 1.5)
        proj = attr.projection_evaluator(p)
        rep = continuity_probe(proj, [np.array([-1e-3, 0.0])], 2e-3, 1.9)
        assert len(rep.jumps) == 1
        j = rep.jumps[0]
        assert j.magnitude >= 1.9
        assert j.discontinuity_candidate
        assert np.linalg.norm(j.location) < 2e-3

    def test_linear_projection_clean(self):
        m = BUILTIN_MODELS.make("linear", beta=[1.0, 0.0])
        p = RecourseProblem(m, UtilitySpec.class_score(), 0.0, 1.0)
        proj = attr.projection_evaluator(p)
        pts = [np.array([a, b]) for a in np.linspace(-2, 2, 9)
               for b in np.linspace(-2, 2, 9)]
        rep = continuity_probe(proj, pts, 1e-3, 1e-2)
        assert rep.jumps == []

    def test_steepness_not_flagged_as_discontinuity(self):
        steep = lambda x: np.array([math.tanh(200.0 * x[0])])
        rep = continuity_probe(steep, [np.array([-0.05])], 0.1, 0.5)
        assert len(rep.jumps) == 1
        # the jump shrinks under halving: steep, not discontinuous
        assert not rep.jumps[0].discontinuity_candidate

    def test_constructed_attribution_clean(self):
        cert = onedim.decide(onedim.LRO(IntervalSet([Interval(-2, -1)]),
                                        IntervalSet([Interval(1, 2)]),
                                        IntervalSet.empty(), "exact"))
        built = onedim.construct_attribution(cert)
        rep = continuity_probe(built.evaluator,
                               np.linspace(-3, 3, 601)[:, None], 1e-2, 2.5e-2)
        assert rep.jumps == []

    def test_lipschitz_threshold_rule(self):
        # L-Lipschitz evaluator with threshold > L * pair_step reports nothing
        lipschitz = lambda x: np.array([3.0 * x[0]])
        rep = continuity_probe(lipschitz, np.linspace(-1, 1, 101)[:, None],
                               1e-2, 3.0 * 1e-2 + 1e-9)
        assert rep.jumps == []


class TestZeroProbe:
    def test_outward_field_forces_zero_at_origin(self):
        m = BUILTIN_MODELS.make("abstract_circle")

        def head2(x):
            return attr.abstract_feature_attribution(m, x).weights[:2]

        rep = zero_detection_probe(head2, radius=0.9)
        assert rep.boundary_hypothesis_ok
        assert rep.min_norm <= 1e-12
        assert np.linalg.norm(rep.argmin) <= 1e-12

    def test_inward_field_violates_hypothesis(self):
        inward = lambda x: -np.asarray(x)
        rep = zero_detection_probe(inward, radius=1.0)
        assert not rep.boundary_hypothesis_ok


class TestBattery:
    def test_all_claims_pass(self):
        rep = run_counterexample_battery(raster_cells=160)
        for claim in rep.claims:
            assert claim.passed, (claim.name, claim.details)
        assert rep.all_passed
        assert len(rep.claims) == 7

    def test_deterministic_json(self):
        import json

        a = json.dumps(run_counterexample_battery(raster_cells=120).to_json_dict(),
                       sort_keys=True)
        b = json.dumps(run_counterexample_battery(raster_cells=120).to_json_dict(),
                       sort_keys=True)
        assert a == b
