"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every tolerance is pinned here.
"""

import json
import math

import numpy as np
import pytest

from recourselab import attributions as attr
from recourselab import multidim, onedim, profpic, verify
from recourselab.cli import main as cli_main
from recourselab.core import (
    BUILTIN_MODELS,
    ConstraintSpec,
    RecourseProblem,
    UtilitySpec,
)
from recourselab.intervals import Interval, IntervalSet


def _line(num: int, name: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {num:02d} {name}: {status} {detail}".rstrip())
    assert passed, f"criterion {num} ({name}) failed: {detail}"


def quad_problem(tau, delta):
    return RecourseProblem(BUILTIN_MODELS.make("quad"), UtilitySpec.difference(),
                           tau, delta)


def test_criterion_01_quad_overlap():
    ok, worst = True, {}
    for tau, delta in ((1.0, 2.0), (0.5, 1.5), (2.0, 3.0)):
        edge = (delta * delta - tau) / (2.0 * delta)
        prob = quad_problem(tau, delta)
        ex = onedim.compute_lro(prob, "exact").L.intersection(
            onedim.compute_lro(prob, "exact").R)
        err_exact = max(abs(ex.parts[0].lo + edge), abs(ex.parts[0].hi - edge))
        h = 1e-3
        sm = onedim.compute_lro(prob, "sampled", grid=(-edge - 1.0, edge + 1.0, h))
        inter = sm.L.intersection(sm.R)
        err_samp = max(abs(inter.parts[0].lo + edge), abs(inter.parts[0].hi - edge))
        worst[f"({tau},{delta})"] = (err_exact, err_samp)
        ok &= err_exact <= 1e-9 and err_samp <= 2 * h
    _line(1, "x^2 overlap endpoints", ok, str(worst))


def test_criterion_02_plateau_ramp_scan1d_witness(tmp_path):
    code = cli_main(["scan1d", "--model", "thm1",
                     "--model-param", "z1=0.0", "--model-param", "z2=1.0",
                     "--model-param", "delta=1.0", "--utility", "difference",
                     "--tau", "0.5", "--delta", "1.0", "--out-dir", str(tmp_path)])
    cert = json.loads((tmp_path / "certificate.json").read_text())
    shared = cert["witness"]["shared_point"] if cert["witness"] else None
    ok = (code == 0 and cert["verdict"] == "impossible"
          and shared is not None and -0.125 <= shared <= 0.125)
    _line(2, "plateau-ramp impossibility via cmd_scan1d", ok,
          f"verdict={cert['verdict']} shared_point={shared}")


def test_criterion_03_smoothgrad_quad():
    model = BUILTIN_MODELS.make("quad")
    sg = attr.smoothgrad_evaluator(model, attr.SmoothGradConfig(sigma=0.7, mode="analytic"))
    xs = np.linspace(-4.0, 4.0, 100)
    exact = all(sg(np.array([x]))[0] == 2.0 * x for x in xs)
    ok = exact
    for tau, delta in ((1.0, 2.0), (1.0, 1.0), (4.0, 2.0)):  # delta >= sqrt(tau)
        prob = quad_problem(tau, delta)
        ok &= verify.check_recourse_at(prob, sg, 0.0).status == "violated"
    prob = quad_problem(1.0, 2.0)
    offsets = [s * 0.05 * prob.delta * k for s in (-1, 1) for k in (1.0, 2.0, 10.0)]
    statuses = [verify.check_recourse_at(prob, sg, x).status for x in offsets]
    ok &= all(s == "satisfied" for s in statuses)
    _line(3, "smoothgrad on x^2", ok,
          f"sg==2x:{exact} offsets:{set(statuses)}")


def test_criterion_04_ig_gauss():
    model = BUILTIN_MODELS.make("gauss")
    delta = math.sqrt(math.log(2.0)) + 0.2
    prob = RecourseProblem(model, UtilitySpec.ratio("x_over_y"), 2.0, delta)
    ig = attr.ig_evaluator(model, attr.IGConfig(baseline=0.0, steps=2000))
    errs = [abs(ig(np.array([x]))[0] - (model.eval(x) - 1.0))
            for x in np.linspace(-3.0, 3.0, 61)]
    v0 = verify.check_recourse_at(prob, ig, 0.0).status
    v1 = verify.check_recourse_at(prob, ig, delta + 0.1).status
    ok = max(errs) <= 1e-6 and v0 == "violated" and v1 == "violated"
    _line(4, "integrated gradients on exp(-x^2)", ok,
          f"max_err={max(errs):.2e} origin={v0} right={v1}")


def test_criterion_05_circle_jump_and_scan():
    prob = RecourseProblem(BUILTIN_MODELS.make("circle"), UtilitySpec.class_score(),
                           0.0, 1.5)
    proj = attr.projection_evaluator(prob)
    rep = verify.continuity_probe(proj, [np.array([-1e-3, 0.0])], 2e-3, 1.9)
    jump_ok = (len(rep.jumps) == 1 and rep.jumps[0].magnitude >= 1.9
               and rep.jumps[0].discontinuity_candidate)
    pts = [np.array([a, b]) for a in np.linspace(-0.95, 0.95, 24)
           for b in np.linspace(-0.95, 0.95, 24)
           if 1e-6 < math.hypot(a, b) < 0.999][:400]
    scan = verify.scan_recourse(prob, proj, pts)
    ok = jump_ok and scan.violated == 0 and scan.total == 400
    _line(5, "circle counterfactual projection", ok,
          f"jump={rep.jumps[0].magnitude if rep.jumps else None} "
          f"violated={scan.violated}/{scan.total}")


def test_criterion_06_halfspace_lipschitz_and_recourse():
    beta = np.array([2.0, -1.0])
    delta = 0.8
    prob = RecourseProblem(BUILTIN_MODELS.make("linear", beta=beta),
                           UtilitySpec.class_score(), 0.0, delta)
    fam = attr.Halfspace(beta, 0.0)
    rng = np.random.default_rng(2024)
    A = rng.normal(size=(10_000, 2)) * 3.0
    B = rng.normal(size=(10_000, 2)) * 3.0
    lip_ok = True
    for a, b in zip(A, B):
        pa = fam.project(a).point
        pb = fam.project(b).point
        if np.linalg.norm(pa - pb) > np.linalg.norm(a - b) + 1e-9:
            lip_ok = False
            break
    proj = attr.projection_evaluator(prob)
    norm_b = float(np.linalg.norm(beta))
    pts = [p for p in rng.normal(size=(800, 2)) * 2.0
           if abs(float(beta @ p)) / norm_b <= delta][:300]
    scan = verify.scan_recourse(prob, proj, pts)
    ok = lip_ok and scan.violated == 0 and len(pts) >= 100
    _line(6, "halfspace projection", ok,
          f"lipschitz={lip_ok} violated={scan.violated}/{len(pts)}")


def test_criterion_07_shell_formula_and_probe():
    ok = True
    worst = 0.0
    rng = np.random.default_rng(7)
    for b in (0.5, 1.0, 2.0):
        model = BUILTIN_MODELS.make("expnorm", b=b, dim=2)
        prob = RecourseProblem(model, UtilitySpec.ratio("y_over_x"), 2.0, 1.0)
        c = math.log(2.0) / b
        for _ in range(1000):
            x = rng.normal(size=2)
            x *= rng.uniform(0.1, 3.0) / np.linalg.norm(x)
            phi = attr.projection_attribution(
                prob, lambda q: attr.sufficient_set_family(prob, q), x).weights
            err = float(np.max(np.abs(phi - c * x / np.linalg.norm(x))))
            worst = max(worst, err)
            if err > 1e-9:
                ok = False
    model = BUILTIN_MODELS.make("expnorm", b=0.5, dim=2)
    prob = RecourseProblem(model, UtilitySpec.ratio("y_over_x"), 2.0, 1.0)
    proj = attr.projection_evaluator(prob)
    ring = [r * np.array([math.cos(t), math.sin(t)])
            for r in np.linspace(0.1, 3.0, 15)
            for t in np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)]
    rep = verify.continuity_probe(proj, ring, 1e-4, 5e-3)
    ok &= len(rep.jumps) == 0
    _line(7, "shell attribution formula", ok,
          f"worst_formula_err={worst:.2e} probe_jumps={len(rep.jumps)}")


# -- criterion 8: hand-built L/R/O fixture suite ------------------------------------

def iv(lo, hi, lc=True, hc=True):
    return Interval(lo, hi, lc, hc)


def lro_fix(Lparts, Rparts, Oparts=()):
    return onedim.LRO(IntervalSet(Lparts), IntervalSet(Rparts),
                      IntervalSet(Oparts), "exact")


INF = math.inf
FIXTURES = [
    # (name, lro, expected verdict)
    ("separated_infinite", lro_fix([iv(-INF, -1, False, False)], [iv(1, INF, False, False)]), "possible"),
    ("separated_boxes", lro_fix([iv(-2, -1)], [iv(1, 2)]), "possible"),
    ("zero_gap_open_touch", lro_fix([iv(0, 1, False, False)], [iv(1, 2, False, False)]), "possible"),
    ("empty_right", lro_fix([iv(0, 1)], []), "possible"),
    ("both_empty", lro_fix([], []), "possible"),
    ("k1_identical", lro_fix([iv(0, 1)], [iv(0, 1)]), "possible"),
    ("k1_plus_forced", lro_fix([iv(0, 1), iv(4, 5)], [iv(0, 1), iv(8, 9)]), "possible"),
    ("k2_identical", lro_fix([iv(0, 1), iv(2, 3)], [iv(0, 1), iv(2, 3)]), "possible"),
    ("k2_plus_forced", lro_fix([iv(0, 1), iv(2, 3), iv(10, 11)],
                               [iv(0, 1), iv(2, 3), iv(20, 21)]), "possible"),
    ("k3_identical", lro_fix([iv(0, 1), iv(2, 3), iv(4, 5)],
                             [iv(0, 1), iv(2, 3), iv(4, 5)]), "possible"),
    ("k3_plus_forced", lro_fix([iv(0, 1), iv(2, 3), iv(4, 5), iv(-10, -9)],
                               [iv(0, 1), iv(2, 3), iv(4, 5), iv(9, 10)]), "possible"),
    ("right_inside_left", lro_fix([iv(0, 2)], [iv(0.5, 1.5)]), "possible"),
    ("half_open_parts", lro_fix([iv(0, 1, True, False)], [iv(2, 3, False, True)]), "possible"),
    ("two_left_parts", lro_fix([iv(-5, -4), iv(-3, -2)], [iv(2, 3)]), "possible"),
    ("singletons", lro_fix([iv(1, 1)], [iv(2, 2)]), "possible"),
    ("o_separated", lro_fix([iv(-5, -4)], [iv(4, 5)], [iv(-1, 1)]), "possible"),
    ("o_covered", lro_fix([iv(-5, 0)], [iv(2, 5)], [iv(-1, 0)]), "possible"),
    ("o_open_separated", lro_fix([iv(-5, -4)], [iv(4, 5)], [iv(-1, 1, False, False)]), "possible"),
    ("partial_overlap", lro_fix([iv(-3, 1)], [iv(-1, 3)]), "impossible"),
    ("quad_style", lro_fix([iv(-INF, 0.75, False, True)], [iv(-0.75, INF, True, False)]), "impossible"),
    ("half_open_touch", lro_fix([iv(0, 1, True, False)], [iv(1, 2)]), "impossible"),
    ("k1_with_conflict", lro_fix([iv(0, 2), iv(5, 6)], [iv(1, 3), iv(5, 6)]), "impossible"),
    ("k2_with_conflict", lro_fix([iv(0, 2), iv(5, 6), iv(7, 8)],
                                 [iv(1, 3), iv(5, 6), iv(7, 8)]), "impossible"),
    ("k3_with_conflict", lro_fix([iv(0, 2), iv(5, 6), iv(7, 8), iv(9, 10)],
                                 [iv(1, 3), iv(5, 6), iv(7, 8), iv(9, 10)]), "impossible"),
    ("conflict_with_far_o", lro_fix([iv(-3, 1)], [iv(-1, 3)], [iv(10, 11)]), "impossible"),
]


def test_criterion_08_decision_soundness_suite():
    assert len(FIXTURES) == 25
    k_counts = set()
    ok, notes = True, []
    for name, lro, expected in FIXTURES:
        cert = onedim.decide(lro)
        k_counts.add(cert.k_count)
        if cert.verdict != expected:
            ok = False
            notes.append(f"{name}: got {cert.verdict}")
            continue
        ends = (lro.L.finite_endpoints() + lro.R.finite_endpoints()
                + lro.O.finite_endpoints()) or [0.0]
        xs = np.linspace(min(ends) - 1.0, max(ends) + 1.0, 10_000)
        if cert.verdict == "possible":
            built = onedim.construct_attribution(cert)
            bad = verify.scan_recourse_sets(lro.L, lro.R, lro.O, built.evaluator, xs)
            if bad:
                ok = False
                notes.append(f"{name}: {len(bad)} set-level violations")
            vals = built.phi_batch(xs)
            step = xs[1] - xs[0]
            if np.max(np.abs(np.diff(vals))) > 2.0 * step + 1e-12:
                ok = False
                notes.append(f"{name}: jump above the 2-Lipschitz budget")
            rep = verify.continuity_probe(built.evaluator, xs[::20, None], 1e-3, 5e-3)
            if rep.candidates:
                ok = False
                notes.append(f"{name}: discontinuity candidates")
        else:
            w = cert.witness
            left = IntervalSet([w.left_interval])
            right = IntervalSet([w.right_interval])
            if left.is_separated(right):
                ok = False
                notes.append(f"{name}: witness pair is separated")
            forced_l = left.difference(lro.R.union(lro.O))
            forced_r = right.difference(lro.L.union(lro.O))
            if not (forced_l.contains(w.forced_point_left)
                    and forced_r.contains(w.forced_point_right)):
                ok = False
                notes.append(f"{name}: forced points not machine-verified")
    ok &= {0, 1, 2, 3} <= k_counts
    _line(8, "decision soundness suite (25 fixtures)", ok,
          f"k_counts={sorted(k_counts)} {'; '.join(notes)}")


def test_criterion_09_circle_sq_single_feature():
    ok, details = True, []
    for delta in (0.6, 1.0):
        prob = RecourseProblem(BUILTIN_MODELS.make("circle_sq"), UtilitySpec.flip(),
                               1.0, delta, ConstraintSpec.sparse(1))
        ex = multidim.decide_axes(multidim.compute_axis_regions(prob, "exact"))
        w = ex.witness.point
        band = 1.0 < float(w @ w) < min(2.0, 2.0 * delta)
        diag = abs(w[0] - w[1]) <= 1e-12
        ra = multidim.decide_axes(
            multidim.compute_axis_regions(prob, "raster", cells=400))
        agree = ex.verdict == "impossible" and ra.verdict == "impossible"
        rw = ra.witness.point
        raster_near_diag = abs(rw[0] - rw[1]) <= 2.0 * ra.resolution
        ok &= band and diag and agree and raster_near_diag
        details.append(f"delta={delta}: |w|^2={float(w @ w):.3f} raster={ra.verdict}")
    _line(9, "circle_sq single-feature impossibility", ok, "; ".join(details))


def test_criterion_10_contrast_identities_and_flat_row():
    dataset = profpic.generate_dataset(n=53, h=64, w=64, seed=1)
    ident_ok = True
    for img in dataset:
        model = profpic.make_contrast_model(img.person_mask)
        x = img.pixels.reshape(-1)
        grads = profpic.gradient_methods_analytic(model, x)
        sg = attr.smoothgrad(model, x, attr.SmoothGradConfig(sigma=1.0, mode="analytic"))
        if not np.array_equal(sg.weights, grads["vg"]):
            ident_ok = False
        if np.max(np.abs(grads["ig"] - model.gradient(0.5 * x))) > 1e-10:
            ident_ok = False
    lam, acc = profpic.threshold_sweep(dataset)
    zero_ids = {img.meta["id"] for img in dataset if img.meta["contrast"] == 0.0}
    rep = profpic.run_experiment(dataset, image_ids=zero_ids)
    flat_ok, verdict_ok = True, True
    for row in rep.rows:
        if not row["methods"]["gradient"]["flat"]:
            flat_ok = False
        for method, entry in row["methods"].items():
            if entry["verdict"] == "satisfied":
                verdict_ok = False
    ok = ident_ok and acc == 1.0 and flat_ok and verdict_ok
    _line(10, "contrast-model analytic identities + flat row", ok,
          f"identities={ident_ok} accuracy={acc} gradient_flat={flat_ok} "
          f"non_satisfied={verdict_ok}")


def test_criterion_11_shap_oracle():
    ok, details = True, []
    # 4x4 image: 16 features, exact enumeration vs all-coalition WLS
    ds = profpic.generate_dataset(n=6, h=16, w=16, seed=4,
                                  contrast_levels=(0.0, 30.0, -30.0, 60.0))
    img = next(i for i in ds if i.meta["contrast"] != 0.0)
    small = img.pixels[::4, ::4]
    mask = img.person_mask[::4, ::4]
    if not (mask.any() and (~mask).any()):
        mask = mask.copy()
        mask[0, 0] = True
        mask[3, 3] = False
    model = profpic.make_contrast_model(mask)
    x = small.reshape(-1)
    wls = attr.kernel_shap(model, x, attr.ShapConfig(coalitions="exact")).weights
    oracle = attr.shapley_exact_enumeration(model, x, 0.0)
    img_err = float(np.max(np.abs(wls - oracle)))
    img_eff = abs(wls.sum() - (model.eval(x) - model.eval(np.zeros(16))))
    ok &= img_err <= 1e-8 and img_eff <= 1e-10
    details.append(f"4x4: wls_vs_oracle={img_err:.2e} efficiency={img_eff:.2e}")

    rng = np.random.default_rng(11)
    for d in (3, 7, 10):
        beta = rng.normal(size=d)
        m = BUILTIN_MODELS.make("linear", beta=beta)
        x = rng.normal(size=d)
        b = rng.normal(size=d)
        wls = attr.kernel_shap(m, x, attr.ShapConfig(baseline=b, coalitions="exact")).weights
        oracle = attr.shapley_exact_enumeration(m, x, b)
        err = float(np.max(np.abs(wls - oracle)))
        eff = abs(wls.sum() - (m.eval(x) - m.eval(b)))
        ok &= err <= 1e-8 and eff <= 1e-10
        details.append(f"d={d}: err={err:.2e}")
    _line(11, "SHAP oracle agreement", ok, "; ".join(details))


def test_criterion_12_determinism(tmp_path):
    runs = {
        "scan1d": ["scan1d", "--model", "quad", "--utility", "difference",
                   "--tau", "1.0", "--delta", "2.0", "--mode", "sampled",
                   "--grid=-2,2,0.005"],
        "attribute": ["attribute", "--model", "linear",
                      "--model-param", "beta=[1.0,2.0,3.0]",
                      "--utility", "class_score", "--tau", "0.0", "--delta", "1.0",
                      "--method", "shap", "--samples", "128", "--seed", "5",
                      "--x", "1.0,0.5,-0.5"],
        "verify": ["verify", "--model", "quad", "--utility", "difference",
                   "--tau", "1.0", "--delta", "2.0", "--method", "sg-analytic",
                   "--grid=-1,1,21", "--report-only"],
        "probe": ["probe", "--model", "circle", "--utility", "class_score",
                  "--tau", "0.0", "--delta", "1.5", "--method", "projection",
                  "--grid=-0.5,0.5,5", "--pair-step", "0.01", "--threshold", "0.5"],
        "profpic": ["profpic", "run", "--n", "9", "--size", "32"],
    }
    ok, diffs = True, []
    for name, args in runs.items():
        out_a, out_b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        assert cli_main([*args, "--out-dir", str(out_a)]) in (0, 2)
        assert cli_main([*args, "--out-dir", str(out_b)]) in (0, 2)
        for fa in sorted(out_a.iterdir()):
            if fa.suffix not in (".json", ".csv"):
                continue
            fb = out_b / fa.name
            if fa.read_bytes() != fb.read_bytes():
                ok = False
                diffs.append(f"{name}/{fa.name}")
    _line(12, "byte-identical reruns", ok, f"diffs={diffs or 'none'}")
