"""Command-line workbench tying the library into reproducible runs.

Every JSON/CSV artifact embeds the fully resolved run configuration and its
content hash, so re-running a command with the same config and seeds yields
byte-identical delimited output; report paths additionally render matplotlib
figures next to the data files.

Exit codes: 0 ok, 1 usage/config error, 2 battery-claim or expectation failure,
3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import attributions as attr
from . import figures, onedim, profpic, verify
from .core import BUILTIN_MODELS, ConstraintSpec, RecourseProblem, make_utility
from .errors import ConfigError, RecourseLabError


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _provenance(resolved: dict, input_files=()) -> dict:
    digest = hashlib.sha256(_canonical(resolved).encode("utf-8"))
    for p in input_files:
        digest.update(Path(p).read_bytes())
    return {"config": resolved, "inputs_sha256": digest.hexdigest()}


def _write_json(path, payload: dict, provenance: dict):
    obj = dict(payload)
    obj["provenance"] = provenance
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2,
                                     allow_nan=False) + "\n")


def _write_csv(path, header, rows, provenance: dict):
    buf = io.StringIO()
    buf.write(f"# inputs_sha256={provenance['inputs_sha256']}\n")
    buf.write(f"# config={_canonical(provenance['config'])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    Path(path).write_text(buf.getvalue())


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse point {text!r}; expected comma-separated floats")


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"model param {pair!r} must look like key=value")
        key, val = pair.split("=", 1)
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _problem_config(cfg_file: dict, args) -> dict:
    prob = dict(cfg_file.get("problem", {}))
    if getattr(args, "model", None):
        prob["model"] = args.model
    if getattr(args, "model_param", None):
        prob.setdefault("model_params", {}).update(_parse_params(args.model_param))
    for key in ("utility", "tau", "delta", "constraint", "sparse_k"):
        val = getattr(args, key, None)
        if val is not None:
            prob[key] = val
    prob.setdefault("utility", "difference")
    prob.setdefault("constraint", "full")
    if "model" not in prob:
        raise ConfigError("missing field problem.model (or --model)")
    for field in ("tau", "delta"):
        if field not in prob:
            raise ConfigError(f"missing field problem.{field} (or --{field})")
    return prob


def build_problem(prob: dict) -> RecourseProblem:
    model = BUILTIN_MODELS.make(prob["model"], **prob.get("model_params", {}))
    utility = make_utility(prob["utility"])
    kind = prob["constraint"]
    if kind == "full":
        constraint = ConstraintSpec.full()
    elif kind == "sparse":
        constraint = ConstraintSpec.sparse(int(prob.get("sparse_k", 1)))
    elif kind == "directions":
        constraint = ConstraintSpec.along(prob["directions"])
    else:
        raise ConfigError(f"unknown constraint {kind!r} in problem config")
    return RecourseProblem(model, utility, float(prob["tau"]), float(prob["delta"]),
                           constraint)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Evaluators shared by attribute / verify / probe
# ---------------------------------------------------------------------------

def _method_evaluator(method: str, problem: RecourseProblem, args):
    model = problem.model
    if method == "vg":
        return attr.gradient_evaluator(model)
    if method == "sg":
        cfg = attr.SmoothGradConfig(sigma=args.sigma, samples=args.samples,
                                    seed=args.seed, mode="mc")
        return attr.smoothgrad_evaluator(model, cfg)
    if method == "sg-analytic":
        cfg = attr.SmoothGradConfig(sigma=args.sigma, mode="analytic")
        return attr.smoothgrad_evaluator(model, cfg)
    if method == "ig":
        baseline = _parse_point(args.baseline) if args.baseline else np.zeros(model.dim)
        return attr.ig_evaluator(model, attr.IGConfig(baseline=baseline, steps=args.steps))
    if method in ("shap", "shap-exact"):
        baseline = _parse_point(args.baseline) if args.baseline else np.zeros(model.dim)
        coalitions = "exact" if method == "shap-exact" else args.samples
        cfg = attr.ShapConfig(baseline=baseline, coalitions=coalitions, seed=args.seed)
        return lambda x: attr.kernel_shap(model, x, cfg).weights
    if method == "projection":
        return attr.projection_evaluator(problem)
    raise ConfigError(f"unknown method {method!r}")


def _grid_points(problem: RecourseProblem, spec: str) -> list:
    lo, hi, n = spec.split(",")
    lo, hi, n = float(lo), float(hi), int(n)
    axis = np.linspace(lo, hi, n)
    d = problem.model.dim
    if d == 1:
        pts = axis[:, None]
    elif d == 2:
        pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    else:
        raise ConfigError("grids beyond 2 dimensions are not supported by the CLI")
    return [p for p in pts if problem.model.domain.contains(p)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_scan1d(args) -> int:
    cfg_file = _load_config(args.config)
    prob_cfg = _problem_config(cfg_file, args)
    scan_cfg = dict(cfg_file.get("scan1d", {}))
    if args.mode:
        scan_cfg["mode"] = args.mode
    if args.grid:
        lo, hi, step = (float(t) for t in args.grid.split(","))
        scan_cfg["grid"] = [lo, hi, step]
    scan_cfg.setdefault("mode", "exact")
    scan_cfg.setdefault("phi_samples", 512)
    resolved = {"command": "scan1d", "problem": prob_cfg, "scan1d": scan_cfg}
    prov = _provenance(resolved)
    out = _out_dir(args)

    problem = build_problem(prob_cfg)
    grid = tuple(scan_cfg["grid"]) if "grid" in scan_cfg else None
    lro = onedim.compute_lro(problem, scan_cfg["mode"], grid=grid)
    cert = onedim.decide(lro)

    _write_json(out / "lro.json",
                {"L": str(lro.L), "R": str(lro.R), "O": str(lro.O),
                 "mode": lro.mode, "grid_step": lro.grid_step}, prov)
    _write_json(out / "certificate.json", cert.to_json_dict(), prov)

    built = None
    if cert.verdict == "possible":
        built = onedim.construct_attribution(cert)
        pts = _phi_span(lro, problem.delta, int(scan_cfg["phi_samples"]))
        vals = built.phi_batch(pts)
        _write_csv(out / "phi.csv", ["x", "phi"],
                   list(zip(map(float, pts), map(float, vals))), prov)
    figures.scan1d_figure(lro, cert, built, out / "scan1d.png")

    print(f"scan1d: verdict={cert.verdict} -> {out}")
    if args.expect_possible and cert.verdict != "possible":
        print("expected Possible but the decision is Impossible", file=sys.stderr)
        return 2
    return 0


def _phi_span(lro, delta: float, n: int) -> np.ndarray:
    ends = (lro.L.finite_endpoints() + lro.R.finite_endpoints()
            + lro.O.finite_endpoints()) or [0.0]
    return np.linspace(min(ends) - delta, max(ends) + delta, n)


def cmd_attribute(args) -> int:
    cfg_file = _load_config(args.config)
    prob_cfg = _problem_config(cfg_file, args)
    resolved = {"command": "attribute", "problem": prob_cfg, "method": args.method,
                "x": args.x, "baseline": args.baseline, "steps": args.steps,
                "sigma": args.sigma, "samples": args.samples, "seed": args.seed}
    prov = _provenance(resolved)
    out = _out_dir(args)

    problem = build_problem(prob_cfg)
    x = _parse_point(args.x)
    weights = _method_evaluator(args.method, problem, args)(x)
    _write_csv(out / "attribution.csv", ["index", "weight"],
               [(i, float(w)) for i, w in enumerate(np.atleast_1d(weights))], prov)
    print(f"attribute: {args.method} at {args.x} -> {out / 'attribution.csv'}")
    return 0


def _phi_csv_evaluator(path):
    xs, vals = [], []
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "x":
                continue
            xs.append(float(row[0]))
            vals.append(float(row[1]))
    xs, vals = np.asarray(xs), np.asarray(vals)

    def ev(p):
        return np.array([np.interp(np.atleast_1d(p)[0], xs, vals)])

    return ev


def cmd_verify(args) -> int:
    cfg_file = _load_config(args.config)
    prob_cfg = _problem_config(cfg_file, args)
    resolved = {"command": "verify", "problem": prob_cfg, "method": args.method,
                "phi_csv": args.phi_csv, "grid": args.grid, "seed": args.seed}
    inputs = [args.phi_csv] if args.phi_csv else []
    prov = _provenance(resolved, inputs)
    out = _out_dir(args)

    problem = build_problem(prob_cfg)
    if args.phi_csv:
        if problem.model.dim != 1:
            raise ConfigError("phi.csv evaluators are one-dimensional")
        evaluator = _phi_csv_evaluator(args.phi_csv)
    elif args.method:
        evaluator = _method_evaluator(args.method, problem, args)
    else:
        raise ConfigError("verify needs --method or --phi-csv")
    report = verify.scan_recourse(problem, evaluator, _grid_points(problem, args.grid))
    _write_json(out / "verdicts.json", report.to_json_dict(), prov)
    print(f"verify: {report.satisfied} satisfied, {report.violated} violated, "
          f"{report.vacuous} vacuous -> {out / 'verdicts.json'}")
    if report.violated and not args.report_only:
        return 2
    return 0


def cmd_probe(args) -> int:
    cfg_file = _load_config(args.config)
    prob_cfg = _problem_config(cfg_file, args)
    resolved = {"command": "probe", "problem": prob_cfg, "method": args.method,
                "grid": args.grid, "pair_step": args.pair_step,
                "threshold": args.threshold, "seed": args.seed}
    prov = _provenance(resolved)
    out = _out_dir(args)

    problem = build_problem(prob_cfg)
    evaluator = _method_evaluator(args.method, problem, args)
    report = verify.continuity_probe(evaluator, _grid_points(problem, args.grid),
                                     args.pair_step, args.threshold)
    _write_json(out / "jumps.json", report.to_json_dict(), prov)
    figures.probe_figure(report, out / "probe.png")
    print(f"probe: {len(report.jumps)} jumps, "
          f"{len(report.candidates)} discontinuity candidates -> {out / 'jumps.json'}")
    return 0


def cmd_battery(args) -> int:
    resolved = {"command": "battery", "raster_cells": args.raster_cells}
    prov = _provenance(resolved)
    out = _out_dir(args)
    report = verify.run_counterexample_battery(raster_cells=args.raster_cells)
    _write_json(out / "battery.json", report.to_json_dict(), prov)
    (out / "battery.txt").write_text(
        f"# inputs_sha256={prov['inputs_sha256']}\n"
        f"# config={_canonical(prov['config'])}\n"
        + report.to_table() + "\n")
    figures.battery_figure(report, out / "battery.png")
    print(report.to_table())
    return 0 if report.all_passed else 2


def _profpic_cfg(cfg_file: dict, args) -> dict:
    cfg = dict(cfg_file.get("profpic", {}))
    for key in ("n", "size", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("n", 53)
    cfg.setdefault("size", 64)
    cfg.setdefault("seed", 1)
    return cfg


def _profpic_dataset(cfg: dict):
    return profpic.generate_dataset(n=int(cfg["n"]), h=int(cfg["size"]),
                                    w=int(cfg["size"]), seed=int(cfg["seed"]))


def cmd_profpic(args) -> int:
    cfg_file = _load_config(args.config)
    cfg = _profpic_cfg(cfg_file, args)
    resolved = {"command": f"profpic-{args.subcmd}", "profpic": cfg}
    prov = _provenance(resolved)
    out = _out_dir(args)
    dataset = _profpic_dataset(cfg)

    if args.subcmd == "generate":
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        manifest = []
        for img in dataset:
            name = f"img_{img.meta['id']:03d}.png"
            profpic.render_image(img.pixels, img_dir / name)
            manifest.append({
                "id": img.meta["id"], "file": f"images/{name}",
                "label": img.label, "contrast": img.meta["contrast"],
                "background": img.meta["background"],
                "pixels_sha256": hashlib.sha256(img.pixels.tobytes()).hexdigest(),
            })
        _write_json(out / "dataset.json",
                    {"count": len(dataset), "images": manifest}, prov)
        print(f"profpic generate: {len(dataset)} images -> {out}")
        return 0

    if args.subcmd == "run":
        report = profpic.run_experiment(dataset)
        _write_json(out / "experiment.json", report.to_json_dict(), prov)
        print(f"profpic run: lambda={report.lambda_thresh} "
              f"accuracy={report.accuracy} -> {out / 'experiment.json'}")
        return 0

    if args.subcmd == "report":
        exp_path = out / "experiment.json"
        if not exp_path.exists():
            raise ConfigError(f"run `profpic run` first; missing {exp_path}")
        experiment = json.loads(exp_path.read_text())
        md = _experiment_markdown(experiment)
        (out / "report.md").write_text(
            f"<!-- inputs_sha256={prov['inputs_sha256']} "
            f"config={_canonical(prov['config'])} -->\n" + md)
        _render_montage(dataset, out)
        print(f"profpic report -> {out / 'report.md'}, {out / 'montage.png'}")
        return 0

    raise ConfigError(f"unknown profpic subcommand {args.subcmd!r}")


def _experiment_markdown(experiment: dict) -> str:
    rep = profpic.ExperimentReport(lambda_thresh=experiment["lambda_thresh"],
                                   accuracy=experiment["accuracy"],
                                   rows=experiment["rows"],
                                   meta=experiment["meta"])
    return rep.to_markdown() + "\n"


def _render_montage(dataset, out: Path) -> None:
    """Rejected nonzero-contrast row and the flat zero-contrast row."""
    nonzero = next(i for i in dataset
                   if i.label == "rejected" and i.meta["contrast"] != 0.0)
    zero = next(i for i in dataset if i.meta["contrast"] == 0.0)
    methods = list(profpic.EXPERIMENT_METHODS)
    rows = []
    sal_dir = out / "saliency"
    sal_dir.mkdir(exist_ok=True)
    for img in (nonzero, zero):
        model = profpic.make_contrast_model(img.person_mask)
        x = img.pixels.reshape(-1)
        maps = {}
        for method in methods:
            if method == "gradient":
                maps[method] = profpic.gradient_methods_analytic(model, x)["vg"]
            elif method == "lime_manual":
                maps[method] = attr.lime_image(
                    model, img.pixels,
                    attr.LimeConfig(segments=("manual", img.person_mask)))[1].weights
            elif method == "lime_auto":
                maps[method] = attr.lime_image(
                    model, img.pixels,
                    attr.LimeConfig(segments="grid8", samples=4000))[1].weights
            else:
                maps[method] = attr.kernel_shap(
                    model, x, attr.ShapConfig(baseline=0.0, coalitions=256)).weights
            profpic.render_saliency(maps[method], img.pixels.shape,
                                    sal_dir / f"img_{img.meta['id']:03d}_{method}.png")
        rows.append({"title": f"#{img.meta['id']} ({img.label})",
                     "image": img.pixels, "maps": maps})
    figures.profpic_montage(rows, methods, out / "montage.png")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_problem_flags(p):
    p.add_argument("--config", help="TOML config file; flags override its fields")
    p.add_argument("--model", help="registered model key")
    p.add_argument("--model-param", action="append", metavar="KEY=VALUE",
                   help="model constructor parameter (repeatable)")
    p.add_argument("--utility", choices=["class_score", "difference",
                                         "ratio_y_over_x", "ratio_x_over_y", "flip"])
    p.add_argument("--tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--constraint", choices=["full", "sparse", "directions"])
    p.add_argument("--sparse-k", dest="sparse_k", type=int)


def _add_method_flags(p):
    p.add_argument("--method", choices=["vg", "sg", "sg-analytic", "ig",
                                        "shap", "shap-exact", "projection"])
    p.add_argument("--baseline", help="comma-separated baseline point")
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recourselab",
                     description="Recourse-sensitivity workbench: decision "
                                 "procedures, attribution methods, verification")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (output is identical at any cap)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("scan1d", parents=[], help="L/R/O decision + construction")
    _add_problem_flags(p)
    p.add_argument("--mode", choices=["exact", "sampled"])
    p.add_argument("--grid", help="lo,hi,step for sampled mode")
    p.add_argument("--phi-samples", type=int, default=512)
    p.add_argument("--expect-possible", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scan1d)

    p = sub.add_parser("attribute", help="run one attribution method at a point")
    _add_problem_flags(p)
    _add_method_flags(p)
    p.add_argument("--x", required=True, help="comma-separated point")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("verify", help="recourse verdicts over a grid")
    _add_problem_flags(p)
    _add_method_flags(p)
    p.add_argument("--phi-csv", help="sampled phi to verify instead of a method")
    p.add_argument("--grid", default="-2,2,41", help="lo,hi,n per axis")
    p.add_argument("--report-only", action="store_true",
                   help="always exit 0, even with violations")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("probe", help="continuity probe over a grid")
    _add_problem_flags(p)
    _add_method_flags(p)
    p.add_argument("--grid", default="-1,1,21")
    p.add_argument("--pair-step", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("battery", help="run the counterexample battery")
    p.add_argument("--raster-cells", type=int, default=200)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_battery)

    p = sub.add_parser("profpic", help="profile-picture experiment")
    p.add_argument("subcmd", choices=["generate", "run", "report"])
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_profpic)

    return parser


def _thread_cap(n):
    """Cap BLAS worker threads; results are identical at any cap."""
    if n is None:
        import contextlib

        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=int(n))
    except ImportError:
        import contextlib

        return contextlib.nullcontext()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        with _thread_cap(getattr(args, "threads", None)):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RecourseLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
