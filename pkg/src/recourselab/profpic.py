"""Synthetic profile-picture experiment.

A contrast classifier scores images by the squared difference between the
mean pixel value of the person silhouette and of the background; a picture
is accepted when the score clears a threshold fitted by sweeping candidate
cut points.  Every attribution method then runs against rejected pictures,
and each map is checked for recourse: does pushing the image along the
attribution direction reach the accepted class within budget?

The original icon asset is not redistributed; silhouettes are generated
procedurally (ellipse head plus shoulders) at fixed contrast levels, so a
perfect threshold classifier exists by construction.  The recourse budget is
128 gray levels in the direction-normalized (unit sup-norm) sense: each
pixel moves at most 128 gray levels along the searched ray.

Per-image pipeline steps are independent; report rows are assembled sorted
by image id so the output does not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import attributions as attr
from .core import Model
from .errors import BadDims, ConfigError
from .verify import GEOM_POINTS, UNIFORM_POINTS, RecourseVerdict

FLAT_TOL = 1e-9
DEFAULT_BUDGET = 128.0
DEFAULT_CONTRASTS = (0.0, 5.0, -5.0, 10.0, -10.0, 100.0, -100.0, 110.0, -110.0, 120.0, -120.0)
DEFAULT_CUTOFF = 50.0  # |contrast| at or above this is generated as Accepted
# Threshold fitted on the original (non-redistributable) icon asset; the
# synthetic dataset fits its own threshold, this one is informational only.
REFERENCE_LAMBDA = 5961.34


@dataclass
class ProfileImage:
    pixels: np.ndarray
    person_mask: np.ndarray
    label: str  # "accepted" | "rejected"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pixels.shape != self.person_mask.shape:
            raise BadDims("pixel grid and person mask must share a shape")
        if not (self.person_mask.any() and (~self.person_mask).any()):
            raise BadDims("mask must be nonempty on both sides")
        if not np.all(np.isfinite(self.pixels)):
            raise BadDims("pixels must be finite")


def _silhouette(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    cx = w / 2.0 + rng.uniform(-0.03, 0.03) * w
    head_cy = 0.36 * h + rng.uniform(-0.02, 0.02) * h
    head_r = 0.16 * h * rng.uniform(0.9, 1.1)
    head = ((xx - cx) ** 2 / (0.85 * head_r) ** 2
            + (yy - head_cy) ** 2 / head_r ** 2) <= 1.0
    top = head_cy + 1.05 * head_r
    bottom = 0.92 * h
    half_w = 0.30 * w * rng.uniform(0.9, 1.1)
    spread = np.clip((yy - top) / max(bottom - top, 1.0), 0.0, 1.0)
    shoulders = (yy >= top) & (yy <= bottom) & (np.abs(xx - cx) <= half_w * (0.45 + 0.55 * spread))
    return head | shoulders


def generate_dataset(n: int = 53, h: int = 64, w: int = 64,
                     contrast_levels=DEFAULT_CONTRASTS, seed: int = 0,
                     accept_cutoff: float = DEFAULT_CUTOFF) -> list:
    """Deterministic synthetic dataset; labels are perfectly separable by f."""
    if n < 4:
        raise BadDims("need at least 4 images")
    if h < 16 or w < 16:
        raise BadDims("image too small for a silhouette")
    levels = [float(c) for c in contrast_levels]
    if not any(c == 0.0 for c in levels):
        raise ConfigError("contrast levels must include a zero-contrast image")
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n):
        c = levels[i % len(levels)]
        mask = _silhouette(h, w, rng)
        # integer gray levels keep region means (and the zero-contrast score) exact;
        # the range keeps background +- the largest contrast inside [0, 255]
        background = float(rng.integers(120, 136))
        pixels = np.full((h, w), background)
        pixels[mask] = background + c
        label = "accepted" if abs(c) >= accept_cutoff else "rejected"
        images.append(ProfileImage(pixels, mask, label,
                                   meta={"id": i, "contrast": c,
                                         "background": background, "seed": seed}))
    return images


# ---------------------------------------------------------------------------
# The contrast classifier
# ---------------------------------------------------------------------------

def contrast_model(image: ProfileImage) -> float:
    """Squared difference of mean person value and mean background value."""
    per = image.person_mask
    return float((image.pixels[per].mean() - image.pixels[~per].mean()) ** 2)


def make_contrast_model(person_mask: np.ndarray) -> Model:
    """The contrast classifier as a differentiable model over flat images."""
    per = np.asarray(person_mask, dtype=bool).reshape(-1)
    n_per = int(per.sum())
    n_back = per.size - n_per
    if not (n_per and n_back):
        raise BadDims("mask must be nonempty on both sides")

    def ev(X):
        mp = X[:, per].mean(axis=1)
        mb = X[:, ~per].mean(axis=1)
        return (mp - mb) ** 2

    def grad(x):
        m = x[per].mean() - x[~per].mean()
        return np.where(per, 2.0 * m / n_per, -2.0 * m / n_back)

    return Model(id="contrast", dim=per.size, eval_batch=ev, analytic_gradient=grad,
                 meta={"family": "contrast", "person_mask": per,
                       "smoothgrad_analytic": lambda x, sigma: grad(x)})


def gradient_methods_analytic(model: Model, x: np.ndarray) -> dict:
    """Closed forms: SG equals VG, and IG (all-zeros baseline) is VG at x/2."""
    x = np.asarray(x, dtype=float).reshape(-1)
    vg = model.gradient(x)
    return {"vg": vg, "sg": vg.copy(), "ig": model.gradient(0.5 * x)}


def threshold_sweep(dataset) -> tuple:
    """Best accept-iff-f>=lambda threshold: max accuracy, ties to smallest lambda."""
    scores = np.array([contrast_model(img) for img in dataset])
    labels = np.array([img.label == "accepted" for img in dataset])
    distinct = np.unique(scores)
    candidates = [distinct[0] - 1.0]
    candidates += [0.5 * (a + b) for a, b in zip(distinct[:-1], distinct[1:])]
    candidates += [distinct[-1] + 1.0]
    best_lam, best_acc = None, -1.0
    for lam in candidates:
        acc = float(np.mean((scores >= lam) == labels))
        if acc > best_acc:
            best_lam, best_acc = float(lam), acc
    return best_lam, best_acc


# ---------------------------------------------------------------------------
# Recourse checking with the gray-level budget
# ---------------------------------------------------------------------------

def check_recourse_image(model: Model, lam: float, weights: np.ndarray,
                         x: np.ndarray, budget: float = DEFAULT_BUDGET) -> RecourseVerdict:
    """Ray search along the sup-norm-normalized attribution direction."""
    x = np.asarray(x, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    searched = {"budget": budget, "norm": "sup", "flat_tol": FLAT_TOL}

    per = model.meta["person_mask"]
    m0 = float(x[per].mean() - x[~per].mean())
    reach = abs(m0) + 2.0 * budget  # best possible |contrast| within budget
    target_nonempty = reach ** 2 >= lam or model.eval(x) >= lam

    if float(np.max(np.abs(w))) <= FLAT_TOL:
        searched["branch"] = "flat"
        if model.eval(x) >= lam:
            return RecourseVerdict("satisfied", x, witness=x.copy(), step=0.0,
                                   searched=searched)
        return RecourseVerdict("violated" if target_nonempty else "vacuous", x,
                               searched=searched)

    direction = w / float(np.max(np.abs(w)))
    searched["branch"] = "ray-search"
    geom = budget * 2.0 ** (-np.linspace(20, 0, GEOM_POINTS))
    unif = budget * np.arange(1, UNIFORM_POINTS + 1) / UNIFORM_POINTS
    for t in np.unique(np.concatenate([geom, unif])):
        y = x + t * direction
        if model.eval(y) >= lam:
            return RecourseVerdict("satisfied", x, witness=y, step=float(t),
                                   searched=searched)
    return RecourseVerdict("violated" if target_nonempty else "vacuous", x,
                           searched=searched)


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

EXPERIMENT_METHODS = ("gradient", "lime_manual", "lime_auto", "shap")


@dataclass
class ExperimentReport:
    lambda_thresh: float
    accuracy: float
    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ConfigError("accuracy must lie in [0, 1]")

    def to_json_dict(self) -> dict:
        return {"lambda_thresh": self.lambda_thresh, "accuracy": self.accuracy,
                "meta": self.meta, "rows": self.rows}

    def to_markdown(self) -> str:
        methods = self.meta.get("methods", EXPERIMENT_METHODS)
        head = "| image | label | contrast | " + " | ".join(methods) + " |"
        sep = "|" + "---|" * (3 + len(methods))
        lines = [
            f"Threshold: {self.lambda_thresh} (accuracy {self.accuracy})", "",
            head, sep,
        ]
        for row in self.rows:
            cells = []
            for m in methods:
                entry = row["methods"][m]
                tag = "flat, " if entry["flat"] else ""
                cells.append(f"{tag}{entry['verdict']}")
            lines.append(f"| {row['id']} | {row['label']} | {row['contrast']} | "
                         + " | ".join(cells) + " |")
        return "\n".join(lines)


def run_experiment(dataset, config: Optional[attr.MethodConfig] = None,
                   methods=EXPERIMENT_METHODS, budget: float = DEFAULT_BUDGET,
                   image_ids=None) -> ExperimentReport:
    """Attributions plus recourse verdicts for every image and method."""
    # 4000 LIME draws keep finite-sample directions contrast-neutral on flat images
    config = config or attr.MethodConfig(lime=attr.LimeConfig(samples=4000))
    lam, acc = threshold_sweep(dataset)
    rows = []
    for img in dataset:
        if image_ids is not None and img.meta["id"] not in image_ids:
            continue
        model = make_contrast_model(img.person_mask)
        x = img.pixels.reshape(-1)
        per_method = {}
        for method in methods:
            if method == "gradient":
                weights = gradient_methods_analytic(model, x)["vg"]
            elif method == "lime_manual":
                cfg = attr.LimeConfig(segments=("manual", img.person_mask),
                                      samples=config.lime.samples,
                                      kernel_width=config.lime.kernel_width,
                                      seed=config.lime.seed, ridge=config.lime.ridge)
                _, a = attr.lime_image(model, img.pixels, cfg)
                weights = a.weights
            elif method == "lime_auto":
                cfg = attr.LimeConfig(segments="grid8",
                                      samples=config.lime.samples,
                                      kernel_width=config.lime.kernel_width,
                                      seed=config.lime.seed, ridge=config.lime.ridge)
                _, a = attr.lime_image(model, img.pixels, cfg)
                weights = a.weights
            elif method == "shap":
                coalitions = config.shap.coalitions
                if coalitions == "exact" and model.dim > attr.EXACT_SHAP_CAP:
                    coalitions = 256
                cfg = attr.ShapConfig(baseline=0.0, coalitions=coalitions,
                                      seed=config.shap.seed)
                weights = attr.kernel_shap(model, x, cfg).weights
            else:
                raise ConfigError(f"unknown experiment method {method!r}")
            verdict = check_recourse_image(model, lam, weights, x, budget)
            per_method[method] = {
                "flat": bool(np.max(np.abs(weights)) <= FLAT_TOL),
                "verdict": verdict.status,
                "min_weight": float(weights.min()),
                "max_weight": float(weights.max()),
            }
        rows.append({"id": img.meta["id"], "label": img.label,
                     "contrast": img.meta["contrast"], "methods": per_method})
    rows.sort(key=lambda r: r["id"])
    meta = {"budget_gray_levels": budget, "budget_norm": "sup",
            "methods": list(methods), "shap_baseline": "all-zeros",
            "lime_fused_value": 0.0, "rng": attr.RNG_NOTE,
            "reference_lambda_original_asset": REFERENCE_LAMBDA}
    return ExperimentReport(lambda_thresh=lam, accuracy=acc, rows=rows, meta=meta)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _diverging_rgb(values: np.ndarray) -> np.ndarray:
    """Blue -> mid-gray -> red over [-1, 1]; zero maps to neutral gray."""
    v = np.clip(values, -1.0, 1.0)
    gray = np.array([128.0, 128.0, 128.0])
    red = np.array([255.0, 0.0, 0.0])
    blue = np.array([0.0, 0.0, 255.0])
    out = np.empty(v.shape + (3,))
    pos = v >= 0
    out[pos] = gray[None, :] + v[pos, None] * (red - gray)[None, :]
    out[~pos] = gray[None, :] + (-v[~pos, None]) * (blue - gray)[None, :]
    return np.round(out).astype(np.uint8)


def render_saliency(weights: np.ndarray, dims: tuple, path) -> None:
    """Signed saliency map: symmetric scale about 0 at max |weight|.

    Writes PNG via Pillow (byte-identical across runs); a .ppm suffix writes
    binary P6 instead.
    """
    h, w = dims
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.size != h * w:
        raise BadDims(f"{weights.size} weights cannot fill {h}x{w}")
    vmax = float(np.max(np.abs(weights)))
    scaled = weights / vmax if vmax > 0 else np.zeros_like(weights)
    rgb = _diverging_rgb(scaled.reshape(h, w).reshape(-1)).reshape(h, w, 3)
    path = str(path)
    if path.endswith(".ppm"):
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(rgb.tobytes())
        return
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def render_image(pixels: np.ndarray, path) -> None:
    """Grayscale PNG of an image's raw pixels (clamped to [0, 255])."""
    from PIL import Image

    data = np.clip(np.asarray(pixels, dtype=float), 0.0, 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(str(path), format="PNG")
