"""Attribution methods and projection-based counterfactual attributions.

Gradient-flavored methods (vanilla gradient, SmoothGrad, Integrated
Gradients), perturbation methods (LIME over superpixels, kernel SHAP), and
closest-point projections onto sufficient-utility sets.  All randomized
operations take explicit 64-bit seeds; the generator is numpy's default
PCG64, recorded in result metadata so runs reproduce across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Attribution, Model, RecourseProblem, as_point
from .errors import (
    ConfigError,
    DegenerateDesign,
    DomainError,
    EmptyFamily,
    UnsupportedModel,
)

RNG_NOTE = "numpy default_rng (PCG64)"


# ---------------------------------------------------------------------------
# Method configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothGradConfig:
    sigma: float = 0.1
    samples: int = 2000
    seed: int = 0
    mode: str = "mc"  # "mc" | "analytic"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("smoothgrad sigma must be positive")
        if self.samples < 1:
            raise ConfigError("smoothgrad needs at least one sample")


@dataclass(frozen=True)
class IGConfig:
    baseline: Union[float, Sequence[float]] = 0.0
    steps: int = 512

    def __post_init__(self):
        if self.steps < 2:
            raise ConfigError("integrated gradients needs steps >= 2")


@dataclass(frozen=True)
class LimeConfig:
    segments: object = "grid8"  # label array | "grid8" | ("grid", n) | ("manual", mask)
    samples: int = 1000
    kernel_width: float = 4.0  # near-uniform: keeps coarse-segment fits faithful
    seed: int = 0
    ridge: float = 1e-6

    def __post_init__(self):
        if self.kernel_width <= 0:
            raise ConfigError("lime kernel width must be positive")
        if self.ridge < 0:
            raise ConfigError("lime ridge must be nonnegative")


@dataclass(frozen=True)
class ShapConfig:
    baseline: Union[float, Sequence[float]] = 0.0
    coalitions: object = "exact"  # "exact" | positive int
    seed: int = 0


@dataclass(frozen=True)
class MethodConfig:
    smoothgrad: SmoothGradConfig = SmoothGradConfig()
    ig: IGConfig = IGConfig()
    lime: LimeConfig = LimeConfig()
    shap: ShapConfig = ShapConfig()


# ---------------------------------------------------------------------------
# Gradient-flavored methods
# ---------------------------------------------------------------------------

def vanilla_gradient(model: Model, x) -> Attribution:
    """phi(x) = grad f(x): analytic when registered, central differences otherwise."""
    p = as_point(x, model.dim)
    return Attribution(p, model.gradient(p), {"method": "vanilla_gradient"})


def smoothgrad(model: Model, x, cfg: SmoothGradConfig) -> Attribution:
    """Monte Carlo mean of grad f over N(x, sigma^2 I), or the closed form."""
    p = as_point(x, model.dim)
    if cfg.mode == "analytic":
        fn = model.meta.get("smoothgrad_analytic")
        if fn is None:
            raise UnsupportedModel(f"no analytic smoothgrad for {model.id!r}")
        return Attribution(p, fn(p, cfg.sigma),
                           {"method": "smoothgrad", "mode": "analytic"})
    rng = np.random.default_rng(cfg.seed)
    total = np.zeros(model.dim)
    clamped = 0
    for _ in range(cfg.samples):
        q = p + rng.normal(0.0, cfg.sigma, size=model.dim)
        if not model.domain.contains(q):
            q2 = model.domain.clamp(q)
            if not model.domain.contains(q2):
                raise DomainError(f"smoothgrad sample {q} cannot be clamped into domain")
            q, clamped = q2, clamped + 1
        total += model.gradient(q)
    return Attribution(p, total / cfg.samples,
                       {"method": "smoothgrad", "mode": "mc", "seed": cfg.seed,
                        "sigma": cfg.sigma, "samples": cfg.samples,
                        "clamped": clamped, "rng": RNG_NOTE})


def integrated_gradients(model: Model, x, cfg: IGConfig) -> Attribution:
    """(x - x0) times the trapezoid-rule path integral of the gradient."""
    p = as_point(x, model.dim)
    x0 = as_point(np.broadcast_to(np.asarray(cfg.baseline, dtype=float), (model.dim,)).copy()
                  if np.ndim(cfg.baseline) == 0 else cfg.baseline, model.dim)
    alphas = np.linspace(0.0, 1.0, cfg.steps)
    grads = np.empty((cfg.steps, model.dim))
    for j, a in enumerate(alphas):
        q = x0 + a * (p - x0)
        if not model.domain.contains(q):
            raise DomainError(f"integration path exits domain at alpha={a}")
        grads[j] = model.gradient(q)
    w = np.full(cfg.steps, 1.0 / (cfg.steps - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    integral = w @ grads
    return Attribution(p, (p - x0) * integral,
                       {"method": "integrated_gradients", "steps": cfg.steps,
                        "baseline": x0.tolist()})


# ---------------------------------------------------------------------------
# LIME over superpixels
# ---------------------------------------------------------------------------

def grid_segments(shape: tuple, n: int) -> np.ndarray:
    """Deterministic n x n block segmentation of an image shape."""
    h, w = shape
    rows = np.minimum(np.arange(h) * n // h, n - 1)
    cols = np.minimum(np.arange(w) * n // w, n - 1)
    return rows[:, None] * n + cols[None, :]


def two_segment_labels(person_mask: np.ndarray) -> np.ndarray:
    """Manual split: segment 0 = person, segment 1 = background."""
    return np.where(np.asarray(person_mask, dtype=bool), 0, 1)


def _resolve_segments(spec, shape) -> np.ndarray:
    if isinstance(spec, np.ndarray):
        labels = spec
    elif spec == "grid8":
        labels = grid_segments(shape, 8)
    elif isinstance(spec, tuple) and spec[0] == "grid":
        labels = grid_segments(shape, int(spec[1]))
    elif isinstance(spec, tuple) and spec[0] == "manual":
        labels = two_segment_labels(spec[1])
    else:
        raise ConfigError(f"unknown segmentation spec {spec!r}")
    labels = np.asarray(labels)
    if labels.shape != shape:
        raise ConfigError("segmentation labels must cover every pixel exactly once")
    # compress ids to 0..S-1 preserving order
    _, compressed = np.unique(labels, return_inverse=True)
    return compressed.reshape(shape)


def lime_image(model: Model, image: np.ndarray, cfg: LimeConfig):
    """Weighted ridge regression of f on binary superpixel masks.

    Masked-off segments are fused to 0 (matching the all-zeros baseline used
    by the gradient methods).  Returns (per-segment weights, pixel-level
    Attribution broadcast over segments).
    """
    image = np.asarray(image, dtype=float)
    labels = _resolve_segments(cfg.segments, image.shape)
    n_seg = int(labels.max()) + 1
    if cfg.samples < n_seg + 1:
        raise DegenerateDesign(
            f"{cfg.samples} samples cannot identify {n_seg} segments")

    if n_seg <= 20 and (1 << n_seg) <= cfg.samples:
        # full-factorial balanced design: every mask state with equal multiplicity
        states = ((np.arange(1 << n_seg)[:, None] >> np.arange(n_seg)) & 1).astype(float)
        Z = np.tile(states, (cfg.samples // (1 << n_seg), 1))
        design = "balanced"
    else:
        # antithetic pairs (mask, complement): exact column balance, and the
        # noise of complement-symmetric targets cancels out of the fit
        rng = np.random.default_rng(cfg.seed)
        half = rng.integers(0, 2, size=(cfg.samples // 2, n_seg)).astype(float)
        Z = np.concatenate([half, 1.0 - half])
        design = "antithetic"
    n_rows = Z.shape[0]
    flat = image.reshape(-1)
    seg_of_pixel = labels.reshape(-1)
    masks_pix = Z[:, seg_of_pixel]                    # (n, pixels)
    ys = model.values(masks_pix * flat[None, :])

    D = 1.0 - Z.mean(axis=1)
    w = np.exp(-(D ** 2) / cfg.kernel_width ** 2)
    A = np.concatenate([np.ones((n_rows, 1)), Z], axis=1)
    if np.linalg.matrix_rank(A) < n_seg + 1:
        raise DegenerateDesign(f"rank-deficient design over {n_seg} segments")
    AW = A * w[:, None]
    lhs = A.T @ AW
    lhs[1:, 1:] += cfg.ridge * np.eye(n_seg)          # intercept unpenalized
    beta = np.linalg.solve(lhs, AW.T @ ys)
    seg_weights = beta[1:]
    pixel_map = seg_weights[seg_of_pixel].reshape(image.shape)
    attribution = Attribution(flat, pixel_map.reshape(-1),
                              {"method": "lime", "segments": n_seg,
                               "samples": n_rows, "design": design,
                               "seed": cfg.seed,
                               "kernel_width": cfg.kernel_width,
                               "ridge": cfg.ridge, "fused_value": 0.0,
                               "rng": RNG_NOTE})
    return seg_weights, attribution


# ---------------------------------------------------------------------------
# Kernel SHAP
# ---------------------------------------------------------------------------

EXACT_SHAP_CAP = 20


def _composite_values(model: Model, x: np.ndarray, baseline: np.ndarray,
                      bits: np.ndarray) -> np.ndarray:
    return model.values(np.where(bits, x[None, :], baseline[None, :]))


def shapley_exact_enumeration(model: Model, x, baseline) -> np.ndarray:
    """Direct Shapley values by subset enumeration (independent oracle)."""
    p = as_point(x, model.dim)
    b = as_point(np.broadcast_to(np.asarray(baseline, dtype=float), (model.dim,)).copy()
                 if np.ndim(baseline) == 0 else baseline, model.dim)
    d = model.dim
    if d > EXACT_SHAP_CAP:
        raise ConfigError(f"exact enumeration capped at d <= {EXACT_SHAP_CAP}")
    masks = np.arange(1 << d, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    V = _composite_values(model, p, b, bits)
    size = bits.sum(axis=1)
    fact = np.array([math.factorial(k) for k in range(d + 1)], dtype=float)
    w_by_size = fact[:d] * fact[d - 1 - np.arange(d)] / fact[d]
    phi = np.zeros(d)
    for i in range(d):
        no_i = masks[~bits[:, i]]
        gains = V[no_i | (1 << i)] - V[no_i]
        phi[i] = float(np.sum(w_by_size[size[no_i]] * gains))
    return phi


def _shap_kernel_weight(d: int, s: np.ndarray) -> np.ndarray:
    comb = np.array([math.comb(d, k) for k in range(d + 1)], dtype=float)
    return (d - 1.0) / (comb[s] * s * (d - s))


def kernel_shap(model: Model, x, cfg: ShapConfig) -> Attribution:
    """Shapley values via kernel-weighted least squares.

    Full and empty coalitions are pinned as hard constraints (efficiency and
    intercept), not infinite weights.  coalitions="exact" enumerates all
    2^d - 2 proper coalitions (d <= 20); an integer samples that many.
    """
    p = as_point(x, model.dim)
    b = as_point(np.broadcast_to(np.asarray(cfg.baseline, dtype=float), (model.dim,)).copy()
                 if np.ndim(cfg.baseline) == 0 else cfg.baseline, model.dim)
    d = model.dim
    v_empty = float(model.values(b[None, :])[0])
    v_full = float(model.values(p[None, :])[0])
    delta = v_full - v_empty
    if d == 1:
        return Attribution(p, np.array([delta]), {"method": "kernel_shap", "d": 1})

    if cfg.coalitions == "exact":
        if d > EXACT_SHAP_CAP:
            raise ConfigError(f"exact coalitions capped at d <= {EXACT_SHAP_CAP}; sample instead")
        masks = np.arange(1, (1 << d) - 1, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
        w = _shap_kernel_weight(d, bits.sum(axis=1))
        meta_mode = "exact"
    else:
        n = int(cfg.coalitions)
        if n < 2:
            raise DegenerateDesign("kernel shap needs at least two sampled coalitions")
        rng = np.random.default_rng(cfg.seed)
        sizes = np.arange(1, d)
        size_w = (d - 1.0) / (sizes * (d - sizes))
        size_w /= size_w.sum()
        chosen = rng.choice(sizes, size=n, p=size_w)
        bits = np.zeros((n, d), dtype=bool)
        for r, s in enumerate(chosen):
            bits[r, rng.choice(d, size=int(s), replace=False)] = True
        # the sampling measure is the Shapley kernel, so rows weigh equally
        w = np.ones(n)
        meta_mode = "sampled"

    V = _composite_values(model, p, b, bits)
    Z = bits.astype(float)
    # eliminate phi_d with the efficiency constraint, intercept pinned at v(empty)
    y_adj = V - v_empty - delta * Z[:, -1]
    X = Z[:, :-1] - Z[:, -1:]
    sw = np.sqrt(w)
    sol, *_ = np.linalg.lstsq(X * sw[:, None], y_adj * sw, rcond=None)
    phi = np.concatenate([sol, [delta - sol.sum()]])
    return Attribution(p, phi, {"method": "kernel_shap", "mode": meta_mode,
                                "seed": cfg.seed, "rng": RNG_NOTE,
                                "baseline": b.tolist()})


# ---------------------------------------------------------------------------
# Set families and counterfactual projections
# ---------------------------------------------------------------------------

@dataclass
class ProjectionResult:
    point: np.ndarray
    non_unique: bool = False
    description: str = ""


class Halfspace:
    """{ y : normal . y >= offset }; projections are unique."""

    def __init__(self, normal, offset: float = 0.0):
        self.normal = np.asarray(normal, dtype=float)
        if not np.any(self.normal):
            raise ConfigError("halfspace needs a nonzero normal")
        self.offset = float(offset)

    def membership(self, y) -> bool:
        return float(self.normal @ np.asarray(y, float)) >= self.offset

    def project(self, x) -> ProjectionResult:
        x = np.asarray(x, dtype=float)
        gap = self.offset - float(self.normal @ x)
        if gap <= 0:
            return ProjectionResult(x.copy())
        return ProjectionResult(x + gap / float(self.normal @ self.normal) * self.normal)


class OutsideBall:
    """{ y : ||y - center|| >= radius }; non-unique exactly at the center."""

    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)

    def membership(self, y) -> bool:
        return float(np.linalg.norm(np.atleast_1d(np.asarray(y, float)) - self.center)) >= self.radius

    def project(self, x) -> ProjectionResult:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.radius <= 0:
            return ProjectionResult(x.copy())
        v = x - self.center
        n = float(np.linalg.norm(v))
        if n >= self.radius:
            return ProjectionResult(x.copy())
        if n == 0.0:
            y = self.center.copy()
            y[0] += self.radius
            return ProjectionResult(y, non_unique=True,
                                    description=f"every point of the radius-{self.radius} sphere")
        return ProjectionResult(self.center + (self.radius / n) * v)


class Shell:
    """{ y : ||y|| >= radius } built per x as radius = ||x|| + margin."""

    def __init__(self, radius: float, margin: float = 0.0):
        self.radius = float(radius)
        self.margin = float(margin)

    def membership(self, y) -> bool:
        return float(np.linalg.norm(y)) >= self.radius

    def project(self, x) -> ProjectionResult:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = float(np.linalg.norm(x))
        if n >= self.radius:
            return ProjectionResult(x.copy())
        if n == 0.0:
            y = np.zeros_like(x)
            y[0] = self.radius
            return ProjectionResult(y, non_unique=True, description="whole sphere")
        return ProjectionResult((self.radius / n) * x)


class SuperlevelConvex:
    """{ y : f(y) >= tau } for a concave f, via bisection plus refinement."""

    def __init__(self, fn: Callable, tau: float, anchor, tol: float = 1e-8):
        self.fn = fn
        self.tau = float(tau)
        self.anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        self.tol = float(tol)
        if self.fn(self.anchor) < self.tau:
            raise ConfigError("anchor must lie inside the superlevel set")

    def membership(self, y) -> bool:
        return float(self.fn(np.asarray(y, float))) >= self.tau

    def _boundary_toward(self, frm: np.ndarray, to: np.ndarray) -> np.ndarray:
        lo, hi = 0.0, 1.0  # fn(frm) < tau <= fn(to)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.fn(frm + mid * (to - frm)) >= self.tau:
                hi = mid
            else:
                lo = mid
        return frm + hi * (to - frm)

    def project(self, x) -> ProjectionResult:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.membership(x):
            return ProjectionResult(x.copy())
        y = self._boundary_toward(x, self.anchor)
        for _ in range(200):
            moved = 0.0
            for i in range(x.size):
                cand = y.copy()
                cand[i] = x[i]
                if self.membership(cand):
                    moved = max(moved, abs(y[i] - x[i]))
                    y = cand
                else:
                    z = self._boundary_toward(cand, y)
                    moved = max(moved, abs(y[i] - z[i]))
                    y = z
            if moved < self.tol:
                break
        return ProjectionResult(y)


class RasterRegion:
    """Marked cells on a regular grid; ties broken by row-major cell index."""

    def __init__(self, mask: np.ndarray, lo, step: float):
        self.mask = np.asarray(mask, dtype=bool)
        self.lo = np.asarray(lo, dtype=float)
        self.step = float(step)
        idx = np.argwhere(self.mask)
        self._centers = self.lo[None, :] + (idx + 0.5) * self.step

    def membership(self, y) -> bool:
        y = np.asarray(y, dtype=float)
        cell = np.floor((y - self.lo) / self.step).astype(int)
        if np.any(cell < 0) or np.any(cell >= np.asarray(self.mask.shape)):
            return False
        return bool(self.mask[tuple(cell)])

    def project(self, x) -> ProjectionResult:
        if self._centers.size == 0:
            raise EmptyFamily("raster region has no marked cells")
        x = np.asarray(x, dtype=float)
        d2 = np.sum((self._centers - x[None, :]) ** 2, axis=1)
        best = float(d2.min())
        hits = np.flatnonzero(d2 == best)
        return ProjectionResult(self._centers[hits[0]].copy(),
                                non_unique=hits.size > 1,
                                description=f"{hits.size} equidistant cells")


SetFamily = Union[Halfspace, OutsideBall, Shell, SuperlevelConvex, RasterRegion]


def counterfactual_projection(family: SetFamily, x) -> ProjectionResult:
    """Closest point of the family to x (per-kind closed form or refinement)."""
    if family is None:
        raise EmptyFamily("no set family")
    return family.project(x)


def sufficient_set_family(problem: RecourseProblem, x) -> SetFamily:
    """U(x) = { y : u_f(x,y) >= tau } for registered model/utility pairs."""
    model, u, tau = problem.model, problem.utility, problem.tau
    family = model.meta.get("family")
    if family == "linear" and u.kind == "class_score":
        return Halfspace(np.asarray(model.meta["beta"]), tau)
    if family == "circle" and u.kind == "class_score":
        return OutsideBall(np.zeros(2), 1.0 + tau)
    if family == "circle_sq" and u.kind == "class_score":
        if 1.0 + tau < 0:
            return OutsideBall(np.zeros(2), 0.0)
        return OutsideBall(np.zeros(2), math.sqrt(1.0 + tau))
    if family == "quad" and u.kind == "class_score":
        return OutsideBall(np.zeros(1), math.sqrt(tau)) if tau > 0 else OutsideBall(np.zeros(1), 0.0)
    if family == "expnorm" and u.kind == "ratio" and u.ratio_orientation == "y_over_x":
        # e^{b(||y|| - ||x||)} >= tau  <=>  ||y|| >= ||x|| + ln(tau)/b
        b = model.meta["b"]
        margin = math.log(tau) / b
        radius = float(np.linalg.norm(as_point(x, model.dim))) + margin
        return Shell(radius, margin)
    raise UnsupportedModel(
        f"no sufficient-set family for {model.id!r} with utility {u.name!r}")


def projection_attribution(problem: RecourseProblem, family_builder: Callable, x) -> Attribution:
    """phi(x) = P_{U(x)}(x) - x with the family's tie-break on non-uniqueness."""
    p = as_point(x, problem.model.dim)
    family = family_builder(p)
    res = counterfactual_projection(family, p)
    return Attribution(p, res.point - p,
                       {"method": "projection", "non_unique": res.non_unique,
                        "family": type(family).__name__})


def projection_evaluator(problem: RecourseProblem, family_builder: Optional[Callable] = None):
    """verify-compatible evaluator for the projection attribution."""
    builder = family_builder or (lambda p: sufficient_set_family(problem, p))

    def ev(x):
        return projection_attribution(problem, builder, x).weights

    return ev


# ---------------------------------------------------------------------------
# Abstract-feature workaround attribution
# ---------------------------------------------------------------------------

def abstract_feature_attribution(model: Model, x) -> Attribution:
    """Feature-space attribution for models registered with a linearizing map.

    For the circle classifier expressed as beta . g(x) the recipe returns a
    5-vector that stays nonzero off the decision boundary, pointing users to
    higher-level actions (grow the norm) where the raw 2D direction vanishes.
    """
    fn = model.meta.get("feature_attribution")
    if fn is None:
        raise UnsupportedModel(f"{model.id!r} has no feature-space attribution recipe")
    p = as_point(x, model.dim)
    return Attribution(p, fn(p), {"method": "abstract_feature"})


def gradient_evaluator(model: Model):
    def ev(x):
        return vanilla_gradient(model, x).weights
    return ev


def smoothgrad_evaluator(model: Model, cfg: SmoothGradConfig):
    def ev(x):
        return smoothgrad(model, x, cfg).weights
    return ev


def ig_evaluator(model: Model, cfg: IGConfig):
    def ev(x):
        return integrated_gradients(model, x, cfg).weights
    return ev
