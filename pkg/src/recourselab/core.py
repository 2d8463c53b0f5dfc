"""Problem definitions shared by every other module.

A :class:`RecourseProblem` bundles a model f, a utility specification u_f, a
threshold tau, a budget delta and a constraint spec C.  The attainable set is

    A(x) = { y : ||x - y||_2 <= delta, y in C(x) }

and the target set is T(x) = { y in A(x) : u_f(x, y) >= tau }.

All types are immutable after construction; every operation here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivisionByZero, DomainError

_DIRECTION_TOL = 1e-9  # angular tolerance for Directions membership


def as_point(x, dim: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.shape != (dim,):
        raise ConfigError(f"expected point of dimension {dim}, got shape {p.shape}")
    return p


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Region descriptor: all of R^d, R^d minus the origin, or a box."""

    kind: str  # "all" | "punctured" | "box"
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("all", "punctured", "box"):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if self.kind == "box" and (self.lo is None or self.hi is None):
            raise ConfigError("box domain needs lo/hi bounds")

    def contains(self, x: np.ndarray) -> bool:
        if not np.all(np.isfinite(x)):
            return False
        if self.kind == "all":
            return True
        if self.kind == "punctured":
            return bool(np.any(x != 0.0))
        return bool(np.all(x >= np.asarray(self.lo)) and np.all(x <= np.asarray(self.hi)))

    def contains_batch(self, X: np.ndarray) -> np.ndarray:
        ok = np.all(np.isfinite(X), axis=-1)
        if self.kind == "all":
            return ok
        if self.kind == "punctured":
            return ok & np.any(X != 0.0, axis=-1)
        return ok & np.all(X >= np.asarray(self.lo), axis=-1) & np.all(X <= np.asarray(self.hi), axis=-1)

    def clamp(self, x: np.ndarray) -> np.ndarray:
        if self.kind != "box":
            return x
        return np.clip(x, np.asarray(self.lo), np.asarray(self.hi))


DOMAIN_ALL = Domain("all")
DOMAIN_PUNCTURED = Domain("punctured")


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Model:
    """A scalar-valued model f: R^d -> R with optional analytic gradient.

    ``eval_batch`` takes an (n, d) array and returns an (n,) array; ``eval``
    is the single-point view.  ``range_excludes_zero`` marks models whose
    value is bounded away from 0 on their domain (gates Ratio utilities).
    """

    id: str
    dim: int
    eval_batch: Callable[[np.ndarray], np.ndarray]
    analytic_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Domain = DOMAIN_ALL
    range_excludes_zero: bool = False
    meta: dict = field(default_factory=dict)

    def eval(self, x) -> float:
        p = as_point(x, self.dim)
        if not self.domain.contains(p):
            raise DomainError(f"{self.id}: point {p} outside domain")
        v = float(self.eval_batch(p[None, :])[0])
        if not math.isfinite(v):
            raise DomainError(f"{self.id}: non-finite value at {p}")
        return v

    def __call__(self, x) -> float:
        return self.eval(x)

    def values(self, X: np.ndarray) -> np.ndarray:
        """Vectorized evaluation without domain checks (caller filters)."""
        return self.eval_batch(np.asarray(X, dtype=float))

    def gradient(self, x) -> np.ndarray:
        p = as_point(x, self.dim)
        if not self.domain.contains(p):
            raise DomainError(f"{self.id}: point {p} outside domain")
        if self.analytic_gradient is not None:
            return np.asarray(self.analytic_gradient(p), dtype=float)
        return finite_difference_gradient(self.eval, p)


def finite_difference_gradient(f: Callable, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences with per-coordinate step rel_step * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UtilitySpec:
    """User utility u_f(x, y) depending on (x, y) only through (f(x), f(y))."""

    kind: str  # "class_score" | "difference" | "ratio" | "custom"
    ratio_orientation: str = "y_over_x"  # or "x_over_y"
    custom_fn: Optional[Callable] = None  # vectorized (fx, fy) -> value
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("class_score", "difference", "ratio", "custom"):
            raise ConfigError(f"unknown utility kind {self.kind!r}")
        if self.kind == "ratio" and self.ratio_orientation not in ("y_over_x", "x_over_y"):
            raise ConfigError(f"unknown ratio orientation {self.ratio_orientation!r}")
        if self.kind == "custom" and self.custom_fn is None:
            raise ConfigError("custom utility needs a function")
        if not self.name:
            object.__setattr__(self, "name", self.kind if self.kind != "ratio"
                               else f"ratio_{self.ratio_orientation}")

    def value(self, fx: float, fy: float) -> float:
        if self.kind == "class_score":
            return fy
        if self.kind == "difference":
            return fy - fx
        if self.kind == "ratio":
            num, den = (fy, fx) if self.ratio_orientation == "y_over_x" else (fx, fy)
            if den == 0.0:
                raise DivisionByZero(f"ratio utility with zero denominator f = {den}")
            return num / den
        return float(self.custom_fn(fx, fy))

    def value_batch(self, fx, fy) -> np.ndarray:
        fx = np.asarray(fx, dtype=float)
        fy = np.asarray(fy, dtype=float)
        if self.kind == "class_score":
            return np.broadcast_to(fy, np.broadcast_shapes(fx.shape, fy.shape)).copy()
        if self.kind == "difference":
            return fy - fx
        if self.kind == "ratio":
            num, den = (fy, fx) if self.ratio_orientation == "y_over_x" else (fx, fy)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = num / den
            return out
        return np.asarray(self.custom_fn(fx, fy), dtype=float)

    # -- constructors ---------------------------------------------------------------

    @staticmethod
    def class_score() -> "UtilitySpec":
        return UtilitySpec("class_score")

    @staticmethod
    def difference() -> "UtilitySpec":
        return UtilitySpec("difference")

    @staticmethod
    def ratio(orientation: str = "y_over_x") -> "UtilitySpec":
        return UtilitySpec("ratio", ratio_orientation=orientation)

    @staticmethod
    def custom(fn: Callable, name: str) -> "UtilitySpec":
        return UtilitySpec("custom", custom_fn=fn, name=name)

    @staticmethod
    def flip() -> "UtilitySpec":
        """Class-flip utility: 1 when sign(f) changes (>= 0 vs < 0), else 0."""

        def _flip(fx, fy):
            return np.where((np.asarray(fx) >= 0.0) != (np.asarray(fy) >= 0.0), 1.0, 0.0)

        return UtilitySpec("custom", custom_fn=_flip, name="flip")


def make_utility(name: str) -> UtilitySpec:
    """Utility from a config-file name."""
    table = {
        "class_score": UtilitySpec.class_score,
        "difference": UtilitySpec.difference,
        "ratio_y_over_x": lambda: UtilitySpec.ratio("y_over_x"),
        "ratio_x_over_y": lambda: UtilitySpec.ratio("x_over_y"),
        "flip": UtilitySpec.flip,
    }
    if name not in table:
        raise ConfigError(f"unknown utility {name!r}; choose from {sorted(table)}")
    return table[name]()


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintSpec:
    """C(x): Full, Sparse(k) (at most k coordinates change), or Directions(D)."""

    kind: str  # "full" | "sparse" | "directions"
    k: int = 0
    directions: Optional[tuple] = None  # tuple of unit d-vectors

    def __post_init__(self):
        if self.kind not in ("full", "sparse", "directions"):
            raise ConfigError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "sparse" and self.k < 1:
            raise ConfigError("sparse constraint needs k >= 1")
        if self.kind == "directions":
            if not self.directions:
                raise ConfigError("directions constraint needs a nonempty direction set")
            normed = []
            for z in self.directions:
                z = np.asarray(z, dtype=float)
                n = np.linalg.norm(z)
                if n == 0:
                    raise ConfigError("zero vector in direction set")
                normed.append(tuple(z / n))
            object.__setattr__(self, "directions", tuple(normed))

    @staticmethod
    def full() -> "ConstraintSpec":
        return ConstraintSpec("full")

    @staticmethod
    def sparse(k: int) -> "ConstraintSpec":
        return ConstraintSpec("sparse", k=k)

    @staticmethod
    def along(directions) -> "ConstraintSpec":
        return ConstraintSpec("directions", directions=tuple(tuple(map(float, z)) for z in directions))

    def admits(self, x: np.ndarray, y: np.ndarray) -> bool:
        """Membership y in C(x); x in C(x) always holds."""
        if self.kind == "full":
            return True
        if self.kind == "sparse":
            return int(np.sum(y != x)) <= self.k  # exact, no tolerance
        v = y - x
        n = float(np.linalg.norm(v))
        if n == 0.0:
            return True  # alpha = 0
        u = v / n
        return any(float(np.linalg.norm(u - np.asarray(z))) <= _DIRECTION_TOL for z in self.directions)

    def admits_direction(self, direction: np.ndarray) -> bool:
        """Whether moving along a fixed nonzero direction can satisfy C(x)."""
        if self.kind == "full":
            return True
        if self.kind == "sparse":
            return int(np.sum(direction != 0.0)) <= self.k
        u = direction / np.linalg.norm(direction)
        return any(float(np.linalg.norm(u - np.asarray(z))) <= _DIRECTION_TOL for z in self.directions)


# ---------------------------------------------------------------------------
# Problems and attributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecourseProblem:
    """The (f, u_f, tau, delta, C) tuple all decision procedures quantify over."""

    model: Model
    utility: UtilitySpec
    tau: float
    delta: float
    constraint: ConstraintSpec = ConstraintSpec.full()

    def __post_init__(self):
        if not (self.delta > 0):
            raise ConfigError("delta must be positive")
        if self.utility.kind == "ratio" and not self.model.range_excludes_zero:
            raise ConfigError(
                f"ratio utility rejected: range of {self.model.id!r} may include 0 "
                "on its domain")


@dataclass
class Attribution:
    """A d-vector of signed weights at a point x."""

    at: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.at = np.atleast_1d(np.asarray(self.at, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not np.all(np.isfinite(self.weights)):
            raise ConfigError("attribution weights must be finite")


def utility(problem: RecourseProblem, x, y) -> float:
    """u_f(x, y) for the problem's utility kind."""
    fx = problem.model.eval(x)
    fy = problem.model.eval(y)
    return problem.utility.value(fx, fy)


def in_attainable(problem: RecourseProblem, x, y) -> bool:
    """y in A(x): within the delta-ball and admitted by the constraint."""
    xp = as_point(x, problem.model.dim)
    yp = as_point(y, problem.model.dim)
    for p in (xp, yp):
        if not problem.model.domain.contains(p):
            raise DomainError(f"point {p} outside domain of {problem.model.id!r}")
    if float(np.linalg.norm(xp - yp)) > problem.delta:
        return False
    return problem.constraint.admits(xp, yp)


def in_target(problem: RecourseProblem, x, y) -> bool:
    """y in T(x): attainable and u_f(x, y) >= tau."""
    if not in_attainable(problem, x, y):
        return False
    return utility(problem, x, y) >= problem.tau


# ---------------------------------------------------------------------------
# Built-in model registry
# ---------------------------------------------------------------------------

class ModelRegistry:
    """Factory registry keyed by lowercase ASCII identifiers."""

    def __init__(self):
        self._factories: dict[str, Callable[..., Model]] = {}

    def register(self, key: str, factory: Callable[..., Model]):
        if key in self._factories:
            raise ConfigError(f"duplicate model key {key!r}")
        self._factories[key] = factory

    def make(self, key: str, **params) -> Model:
        if key not in self._factories:
            raise ConfigError(f"unknown model {key!r}; registered: {sorted(self._factories)}")
        return self._factories[key](**params)

    def keys(self):
        return sorted(self._factories)

    def __contains__(self, key):
        return key in self._factories


def _quad() -> Model:
    return Model(
        id="quad", dim=1,
        eval_batch=lambda X: X[:, 0] ** 2,
        analytic_gradient=lambda x: np.array([2.0 * x[0]]),
        meta={"family": "quad", "smoothgrad_analytic": lambda x, sigma: np.array([2.0 * x[0]])},
    )


def _gauss() -> Model:
    return Model(
        id="gauss", dim=1,
        eval_batch=lambda X: np.exp(-X[:, 0] ** 2),
        analytic_gradient=lambda x: np.array([-2.0 * x[0] * math.exp(-x[0] ** 2)]),
        range_excludes_zero=True,
        meta={"family": "gauss"},
    )


def _thm1(z1: float, z2: float, delta: float) -> Model:
    """Continuous two-plateau ramp: z1 on |x| < 3d/4, z2 on |x| > 7d/8.

    On the ramp, f(x) = 8 (z2 - z1) / d * |x| + (7 z1 - 6 z2).
    """
    if delta <= 0:
        raise ConfigError("thm1 needs delta > 0")
    a, b = 0.75 * delta, 0.875 * delta
    slope = 8.0 * (z2 - z1) / delta
    icept = 7.0 * z1 - 6.0 * z2

    def ev(X):
        r = np.abs(X[:, 0])
        return np.where(r < a, z1, np.where(r > b, z2, slope * r + icept))

    def grad(x):
        r = abs(x[0])
        if r < a or r > b:
            return np.array([0.0])
        return np.array([slope * math.copysign(1.0, x[0])])

    return Model(id=f"thm1", dim=1, eval_batch=ev, analytic_gradient=grad,
                 meta={"family": "thm1", "z1": z1, "z2": z2, "delta": delta})


def _vee(a: float = 1.0) -> Model:
    """Hinge distance past +-a: f(x) = max(0, |x| - a); disjoint L/R fixture."""
    if a <= 0:
        raise ConfigError("vee needs a > 0")

    def ev(X):
        return np.maximum(0.0, np.abs(X[:, 0]) - a)

    def grad(x):
        if abs(x[0]) <= a:
            return np.array([0.0])
        return np.array([math.copysign(1.0, x[0])])

    return Model(id="vee", dim=1, eval_batch=ev, analytic_gradient=grad,
                 meta={"family": "vee", "a": a})


def _step(z1: float = 0.0, z2: float = 1.0, lo: float = -1.0, hi: float = 1.0) -> Model:
    """Monotone two-plateau ramp from z1 (left of lo) to z2 (right of hi)."""
    if hi <= lo:
        raise ConfigError("step needs hi > lo")
    slope = (z2 - z1) / (hi - lo)

    def ev(X):
        x = X[:, 0]
        return np.where(x < lo, z1, np.where(x > hi, z2, z1 + slope * (x - lo)))

    def grad(x):
        return np.array([slope if lo <= x[0] <= hi else 0.0])

    return Model(id="step", dim=1, eval_batch=ev, analytic_gradient=grad,
                 meta={"family": "step", "z1": z1, "z2": z2, "lo": lo, "hi": hi})


def _circle() -> Model:
    def grad(x):
        n = float(np.linalg.norm(x))
        if n == 0.0:
            raise DomainError("circle gradient undefined at the origin")
        return x / n

    return Model(id="circle", dim=2,
                 eval_batch=lambda X: np.linalg.norm(X, axis=1) - 1.0,
                 analytic_gradient=grad,
                 meta={"family": "circle"})


def _circle_sq() -> Model:
    return Model(id="circle_sq", dim=2,
                 eval_batch=lambda X: np.sum(X ** 2, axis=1) - 1.0,
                 analytic_gradient=lambda x: 2.0 * x,
                 meta={"family": "circle_sq"})


def _expnorm(b: float = 1.0, dim: int = 2) -> Model:
    if b <= 0:
        raise ConfigError("expnorm needs b > 0")

    def grad(x):
        n = float(np.linalg.norm(x))
        return b * math.exp(b * n) * x / n

    return Model(id="expnorm", dim=dim,
                 eval_batch=lambda X: np.exp(b * np.linalg.norm(X, axis=1)),
                 analytic_gradient=grad,
                 domain=DOMAIN_PUNCTURED,
                 range_excludes_zero=True,
                 meta={"family": "expnorm", "b": b})


def _linear(beta) -> Model:
    beta = np.asarray(beta, dtype=float)

    def sg_analytic(x, sigma):
        return beta.copy()

    return Model(id="linear", dim=beta.size,
                 eval_batch=lambda X: X @ beta,
                 analytic_gradient=lambda x: beta.copy(),
                 meta={"family": "linear", "beta": tuple(beta),
                       "smoothgrad_analytic": sg_analytic})


def _abstract_circle() -> Model:
    """The circle-squared classifier with its linearizing feature map.

    f(x) = beta . g(x), g(x) = (x1, x2, x1^2, x2^2, 1), beta = (0,0,1,1,-1),
    so f(x) = ||x||^2 - 1.  The feature map and the feature-space attribution
    recipe live in meta for the abstract-feature workaround.
    """
    beta = (0.0, 0.0, 1.0, 1.0, -1.0)

    def feature_map(x):
        return np.array([x[0], x[1], x[0] ** 2, x[1] ** 2, 1.0])

    def feature_attribution(x):
        f = float(x[0] ** 2 + x[1] ** 2 - 1.0)
        return np.array([-x[0] * f, -x[1] * f, -f, -f, 0.0])

    return Model(id="abstract_circle", dim=2,
                 eval_batch=lambda X: np.sum(X ** 2, axis=1) - 1.0,
                 analytic_gradient=lambda x: 2.0 * x,
                 meta={"family": "circle_sq", "beta": beta,
                       "feature_map": feature_map,
                       "feature_attribution": feature_attribution})


def register_builtin_models() -> ModelRegistry:
    """Registry with every model used by the examples and counterexamples."""
    reg = ModelRegistry()
    reg.register("quad", _quad)
    reg.register("gauss", _gauss)
    reg.register("thm1", _thm1)
    reg.register("vee", _vee)
    reg.register("step", _step)
    reg.register("circle", _circle)
    reg.register("circle_sq", _circle_sq)
    reg.register("expnorm", _expnorm)
    reg.register("linear", _linear)
    reg.register("abstract_circle", _abstract_circle)
    return reg


BUILTIN_MODELS = register_builtin_models()
