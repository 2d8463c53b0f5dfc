"""Semantic exception hierarchy shared by all modules."""


class RecourseLabError(Exception):
    """Base error for this package."""


class DomainError(RecourseLabError, ValueError):
    """A point lies outside a model's declared domain."""


class DivisionByZero(RecourseLabError, ZeroDivisionError):
    """Ratio utility evaluated where the denominator model value is zero."""


class ConfigError(RecourseLabError, ValueError):
    """Invalid configuration, parameters, or problem construction."""


class BadDims(ConfigError):
    """Image or grid dimensions are unusable."""


class UnsupportedModel(RecourseLabError):
    """Exact mode requested for a model/utility pair without closed forms."""


class UnsupportedConstraint(RecourseLabError):
    """Operation not implemented for this constraint kind."""


class NonEmptyO(RecourseLabError):
    """Index-set computation requires the stay-put set O to be empty."""


class KTooLarge(RecourseLabError):
    """Partition search cap exceeded (|K| > 20)."""


class NotSeparated(RecourseLabError):
    """Gap query on interval sets that are not separated."""


class NeedsManualDecomposition(RecourseLabError):
    """L/R/O configuration outside the restricted automatic handling."""


class DegenerateDesign(RecourseLabError):
    """Sampled regression design is rank-deficient or unusable."""


class EmptyFamily(RecourseLabError):
    """Projection requested onto an empty target set family."""
