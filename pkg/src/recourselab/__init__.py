"""Workbench for recourse-sensitive feature attributions.

Core pieces: problem definitions (models, utilities, constraints), exact
interval algebra, the one-dimensional and single-feature decision procedures
for continuous recourse-sensitive attributions, five attribution methods
plus counterfactual projections, numerical verification (recourse scans,
continuity probes, the counterexample battery), and the synthetic
profile-picture experiment.
"""

from .core import (
    Attribution,
    BUILTIN_MODELS,
    ConstraintSpec,
    Model,
    ModelRegistry,
    RecourseProblem,
    UtilitySpec,
    in_attainable,
    in_target,
    make_utility,
    register_builtin_models,
    utility,
)
from .intervals import Interval, IntervalSet, is_separated, min_gap, normalize
from .onedim import LRO, Certificate, compute_lro, construct_attribution, decide, index_sets
from .multidim import AxisRegions, compute_axis_regions, construct_axes_attribution, decide_axes
from .verify import (
    JumpReport,
    RecourseVerdict,
    check_recourse_at,
    continuity_probe,
    run_counterexample_battery,
    scan_recourse,
    zero_detection_probe,
)

__version__ = "0.1.0"
