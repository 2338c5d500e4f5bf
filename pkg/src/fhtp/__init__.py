"""First-hitting-time probabilities of drift-diffusion models.

The moving-boundary backward equation is mapped to the unit square, the
constant-drift solution is subtracted to remove the corner singularity, and
the smooth remainder is computed with a space-time minimal residual method.
Solutions can be interpolated over model parameters on a Smolyak grid.
"""
from .geometry import (
    CollapsingBoundaries,
    ConstantBoundaries,
    FPProblem,
    TransformedProblem,
    pullback_point,
    solve_time_change,
    to_tilde,
    transform_drift,
)
from .models import FAMILIES, ModelFamily, ParameterBox, get_family, instantiate, physical_params
from .oracles import first_hitting_prob

__all__ = [
    "CollapsingBoundaries",
    "ConstantBoundaries",
    "FAMILIES",
    "FPProblem",
    "ModelFamily",
    "ParameterBox",
    "TransformedProblem",
    "first_hitting_prob",
    "get_family",
    "instantiate",
    "physical_params",
    "pullback_point",
    "solve_time_change",
    "to_tilde",
    "transform_drift",
]
__version__ = "0.1.0"
