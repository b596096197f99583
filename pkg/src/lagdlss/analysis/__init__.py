"""Post-hoc verification: estimates, inequalities, weak form, consistency, convergence."""

from .consistency import AffineZMap, CosineMap, StationaryMap, consistency_residual, consistency_study
from .convergence import OrderFit, StudyResult, discontinuous_study, fit_order, spatial_study, temporal_study
from .estimates import (
    EstimateReport,
    check_dissipation_estimates,
    check_entropy_decay_steps,
    check_structure,
    entropy_decay_fit,
)
from .tv import tv_sqrt_derivative
from .weak import SpatialTest, TemporalTest, weak_residual

__all__ = [
    "AffineZMap", "CosineMap", "StationaryMap", "consistency_residual", "consistency_study",
    "OrderFit", "StudyResult", "discontinuous_study", "fit_order", "spatial_study", "temporal_study",
    "EstimateReport", "check_dissipation_estimates", "check_entropy_decay_steps", "check_structure",
    "entropy_decay_fit", "tv_sqrt_derivative", "SpatialTest", "TemporalTest", "weak_residual",
]
