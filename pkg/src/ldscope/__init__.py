"""Lagrangian descriptor fields for dissipative dynamical systems."""
__version__ = "0.1.0"

from .systems import (  # noqa: E402
    BlowUpError,
    ConfigurationError,
    StateVec,
    SystemSpec,
    eval_vector_field,
    equilibria,
)
from .integrate import (  # noqa: E402
    EscapeRegion,
    IntegratorConfig,
    accumulate_ld,
    integrate_trajectory,
    strobe_map,
)
from .ldfield import GridSpec2D, LDConfig, LDField, compute_ld_field, normalize_field  # noqa: E402

__all__ = [
    "BlowUpError", "ConfigurationError", "StateVec", "SystemSpec", "eval_vector_field",
    "equilibria", "EscapeRegion", "IntegratorConfig", "accumulate_ld", "integrate_trajectory",
    "strobe_map", "GridSpec2D", "LDConfig", "LDField", "compute_ld_field", "normalize_field",
]
