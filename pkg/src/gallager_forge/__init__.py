"""Gallager error exponents, the Arimoto algorithm and natural type selection
for discrete memoryless channels."""

__version__ = "0.1.0"

from .dmc_core import (  # noqa: E402
    Channel,
    Distribution,
    EmpiricalType,
    ExponentParams,
    GallagerError,
    bsc,
    identity_channel,
    load_channel,
    type_of,
    validate_channel,
)
from .exponents import (  # noqa: E402
    conditional_e0,
    conditional_e0_general,
    e0_decomposition_minimizer,
    gallager_e0,
    kl_divergence,
    mutual_information,
    per_letter,
)
from .arimoto import capacity_update, phi_step, q_update, solve, solve_capacity  # noqa: E402

__all__ = [
    "Channel", "Distribution", "EmpiricalType", "ExponentParams", "GallagerError",
    "bsc", "identity_channel", "load_channel", "type_of", "validate_channel",
    "conditional_e0", "conditional_e0_general", "e0_decomposition_minimizer", "gallager_e0",
    "kl_divergence", "mutual_information", "per_letter",
    "capacity_update", "phi_step", "q_update", "solve", "solve_capacity",
]
