#!/usr/bin/env python3
# 🌀 Eidosian QSD System - Central Package Interface
"""
QSD Forge - quasistationary distributions for killed diffusions.

Computes principal eigenvalues and quasistationary densities of
one-dimensional diffusions with internal killing, decides whether the
process conditioned on survival converges to the QSD or escapes to
infinity, and checks the spectral answer against a Monte Carlo simulation
of the killed process.

Following Eidosian principles of:
- Structure as Control: one module per pipeline stage
- Precision as Style: every result carries its numerical evidence
- Self-Awareness: every artifact records the settings that produced it
"""

import logging
import os

logging.basicConfig(
    level=logging.INFO if not os.environ.get("QSD_FORGE_DEBUG") else logging.DEBUG,
    format="%(asctime)s [%(levelname)8s] %(message)s (%(filename)s:%(lineno)s)",
)
logger = logging.getLogger("qsd_forge")

from .version import VERSION as __version__
from .version import get_version_string

from .errors import (
    BesselError,
    BracketError,
    ConfigError,
    ModelDomainError,
    NotNormalizableError,
    NumericalError,
    QsdForgeError,
    SimulationError,
    SpectrumResolutionError,
)
from .global_info import get_config
from .model import (
    DiffusionSpec,
    UnitDiffusionModel,
    check_gb,
    check_lp_prime,
    classify_boundary,
    load_model,
    parse_model,
    to_unit_diffusion,
)
from .eigen import (
    find_lambda_lower,
    hitting_probability,
    qsd_density,
    regular_interval_limit,
    riccati_g,
    solve_phi,
    solve_psi,
    truncated_spectrum,
)
from .mc import (
    CompactDensity,
    PointMass,
    SimConfig,
    estimate_a,
    estimate_akr,
    estimate_omega,
    estimate_omega_star,
    omega_bounds,
    restart_law,
    simulate_ensemble,
)
from .verdict import (
    Mode,
    check_qsd_invariance,
    compare_mc_to_qsd,
    decide,
    detect_kappa_limit,
    omega_limit_curve,
    resolve_with_mc,
)
from .lebras import LeBrasParams, bessel_k_imag, find_y_tilde, lebras_lambda_lower
from .cli import main as run_cli


def main() -> int:
    """
    Command-line entry point for the ``qsd-forge`` script.

    Returns:
        int: Exit code (0 for success, non-zero for failure)
    """
    logger.debug("🚀 QSD Forge main entry point invoked")
    return run_cli()


__all__ = [
    "__version__",
    "get_version_string",
    "main",
    "get_config",
    "QsdForgeError",
    "ConfigError",
    "ModelDomainError",
    "NumericalError",
    "BracketError",
    "SpectrumResolutionError",
    "BesselError",
    "NotNormalizableError",
    "SimulationError",
    "DiffusionSpec",
    "UnitDiffusionModel",
    "parse_model",
    "load_model",
    "to_unit_diffusion",
    "classify_boundary",
    "check_lp_prime",
    "check_gb",
    "solve_phi",
    "solve_psi",
    "riccati_g",
    "hitting_probability",
    "find_lambda_lower",
    "truncated_spectrum",
    "regular_interval_limit",
    "qsd_density",
    "PointMass",
    "CompactDensity",
    "SimConfig",
    "simulate_ensemble",
    "estimate_akr",
    "estimate_a",
    "estimate_omega",
    "estimate_omega_star",
    "omega_bounds",
    "restart_law",
    "Mode",
    "detect_kappa_limit",
    "decide",
    "omega_limit_curve",
    "compare_mc_to_qsd",
    "check_qsd_invariance",
    "resolve_with_mc",
    "LeBrasParams",
    "bessel_k_imag",
    "find_y_tilde",
    "lebras_lambda_lower",
]
