#!/usr/bin/env python3
# 🌀 Eidosian Global Information System
"""
Global Information System for QSD Forge

Central registry of the numerical defaults used across the package:
integrator tolerances, bisection budgets, truncation schedules, grid
sizes, Monte Carlo bookkeeping and decision tolerances.

Following Eidosian principles of:
- Contextual Integrity: Every tolerance lives in exactly one place
- Structure as Control: Environment and settings files refine, never replace
- Self-Awareness as Foundation: A run can always report the settings it used
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from .errors import ConfigError
from .version import VERSION

logger = logging.getLogger("qsd_forge.global_info")

ENV_PREFIX = "QSD_FORGE_"
SETTINGS_ENV = "QSD_FORGE_SETTINGS"

PROJECT = {
    "name": "QSD Forge",
    "description": "Quasistationary distributions and survival dichotomies for killed 1-D diffusions",
    "version": VERSION,
    "license": "MIT",
}

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🔧 Numerical defaults
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

DEFAULT_CONFIG: Dict[str, Any] = {
    # model
    "validation_points": 257,
    "condition_grid_points": 2048,
    "condition_y_max": 1.0e3,
    "lp_floor": 1.0e6,
    "feller_budget": 10_000,
    "feller_points_per_doubling": 16,
    "transform_y_max": 1.0e3,
    "transform_table_points": 20_001,
    # eigen
    "integrator_method": "DOP853",
    "rtol": 1.0e-10,
    "atol": 1.0e-12,
    "riccati_method": "LSODA",
    "overflow_guard": 1.0e150,
    "lambda_tol": 1.0e-10,
    "bisection_max_steps": 80,
    "bracket_max_doublings": 60,
    "x_max_schedule": [50.0, 100.0, 200.0, 400.0],
    "grid_points": 4001,
    "separation_rtol": 1.0e-3,
    "potential_samples": 8192,
    "spectrum_max_lambda": 1.0e8,
    # mc
    "record_interval": 0.01,
    "histogram_bins": 128,
    "block_size": 4096,
    "workers": 1,
    "bootstrap_resamples": 200,
    "bridge_epsilon": 1.0e-12,
    "omega_flag_se": 3.0,
    "omega_fail_se": 4.0,
    # verdict
    "kappa_limit_atol": 1.0e-6,
    "kappa_limit_rtol": 1.0e-3,
    "k_equal_atol": 1.0e-6,
    "k_equal_rtol": 1.0e-4,
    "tv_threshold": 0.05,
    # lebras
    "bessel_scan_step": 0.05,
    "bessel_y_cap": 100.0,
    "bessel_max_pieces": 20_000,
}

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🧪 Functions for working with settings
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _coerce(key: str, template: Any, raw: Any) -> Any:
    """Convert ``raw`` to the type of the default value for ``key``."""
    try:
        if isinstance(template, list):
            items = raw.split(",") if isinstance(raw, str) else list(raw)
            return [float(item) for item in items]
        if isinstance(template, bool):
            if isinstance(raw, str):
                return raw.strip().lower() in ("true", "1", "yes", "y")
            return bool(raw)
        if isinstance(template, int):
            return int(float(raw))
        if isinstance(template, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"setting '{key}' cannot take the value {raw!r}: {e}") from e


def load_settings(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML settings file.

    Args:
        path: File containing a mapping of setting names to values

    Returns:
        Coerced overrides, restricted to known settings
    """
    settings_path = Path(path)
    try:
        with open(settings_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read settings file {settings_path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"settings file {settings_path} must contain a mapping")

    overrides: Dict[str, Any] = {}
    for key, value in data.items():
        if key not in DEFAULT_CONFIG:
            logger.warning(f"⚠️ Ignoring unknown setting '{key}' in {settings_path}")
            continue
        overrides[key] = _coerce(key, DEFAULT_CONFIG[key], value)
    logger.debug(f"📄 Loaded {len(overrides)} settings from {settings_path}")
    return overrides


def get_config(
    settings_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Get the numerical settings.

    Precedence, lowest first: defaults, ``QSD_FORGE_<KEY>`` environment
    variables, the settings file, explicit ``overrides`` (CLI flags).

    Args:
        settings_path: Optional YAML file; falls back to ``QSD_FORGE_SETTINGS``
        overrides: Values that win over every other source

    Returns:
        Dictionary with configuration
    """
    config = {key: (list(value) if isinstance(value, list) else value) for key, value in DEFAULT_CONFIG.items()}

    for key, value in DEFAULT_CONFIG.items():
        env_key = f"{ENV_PREFIX}{key.upper()}"
        if env_key in os.environ:
            config[key] = _coerce(key, value, os.environ[env_key])

    path = settings_path or os.environ.get(SETTINGS_ENV)
    if path:
        config.update(load_settings(path))

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown setting '{key}'")
        config[key] = _coerce(key, DEFAULT_CONFIG[key], value)

    return config


def setting(config: Optional[Mapping[str, Any]], key: str) -> Any:
    """Look up ``key`` in ``config``, falling back to the default."""
    if config is not None and key in config:
        return config[key]
    return DEFAULT_CONFIG[key]
