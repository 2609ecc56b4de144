#!/usr/bin/env python3
# 🌀 Pytest Configuration for QSD Forge Tests
"""
Pytest Configuration - shared models, settings and scratch directories.

The model fixtures are the closed-form cases the numerics are checked
against: Brownian motion reflected or absorbed at 0, the absorbed
Ornstein-Uhlenbeck process, and Brownian motion on a bounded interval.
"""

import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, Generator

import pytest

# Add the source directory to the Python path
repo_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(repo_root / "src"))

from qsd_forge.global_info import ENV_PREFIX, get_config  # noqa: E402
from qsd_forge.model import UnitDiffusionModel  # noqa: E402

REPO_ROOT = repo_root
MODELS_DIR = repo_root / "models"


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep QSD_FORGE_* variables of the calling shell out of the tests."""
    for key in list(os.environ):
        if key.startswith(ENV_PREFIX):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Fixture that provides a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def write_model(temp_dir: Path) -> Callable[..., Path]:
    """Fixture returning a function that writes model text to a file."""

    def write(text: str, name: str = "model.cfg") -> Path:
        path = temp_dir / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


@pytest.fixture
def fast_config() -> Dict[str, Any]:
    """Settings with a short truncation schedule and a coarser output grid."""
    return get_config(overrides={"grid_points": 2001, "x_max_schedule": [10.0, 20.0]})


@pytest.fixture
def reflected_bm() -> UnitDiffusionModel:
    """Brownian motion reflected at 0, no killing: λ̲ = 0, no QSD."""
    return UnitDiffusionModel.from_expressions(drift="0", kappa="0", p0=1.0, name="reflected_bm")


@pytest.fixture
def absorbed_bm() -> UnitDiffusionModel:
    """Brownian motion absorbed at 0."""
    return UnitDiffusionModel.from_expressions(drift="0", kappa="0", p0=0.0, name="absorbed_bm")


@pytest.fixture
def absorbed_ou() -> UnitDiffusionModel:
    """dX = −X dt + dW absorbed at 0: λ̲ = 1, QSD 2x·e^{−x²}."""
    return UnitDiffusionModel.from_expressions(drift="-x", kappa="0", p0=0.0, name="absorbed_ou")


@pytest.fixture
def escape_bm() -> UnitDiffusionModel:
    """Brownian motion with drift +1 absorbed at 0: λ̲ = 1/2, φ not integrable."""
    return UnitDiffusionModel.from_expressions(drift="1", kappa="0", p0=0.0, name="escape_bm")


@pytest.fixture
def constant_killing() -> UnitDiffusionModel:
    """Reflected Brownian motion killed at constant rate 1/2."""
    return UnitDiffusionModel.from_expressions(drift="0", kappa="0.5", p0=1.0, name="constant_killing")


@pytest.fixture
def dirichlet_interval() -> UnitDiffusionModel:
    """Brownian motion on (0, π) absorbed at both ends: λ_k = (k + 1)²/2."""
    return UnitDiffusionModel.from_expressions(drift="0", kappa="0", right=math.pi, p0=0.0, pr=0.0)


@pytest.fixture
def neumann_interval() -> UnitDiffusionModel:
    """Brownian motion on (0, π) reflected at both ends: λ_k = k²/2."""
    return UnitDiffusionModel.from_expressions(drift="0", kappa="0", right=math.pi, p0=1.0, pr=1.0)


def pytest_configure(config: pytest.Config) -> None:
    for marker, description in (
        ("unit", "fast tests of a single function"),
        ("integration", "tests that run a numerical pipeline end to end"),
        ("e2e", "command-line runs writing artifacts"),
        ("slow", "full-size acceptance runs, deselected by default"),
    ):
        config.addinivalue_line("markers", f"{marker}: {description}")
