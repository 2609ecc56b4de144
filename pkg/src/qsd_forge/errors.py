#!/usr/bin/env python3
# 🌀 Eidosian Error Hierarchy
"""
Exceptions raised by QSD Forge.

Library code raises; the CLI command handlers translate these into
exit codes (2 for configuration problems, 3 for numerical failures).
"""

from typing import Optional


class QsdForgeError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(QsdForgeError):
    """A model file, expression or setting could not be accepted."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location = f"line {line}, column {column}: " if column is not None else f"line {line}: "
        elif column is not None:
            location = f"column {column}: "
        super().__init__(f"{location}{message}")


class ModelDomainError(ConfigError):
    """Coefficients violate σ > 0, κ ≥ 0 or cannot be transformed."""


class NumericalError(QsdForgeError):
    """An integrator, root finder or quadrature could not deliver a result."""

    def __init__(self, message: str, location: Optional[float] = None):
        self.location = location
        suffix = f" (near x={location:.6g})" if location is not None else ""
        super().__init__(f"{message}{suffix}")


class BracketError(NumericalError):
    """No λ with a sign-definite eigenfunction was found down to the floor."""


class SpectrumResolutionError(NumericalError):
    """More truncated eigenvalues were requested than can be resolved."""


class NotNormalizableError(QsdForgeError):
    """The principal eigenfunction has infinite mass; no QSD exists."""


class SimulationError(QsdForgeError):
    """Invalid simulation setup or an estimator without usable data."""


class BesselError(NumericalError):
    """Imaginary-order Bessel evaluation or root search failed."""
