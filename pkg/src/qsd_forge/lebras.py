#!/usr/bin/env python3
# 🌀 Eidosian Bessel Forge
"""
Closed-form reference for geometric growth with proportional killing.

The process dX = bX dt + σX dW on [1, ∞), reflected at 1 and killed at
rate kX, becomes on the unit scale y = log(x)/σ a Brownian motion with
drift b̃ = b/σ − σ/2, reflected at 0 and killed at rate k·e^{σy}. Its
eigenfunctions are e^{b̃y}K_ν(x₀e^{σy/2}) with x₀ = √(8k)/σ; positivity
forces imaginary order ν = iỹ and the reflecting boundary fixes ỹ, so

    λ̲ = b̃²/2 + σ²ỹ²/8

and the quasistationary density in the original coordinate is
ξ(x) ∝ x^{b/σ² − 3/2}·K_{iỹ}(√(8kx)/σ).

K_{iy} is evaluated from its integral representation by adaptive
quadrature split at the zeros of cos(yt).
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, List, Mapping, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import BesselError, ModelDomainError
from .global_info import setting
from .model import UnitDiffusionModel

logger = logging.getLogger("qsd_forge.lebras")

# e^{-745} underflows a double
UNDERFLOW_LOG = 745.0


@dataclass(frozen=True)
class LeBrasParams:
    sigma: float
    b: float
    k: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ModelDomainError(f"sigma must be positive, got {self.sigma}")
        if not self.k > 0:
            raise ModelDomainError(f"k must be positive, got {self.k}")
        if not self.b > 0.5 * self.sigma**2:
            raise ModelDomainError(f"b must exceed sigma^2/2 = {0.5 * self.sigma ** 2:g}, got {self.b}")

    @property
    def x0(self) -> float:
        return math.sqrt(8.0 * self.k) / self.sigma

    @property
    def drift(self) -> float:
        """b̃ = b/σ − σ/2 on the unit scale."""
        return self.b / self.sigma - 0.5 * self.sigma

    def unit_model(self) -> UnitDiffusionModel:
        """The transformed model: drift b̃, killing k·e^{σy}, reflected at 0."""
        return UnitDiffusionModel.from_expressions(
            drift=repr(self.drift),
            kappa=f"{self.k!r}*exp({self.sigma!r}*x)",
            p0=1.0,
            name=f"lebras(sigma={self.sigma:g}, b={self.b:g}, k={self.k:g})",
        )


@dataclass(frozen=True)
class BesselEval:
    order_y: float
    x: float
    K_value: float
    Kprime_value: float
    quadrature_error: float
    scaled_value: float  # e^{x}·K_{iy}(x)
    scaled_prime: float  # e^{x}·K′_{iy}(x)
    pieces: int


@dataclass(frozen=True)
class LeBrasResult:
    params: LeBrasParams
    y_tilde: float
    lambda_lower: float
    x_grid: np.ndarray
    xi: np.ndarray
    y_grid: np.ndarray
    phi: np.ndarray
    tail_exponent: float
    tail_exponent_fit: float
    printed_tail_exponent: float
    tail_residual_range: float
    positive: bool
    integrable: bool = True
    printed_boundary: bool = False
    warnings: Tuple[str, ...] = ()

    def summary(self) -> dict:
        return {
            "sigma": self.params.sigma,
            "b": self.params.b,
            "k": self.params.k,
            "x0": self.params.x0,
            "y_tilde": self.y_tilde,
            "lambda_lower": self.lambda_lower,
            "tail_exponent": self.tail_exponent,
            "tail_exponent_fit": self.tail_exponent_fit,
            "printed_tail_exponent": self.printed_tail_exponent,
            "tail_residual_range": self.tail_residual_range,
            "positive": self.positive,
            "integrable": self.integrable,
            "printed_boundary": self.printed_boundary,
            "warnings": list(self.warnings),
        }


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🔢 Bessel functions of imaginary order
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _cutoff(x: float) -> float:
    """T with x(cosh T − 1) − log cosh T > 745, so both integrands are negligible past T."""
    c = 1.0 + UNDERFLOW_LOG / x
    for _ in range(60):
        c = 1.0 + (UNDERFLOW_LOG + math.log(c)) / x
    return math.acosh(c) + 1e-3


def _breakpoints(y: float, cutoff: float) -> np.ndarray:
    if y == 0.0:
        return np.array([0.0, cutoff])
    zeros = (np.arange(int(cutoff * y / math.pi + 0.5)) + 0.5) * math.pi / y
    zeros = zeros[zeros < cutoff]
    return np.concatenate(([0.0], zeros, [cutoff]))


def bessel_k_imag(
    y: float,
    x: float,
    limit: int = 50,
    config: Optional[Mapping[str, Any]] = None,
) -> BesselEval:
    """
    K_{iy}(x) and K′_{iy}(x) from ∫₀^∞ e^{−x cosh t} cos(yt) dt.

    Args:
        y: Imaginary part of the order (the result is even in y)
        x: Argument, positive
        limit: Subdivision budget handed to each adaptive quadrature piece
        config: Numerical settings (``bessel_max_pieces``)

    Returns:
        BesselEval with values, e^{x}-scaled values and an error estimate

    Raises:
        BesselError: x is not positive or the oscillation needs more pieces
            than the budget allows
    """
    if not x > 0:
        raise BesselError(f"K_iy(x) needs x > 0, got x={x}")
    y = abs(float(y))
    cutoff = _cutoff(x)
    edges = _breakpoints(y, cutoff)
    budget = int(setting(config, "bessel_max_pieces"))
    if edges.size - 1 > budget:
        raise BesselError(
            f"K_iy({x:g}) with y={y:g} needs {edges.size - 1} oscillation pieces (budget {budget}); x is too small"
        )

    def value_integrand(t: float) -> float:
        return math.exp(-x * (math.cosh(t) - 1.0)) * math.cos(y * t)

    def prime_integrand(t: float) -> float:
        return -math.exp(-x * (math.cosh(t) - 1.0)) * math.cosh(t) * math.cos(y * t)

    scaled, scaled_prime, error = 0.0, 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        part, part_error = quad(value_integrand, a, b, limit=limit, epsabs=0.0, epsrel=1e-13)
        dpart, dpart_error = quad(prime_integrand, a, b, limit=limit, epsabs=0.0, epsrel=1e-13)
        scaled += part
        scaled_prime += dpart
        error += part_error + dpart_error

    decay = math.exp(-x)
    return BesselEval(
        order_y=y,
        x=x,
        K_value=scaled * decay,
        Kprime_value=scaled_prime * decay,
        quadrature_error=error * decay,
        scaled_value=scaled,
        scaled_prime=scaled_prime,
        pieces=edges.size - 1,
    )


def _boundary_mismatch(y: float, x0: float, flux_ratio: float, config: Optional[Mapping[str, Any]]) -> float:
    """x₀K′_{iy}(x₀) − (2b̃/σ)K_{iy}(x₀), up to the positive factor e^{−x₀}."""
    value = bessel_k_imag(y, x0, config=config)
    return x0 * value.scaled_prime - flux_ratio * value.scaled_value


def find_y_tilde(
    x0: float,
    flux_ratio: float = 0.0,
    config: Optional[Mapping[str, Any]] = None,
) -> float:
    """
    The first y > 0 at which the reflecting condition at x₀ holds.

    With ``flux_ratio`` = 2b̃/σ the condition is x₀K′_{iy}(x₀) = (2b̃/σ)K_{iy}(x₀);
    ``flux_ratio`` = 0 gives K′_{iy}(x₀) = 0. The mismatch is negative at
    y = 0 and the first sign change is found by a coarse scan in y and
    refined to 1e−10 relative.

    Raises:
        BesselError: No sign change below ``bessel_y_cap``
    """
    if not x0 > 0:
        raise BesselError(f"x0 must be positive, got {x0}")
    step = float(setting(config, "bessel_scan_step"))
    cap = float(setting(config, "bessel_y_cap"))

    previous_y = 0.0
    previous = _boundary_mismatch(0.0, x0, flux_ratio, config)
    y = step
    while y <= cap:
        current = _boundary_mismatch(y, x0, flux_ratio, config)
        if math.copysign(1.0, current) != math.copysign(1.0, previous):
            root = brentq(
                _boundary_mismatch,
                previous_y,
                y,
                args=(x0, flux_ratio, config),
                xtol=1e-12,
                rtol=1e-10,
                maxiter=200,
            )
            logger.debug(f"🔍 ỹ({x0:g}) = {root:.12g}")
            return float(root)
        previous_y, previous = y, current
        y += step
    raise BesselError(
        f"no sign change of the boundary mismatch for y in [0, {cap:g}] at x0={x0:g} (last value {previous:.3g})"
    )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📐 Principal eigenvalue and QSD
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _hankel_log_correction(y_tilde: float, z: np.ndarray) -> np.ndarray:
    """log of the two-term large-z correction of K_{iỹ}(z)·√(2z/π)e^{z}."""
    mu = -4.0 * y_tilde**2
    first = (mu - 1.0) / (8.0 * z)
    second = (mu - 1.0) * (mu - 9.0) / (2.0 * (8.0 * z) ** 2)
    return np.log1p(first + second)


def _scaled_k_table(y_tilde: float, z: np.ndarray, config: Optional[Mapping[str, Any]]) -> np.ndarray:
    return np.array([bessel_k_imag(y_tilde, float(value), config=config).scaled_value for value in z])


def lebras_lambda_lower(
    params: LeBrasParams,
    printed_boundary: bool = False,
    grid_points: int = 1024,
    config: Optional[Mapping[str, Any]] = None,
) -> LeBrasResult:
    """
    λ̲ and the tabulated QSD for the geometric model.

    Args:
        params: σ, b and k
        printed_boundary: Impose K′_{iỹ}(x₀) = 0 instead of the zero-flux
            condition x₀K′ = (2b̃/σ)K; the two agree only when b̃ = 0
        grid_points: Size of the geometric x-grid
        config: Numerical settings

    Returns:
        LeBrasResult with ξ on the x-grid and φ on the matching y-grid
    """
    sigma, b, k = params.sigma, params.b, params.k
    x0 = params.x0
    flux_ratio = 0.0 if printed_boundary else 2.0 * params.drift / sigma
    logger.info(f"🔍 Geometric killing model sigma={sigma:g}, b={b:g}, k={k:g} (x0={x0:.6g})")

    y_tilde = find_y_tilde(x0, flux_ratio, config)
    lambda_lower = 0.5 * params.drift**2 + sigma**2 * y_tilde**2 / 8.0
    warnings: List[str] = []

    # table out to z = √(8kx)/σ ≈ 100, and at least to x = 1000
    x_upper = max(1000.0, (100.0 * sigma) ** 2 / (8.0 * k))
    x_grid = np.geomspace(1.0, x_upper, grid_points)
    z = np.sqrt(8.0 * k * x_grid) / sigma
    scaled = _scaled_k_table(y_tilde, z, config)
    positive = bool(np.all(scaled > 0))
    if not positive:
        message = f"K_iỹ changes sign on [{x0:.4g}, {z[-1]:.4g}]; ỹ={y_tilde:.6g} is not the principal order"
        logger.warning(f"⚠️ {message}")
        warnings.append(message)

    exponent = b / sigma**2 - 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        log_xi = exponent * np.log(x_grid) - z + np.log(np.abs(scaled))
    xi = np.exp(log_xi - log_xi.max())
    mass = float(np.sum(0.5 * (xi[1:] + xi[:-1]) * np.diff(x_grid)))
    xi = xi / mass
    log_xi = np.log(xi)

    y_grid = np.log(x_grid) / sigma
    phi = sigma * x_grid * xi

    tail_exponent = b / sigma**2 - 1.75
    window = (x_grid >= 50.0) & (x_grid <= 500.0)
    if window.sum() >= 3:
        residual = log_xi[window] + z[window] - _hankel_log_correction(y_tilde, z[window])
        fit = float(np.polyfit(np.log(x_grid[window]), residual, 1)[0])
        deviation = residual - tail_exponent * np.log(x_grid[window])
        residual_range = float(deviation.max() - deviation.min())
    else:
        fit, residual_range = math.nan, math.nan
    if not math.isfinite(fit) or abs(fit - tail_exponent) > 0.02 * max(1.0, abs(tail_exponent)):
        message = f"tail exponent fit {fit:.6g} differs from {tail_exponent:.6g}"
        logger.warning(f"⚠️ {message}")
        warnings.append(message)

    logger.info(f"✅ ỹ={y_tilde:.10g}, λ̲={lambda_lower:.10g}")
    return LeBrasResult(
        params=params,
        y_tilde=y_tilde,
        lambda_lower=lambda_lower,
        x_grid=x_grid,
        xi=xi,
        y_grid=y_grid,
        phi=phi,
        tail_exponent=tail_exponent,
        tail_exponent_fit=fit,
        printed_tail_exponent=b / sigma**2 - 2.0,
        tail_residual_range=residual_range,
        positive=positive,
        printed_boundary=printed_boundary,
        warnings=tuple(warnings),
    )


def phi_on_unit_scale(params: LeBrasParams, y_tilde: float, y: np.ndarray, config: Optional[Mapping[str, Any]] = None) -> np.ndarray:
    """Unnormalized φ_λ̲(y) = e^{b̃y}K_{iỹ}(x₀e^{σy/2}) on the unit scale."""
    points = np.asarray(y, dtype=float)
    z = params.x0 * np.exp(0.5 * params.sigma * points)
    scaled = _scaled_k_table(y_tilde, z, config)
    return np.exp(params.drift * points - z) * scaled
