#!/usr/bin/env python3
# 🌀 Eidosian Model Forge
"""
Killed diffusion models.

A model file describes dX = b(X)dt + σ(X)dW on (l, r) killed at rate κ(X),
with boundary parameters p0 at the left endpoint and optionally p_r at the
right one. This module parses such files, maps the process onto unit
diffusion coefficient through Y = F(X) = ∫ du/σ(u), classifies the
endpoints by the Feller integrals and checks the growth conditions used by
the decision logic.

Following Eidosian principles of:
- Exhaustive But Concise: One model type for users, one for the solvers
- Flow Like a River: Text to expressions to callables without detours
- Precision as Style: Derivatives are symbolic, never differenced
"""

import logging
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import sympy
import yaml
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp

from .errors import ConfigError, ModelDomainError
from .expressions import X, Y, Coefficient, is_literal_zero, parse_expression, unparse
from .global_info import setting

logger = logging.getLogger("qsd_forge.model")

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)

EXPRESSION_KEYS = ("sigma", "b", "kappa")
NUMBER_KEYS = ("r", "l", "p0", "pr", "x0")
KNOWN_KEYS = EXPRESSION_KEYS + NUMBER_KEYS + ("name",)
_DEFAULTS = {"sigma": "1", "b": "0", "kappa": "0", "r": "inf", "l": "0"}

_PAIR_RE = re.compile(
    r"(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*"
    r"(?:\"(?P<dq>[^\"]*)\"|'(?P<sq>[^']*)'|(?P<bare>[^\s#\"']+))"
)


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class BoundaryKind(str, Enum):
    REGULAR = "Regular"
    EXIT = "Exit"
    ENTRANCE = "Entrance"
    NATURAL = "Natural"
    INCONCLUSIVE = "Inconclusive"


class GBVariant(str, Enum):
    NONE = "None"
    GB_PRIME = "GBPrime"
    GB_DOUBLE_PRIME = "GBDoublePrime"
    MONOTONE_KAPPA = "MonotoneKappa"


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📦 Model types
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@dataclass(frozen=True)
class DiffusionSpec:
    """User-facing model on the original coordinates (l, r)."""

    sigma: Coefficient
    drift_b: Coefficient
    kappa: Coefficient
    right: float
    p0: float
    pr: Optional[float] = None
    left: float = 0.0
    x0: Optional[float] = None
    name: str = ""

    def expressions(self) -> Dict[str, str]:
        """The coefficient expressions rendered back into model-file syntax."""
        return {
            "sigma": unparse(self.sigma.expr),
            "b": unparse(self.drift_b.expr),
            "kappa": unparse(self.kappa.expr),
        }


@dataclass(frozen=True)
class UnitDiffusionModel:
    """
    Model with unit diffusion coefficient on (left, right).

    ``left`` is 0 whenever the original left endpoint lies at finite scale
    distance, otherwise -inf. ``forward`` maps original coordinates onto the
    unit scale and ``inverse`` maps back.
    """

    drift: Coefficient
    kappa: Coefficient
    right: float
    p0: float
    pr: Optional[float] = None
    left: float = 0.0
    forward: Callable[[np.ndarray], np.ndarray] = field(default=lambda x: np.asarray(x, dtype=float), repr=False)
    inverse: Callable[[np.ndarray], np.ndarray] = field(default=lambda y: np.asarray(y, dtype=float), repr=False)
    antiderivative: Optional[Coefficient] = field(default=None, repr=False)
    kappa_is_zero: bool = False
    name: str = ""

    @classmethod
    def from_expressions(
        cls,
        drift: str = "0",
        kappa: str = "0",
        right: float = math.inf,
        p0: float = 1.0,
        pr: Optional[float] = None,
        name: str = "",
    ) -> "UnitDiffusionModel":
        """Build a unit model directly from expressions in ``x`` (the unit coordinate)."""
        drift_expr = parse_expression(drift).subs(X, Y)
        kappa_expr = parse_expression(kappa).subs(X, Y)
        return _assemble_unit_model(drift_expr, kappa_expr, right=right, p0=p0, pr=pr, name=name)

    @cached_property
    def drift_prime(self) -> Coefficient:
        return self.drift.derivative()

    @property
    def left_finite(self) -> bool:
        return math.isfinite(self.left)

    def drift_at_zero(self) -> float:
        """b̃(0+), required finite by the boundary condition at 0."""
        value = self.drift.right_limit(0.0)
        if not math.isfinite(value):
            raise ModelDomainError(f"drift is not finite at the left endpoint (b(0+) = {value})")
        return value

    def B_between(self, start: float, points: Union[float, np.ndarray]) -> np.ndarray:
        """2∫_start^y b̃ for every y in ``points``."""
        pts = np.asarray(points, dtype=float)
        if self.antiderivative is not None:
            anchor = self.antiderivative.right_limit(start)
            with np.errstate(all="ignore"):
                return 2.0 * (self.antiderivative(pts) - anchor)
        return 2.0 * cumulative_integral(self.drift, start, pts)

    def B(self, points: Union[float, np.ndarray]) -> np.ndarray:
        """B(y) = 2∫_0^y b̃, the log speed density."""
        return self.B_between(0.0, points)

    def speed_density(self, points: Union[float, np.ndarray]) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.B(points))

    def scale_density(self, points: Union[float, np.ndarray]) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(-self.B(points))

    def scale_function(self, points: Union[float, np.ndarray]) -> np.ndarray:
        """s(y) = ∫_0^y e^{-B}."""
        density = Coefficient(spline=lambda y: self.scale_density(y), variable=Y, label="s'")
        return cumulative_integral(density, 0.0, np.asarray(points, dtype=float))

    def potential(self, points: Union[float, np.ndarray]) -> np.ndarray:
        """V = ½(b̃² + b̃′) + κ̃, the potential of the conjugated operator."""
        y = np.asarray(points, dtype=float)
        drift = self.drift(y)
        with np.errstate(all="ignore"):
            return 0.5 * (drift * drift + self.drift_prime(y)) + self.kappa(y)

    def shift_killing(self, constant: float) -> "UnitDiffusionModel":
        """The same model with κ̃ replaced by κ̃ + constant."""
        if self.kappa.expr is None:
            raise ValueError("cannot shift a tabulated killing rate")
        kappa = Coefficient(self.kappa.expr + sympy.Float(constant), Y, label="kappa")
        return replace(self, kappa=kappa, kappa_is_zero=self.kappa_is_zero and constant == 0)


@dataclass(frozen=True)
class BoundaryClass:
    side: Side
    boundary_class: BoundaryKind
    sigma_integral: float  # ∫ M ds toward the endpoint (exit test)
    n_integral: float  # ∫ S dm toward the endpoint (entrance test)
    windows_used: int = 0

    @property
    def conclusive(self) -> bool:
        return self.boundary_class is not BoundaryKind.INCONCLUSIVE


@dataclass(frozen=True)
class LpPrimeResult:
    holds: bool
    z_min: float
    value_min: float
    margin: float
    reason: str

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class ConditionReport:
    lp_prime_holds: bool
    gb_variant: GBVariant
    kappa_star: Optional[float] = None
    b_star: Optional[float] = None
    b_starstar: Optional[float] = None
    beta_exponent: Optional[float] = None
    threshold_y: float = 1.0

    def g_bound(self, x: np.ndarray, lam: float, drift: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
        """
        Upper bound on the log-derivative g_λ implied by the growth condition.

        Args:
            x: Points (beyond ``threshold_y``)
            lam: Laplace parameter λ ≥ 0
            drift: b̃ at ``x``, needed for the GBDoublePrime form

        Returns:
            Bound values, or None when no growth condition was certified
        """
        points = np.asarray(x, dtype=float)
        kappa_term = math.sqrt(2.0 * (self.kappa_star or 0.0)) * points + math.sqrt(2.0 * max(lam, 0.0))
        linear_bounds = self.b_star is not None and self.kappa_star is not None
        if self.gb_variant in (GBVariant.GB_PRIME, GBVariant.MONOTONE_KAPPA) and linear_bounds:
            return 2.0 * self.b_star * points + kappa_term + 1.0  # type: ignore[operator]
        if self.gb_variant is GBVariant.GB_DOUBLE_PRIME and drift is not None:
            negative_part = -2.0 * np.minimum(np.asarray(drift, dtype=float), 0.0)
            return negative_part + 2.0 * (self.b_starstar or 0.0) * points + kappa_term + points
        return None


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🧮 Quadrature helper
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def cumulative_integral(func: Coefficient, start: float, points: np.ndarray, step: float = 0.25) -> np.ndarray:
    """
    ∫_start^p func for every p in ``points`` by composite Gauss-Legendre.

    Nodes are interior to each piece, so integrable endpoint singularities
    are never evaluated.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.ravel()
    knots = np.unique(np.concatenate(([start], flat[np.isfinite(flat)])))
    lower, upper = knots[:-1], knots[1:]
    counts = np.clip(np.ceil((upper - lower) / step), 1, 256).astype(int)
    segment = np.repeat(np.arange(lower.size), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    width = ((upper - lower) / counts)[segment]
    nodes = (lower[segment] + local * width)[:, None] + 0.5 * width[:, None] * (1.0 + _GAUSS_NODES[None, :])
    with np.errstate(all="ignore"):
        values = func(nodes.ravel()).reshape(nodes.shape)
        pieces = 0.5 * width * np.sum(values * _GAUSS_WEIGHTS[None, :], axis=1)
    segments = np.bincount(segment, weights=pieces, minlength=lower.size)
    cumulative = np.concatenate(([0.0], np.cumsum(segments)))
    origin = cumulative[np.searchsorted(knots, start)]
    result = np.full(flat.shape, np.nan)
    finite = np.isfinite(flat)
    result[finite] = cumulative[np.searchsorted(knots, flat[finite])] - origin
    return result.reshape(pts.shape)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📄 Parsing
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _split_pairs(config_text: str) -> Dict[str, Tuple[str, int, int]]:
    """Map key → (value, line, column of value) for ``key = value`` text."""
    pairs: Dict[str, Tuple[str, int, int]] = {}
    for line_number, line in enumerate(config_text.splitlines(), start=1):
        position = 0
        while position < len(line):
            while position < len(line) and line[position] in " \t":
                position += 1
            if position >= len(line) or line[position] == "#":
                break
            match = _PAIR_RE.match(line, position)
            if match is None:
                raise ConfigError("expected key = value", line_number, position + 1)
            key = match.group("key")
            group = next(g for g in ("dq", "sq", "bare") if match.group(g) is not None)
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key '{key}'", line_number, position + 1)
            if key in pairs:
                raise ConfigError(f"duplicate key '{key}'", line_number, position + 1)
            pairs[key] = (match.group(group), line_number, match.start(group) + 1)
            position = match.end()
            if position < len(line) and line[position] not in " \t#":
                raise ConfigError("expected whitespace between entries", line_number, position + 1)
    return pairs


def _parse_number(key: str, text: str, line: Optional[int], column: Optional[int]) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"'{key}' must be a number, got {text!r}", line, column) from None
    if math.isnan(value):
        raise ConfigError(f"'{key}' must not be nan", line, column)
    return value


def _validation_grid(left: float, right: float, count: int) -> np.ndarray:
    if math.isfinite(right):
        return np.linspace(left, right, count + 2)[1:-1]
    return left + np.geomspace(1e-6, 1e3, count)


def spec_from_mapping(
    values: Mapping[str, Tuple[str, Optional[int], Optional[int]]],
    config: Optional[Mapping[str, Any]] = None,
    check_boundaries: bool = True,
) -> DiffusionSpec:
    """
    Build and validate a DiffusionSpec from raw key → (text, line, column).

    Args:
        values: Raw entries as read from a model file
        config: Numerical settings
        check_boundaries: Verify that ``pr`` is given exactly when r is regular

    Returns:
        The validated model
    """
    entries = {key: (text, None, None) for key, text in _DEFAULTS.items()}
    entries.update(values)
    if "p0" not in entries:
        raise ConfigError("missing required key 'p0'")

    coefficients = {}
    for key in EXPRESSION_KEYS:
        text, line, column = entries[key]
        expr = parse_expression(str(text), line, (column or 1) - 1)
        if expr.free_symbols - {X}:
            raise ConfigError(f"'{key}' may only depend on x", line, column)
        coefficients[key] = Coefficient(expr, X, label=key)

    numbers: Dict[str, Optional[float]] = {}
    for key in NUMBER_KEYS:
        if key in entries:
            text, line, column = entries[key]
            numbers[key] = _parse_number(key, str(text), line, column)
        else:
            numbers[key] = None

    left = float(numbers["l"] or 0.0)
    right = float(numbers["r"]) if numbers["r"] is not None else math.inf
    p0 = float(numbers["p0"])  # type: ignore[arg-type]
    pr = numbers["pr"]
    x0 = numbers["x0"]

    if not math.isfinite(left):
        raise ConfigError("'l' must be finite", *entries["l"][1:])
    if right <= left:
        raise ConfigError(f"'r' must exceed l = {left}", *entries["r"][1:])
    if not 0.0 <= p0 <= 1.0:
        raise ConfigError(f"p0 must lie in [0, 1], got {p0}", *entries["p0"][1:])
    if pr is not None and not 0.0 <= pr <= 1.0:
        raise ConfigError(f"pr must lie in [0, 1], got {pr}", *entries["pr"][1:])
    if pr is not None and not math.isfinite(right):
        raise ConfigError("pr is only meaningful for a finite right endpoint", *entries["pr"][1:])
    if x0 is not None and not left < x0 < right:
        raise ConfigError(f"x0 must lie inside ({left}, {right})", *entries["x0"][1:])

    grid = _validation_grid(left, right, int(setting(config, "validation_points")))
    sigma_values = coefficients["sigma"](grid)
    kappa_values = coefficients["kappa"](grid)
    if np.any(np.isnan(sigma_values)) or np.any(sigma_values <= 0):
        bad = grid[np.argmax(np.isnan(sigma_values) | (sigma_values <= 0))]
        raise ModelDomainError(f"sigma must be positive on ({left}, {right}); fails at x = {bad:.6g}")
    if np.any(np.isnan(kappa_values)) or np.any(kappa_values < 0):
        bad = grid[np.argmax(np.isnan(kappa_values) | (kappa_values < 0))]
        raise ModelDomainError(f"kappa must be nonnegative on ({left}, {right}); fails at x = {bad:.6g}")

    name = str(entries["name"][0]) if "name" in entries else ""
    spec = DiffusionSpec(
        sigma=coefficients["sigma"],
        drift_b=coefficients["b"],
        kappa=coefficients["kappa"],
        right=right,
        p0=p0,
        pr=pr,
        left=left,
        x0=x0,
        name=name,
    )

    if check_boundaries and math.isfinite(right):
        right_class = classify_boundary(to_unit_diffusion(spec, config=config), Side.RIGHT, config)
        if right_class.boundary_class is BoundaryKind.REGULAR and pr is None:
            raise ConfigError("pr is required because the right endpoint is regular")
        if right_class.conclusive and right_class.boundary_class is not BoundaryKind.REGULAR and pr is not None:
            raise ConfigError(f"pr given but the right endpoint is {right_class.boundary_class.value}")
        if not right_class.conclusive:
            logger.warning("⚠️ Right endpoint could not be classified; accepting pr as given")

    logger.debug(f"✅ Parsed model {name or '<unnamed>'} on ({left}, {right}) with p0={p0}")
    return spec


def parse_model(
    config_text: str,
    config: Optional[Mapping[str, Any]] = None,
    check_boundaries: bool = True,
) -> DiffusionSpec:
    """
    Parse ``key = value`` model text.

    Args:
        config_text: Model description (sigma, b, kappa, r, l, p0, pr, x0, name)
        config: Numerical settings
        check_boundaries: Verify the pr/regular-endpoint pairing

    Returns:
        The validated DiffusionSpec

    Raises:
        ConfigError: Syntax errors, with line and column
        ModelDomainError: σ ≤ 0 or κ < 0 on the validation grid
    """
    return spec_from_mapping(_split_pairs(config_text), config, check_boundaries)


def load_model(
    path: Union[str, Path],
    config: Optional[Mapping[str, Any]] = None,
    check_boundaries: bool = True,
) -> Tuple[DiffusionSpec, str]:
    """
    Read a model file; ``.yml``/``.yaml`` files are read as YAML mappings.

    Returns:
        The model and the raw file text (hashed into the run manifest)
    """
    model_path = Path(path)
    try:
        text = model_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read model file {model_path}: {e}") from e

    if model_path.suffix.lower() in (".yml", ".yaml"):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {model_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{model_path} must contain a mapping")
        unknown = set(map(str, data)) - set(KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown keys in {model_path}: {', '.join(sorted(unknown))}")
        values = {str(k): (str(v), None, None) for k, v in data.items() if v is not None}
        return spec_from_mapping(values, config, check_boundaries), text

    return parse_model(text, config, check_boundaries), text


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🔄 Transformation to unit diffusion coefficient
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _is_infinite(value: sympy.Expr) -> bool:
    return bool(value.has(sympy.oo, -sympy.oo, sympy.zoo, sympy.nan))


def _drift_antiderivative(drift_expr: sympy.Expr) -> Optional[Coefficient]:
    """Closed-form ∫b̃ for rational drifts; numeric quadrature otherwise."""
    if not drift_expr.is_rational_function(Y):
        return None
    antiderivative = sympy.integrate(drift_expr, Y)
    if antiderivative.has(sympy.Integral):
        return None
    return Coefficient(antiderivative, Y, label="A")


def _assemble_unit_model(
    drift_expr: sympy.Expr,
    kappa_expr: sympy.Expr,
    right: float,
    p0: float,
    pr: Optional[float],
    name: str,
    left: float = 0.0,
    forward: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> UnitDiffusionModel:
    drift = Coefficient(drift_expr, Y, label="drift")
    kappa = Coefficient(kappa_expr, Y, label="kappa")
    kappa_is_zero = is_literal_zero(kappa_expr)
    if not kappa_is_zero:
        start = left if math.isfinite(left) else -1e3
        probe = np.linspace(start, right, 257) if math.isfinite(right) else start + np.geomspace(1e-6, 1e3, 257)
        kappa_is_zero = bool(np.all(np.abs(kappa(probe)) < 1e-14))
    extras: Dict[str, Any] = {}
    if forward is not None:
        extras["forward"] = forward
    if inverse is not None:
        extras["inverse"] = inverse
    return UnitDiffusionModel(
        drift=drift,
        kappa=kappa,
        right=right,
        p0=p0,
        pr=pr,
        left=left,
        antiderivative=_drift_antiderivative(drift_expr),
        kappa_is_zero=kappa_is_zero,
        name=name,
        **extras,
    )


def _symbolic_transform(
    spec: DiffusionSpec, x0: Optional[float]
) -> Optional[Tuple[sympy.Expr, sympy.Expr, float, float]]:
    """F and F⁻¹ in closed form, or None when sympy cannot provide them."""
    sigma = spec.sigma.expr
    try:
        primitive = sympy.integrate(1 / sigma, X)
    except (NotImplementedError, TypeError, ValueError):
        return None
    if primitive.has(sympy.Integral):
        return None

    at_left = sympy.limit(primitive, X, sympy.nsimplify(spec.left), dir="+")
    if _is_infinite(at_left):
        base_point = x0 if x0 is not None else spec.left + 1.0
        base = primitive.subs(X, sympy.nsimplify(base_point))
        left = -math.inf
    else:
        base = at_left
        left = 0.0
    forward_expr = primitive - base

    if math.isfinite(spec.right):
        at_right = sympy.limit(forward_expr, X, sympy.nsimplify(spec.right), dir="-")
    else:
        at_right = sympy.limit(forward_expr, X, sympy.oo)
    right = math.inf if _is_infinite(at_right) else float(at_right)

    try:
        candidates = sympy.solve(sympy.Eq(Y, forward_expr), X)
    except (NotImplementedError, TypeError, ValueError):
        return None
    probes = _validation_grid(spec.left, spec.right, 9)
    forward_values = sympy.lambdify(X, forward_expr, "numpy")(probes)
    for candidate in candidates:
        try:
            back = np.asarray(sympy.lambdify(Y, candidate, "numpy")(forward_values), dtype=float)
        except (TypeError, ValueError):
            continue
        back = np.broadcast_to(back, probes.shape)
        if np.all(np.isfinite(back)) and np.allclose(back, probes, rtol=1e-9, atol=1e-12):
            return forward_expr, candidate, left, right
    return None


def _tabulated_transform(
    spec: DiffusionSpec, config: Optional[Mapping[str, Any]]
) -> Tuple[PchipInterpolator, PchipInterpolator, float]:
    """Monotone tables for F and F⁻¹ built by quadrature of 1/σ."""
    points = int(setting(config, "transform_table_points"))
    if math.isfinite(spec.right):
        xs = np.linspace(spec.left, spec.right, points)
    else:
        xs = spec.left + np.concatenate(([0.0], np.geomspace(1e-8, 1e8, points - 1)))
    reciprocal = Coefficient(1 / spec.sigma.expr, X, label="1/sigma")
    ys = cumulative_integral(reciprocal, spec.left, xs)
    if not np.all(np.isfinite(ys)) or np.any(np.diff(ys) <= 0):
        raise ModelDomainError("cannot tabulate F(x) = ∫ du/σ; the left endpoint may lie at infinite scale")
    right = float(ys[-1]) if math.isfinite(spec.right) else math.inf
    return PchipInterpolator(xs, ys), PchipInterpolator(ys, xs), right


def to_unit_diffusion(
    spec: DiffusionSpec,
    x0: Optional[float] = None,
    printed_drift: bool = False,
    config: Optional[Mapping[str, Any]] = None,
) -> UnitDiffusionModel:
    """
    Map a model onto unit diffusion coefficient through Y = F(X).

    F(x) = ∫ du/σ is based at the left endpoint whenever that integral is
    finite (so the unit domain starts at 0) and at ``x0`` otherwise.

    Args:
        spec: Model in original coordinates
        x0: Reference point, used only when the left endpoint is at infinite scale
        printed_drift: Use b/σ − σ′ instead of the Itô form b/σ − σ′/2
        config: Numerical settings

    Returns:
        The unit-diffusion model
    """
    x0 = x0 if x0 is not None else spec.x0
    sigma_expr = spec.sigma.expr
    correction = sympy.diff(sigma_expr, X) * (1 if printed_drift else sympy.Rational(1, 2))
    drift_x = spec.drift_b.expr / sigma_expr - correction

    symbolic = _symbolic_transform(spec, x0)
    if symbolic is not None:
        forward_expr, inverse_expr, left, right = symbolic
        drift_expr = drift_x.subs(X, inverse_expr)
        kappa_expr = spec.kappa.expr.subs(X, inverse_expr)
        forward = Coefficient(forward_expr, X, label="F")
        inverse = Coefficient(inverse_expr, Y, label="F^-1")
        logger.debug(f"✅ Closed-form transform F(x) = {forward_expr}")
        return _assemble_unit_model(
            drift_expr, kappa_expr, right, spec.p0, spec.pr, spec.name, left, forward, inverse
        )

    logger.info("🔍 No closed form for ∫ du/σ; using a tabulated transform")
    forward_table, inverse_table, right = _tabulated_transform(spec, config)
    drift_fn = Coefficient(drift_x, X, label="drift(x)")
    sigma_fn = spec.sigma

    class _Composite:
        """y ↦ h(F⁻¹(y)); dx/dy = σ(x) gives the derivative."""

        def __init__(self, outer: Coefficient, with_sigma: bool = False):
            self.outer = outer
            self.with_sigma = with_sigma

        def __call__(self, y: Any) -> np.ndarray:
            x = inverse_table(np.asarray(y, dtype=float))
            values = self.outer(x)
            return values * sigma_fn(x) if self.with_sigma else values

        def derivative(self) -> "_Composite":
            if self.with_sigma:
                raise ValueError("only first derivatives of tabulated coefficients are available")
            return _Composite(self.outer.derivative(), with_sigma=True)

    drift = Coefficient(spline=_Composite(drift_fn), variable=Y, label="drift")
    kappa = Coefficient(spline=_Composite(spec.kappa), variable=Y, label="kappa")
    kappa_is_zero = is_literal_zero(spec.kappa.expr)
    return UnitDiffusionModel(
        drift=drift,
        kappa=kappa,
        right=right,
        p0=spec.p0,
        pr=spec.pr,
        left=0.0,
        forward=forward_table,
        inverse=inverse_table,
        kappa_is_zero=kappa_is_zero,
        name=spec.name,
    )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🧭 Feller classification
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _interior_point(model: UnitDiffusionModel) -> float:
    if model.left_finite and math.isfinite(model.right):
        return 0.5 * (model.left + model.right)
    if model.left_finite:
        return model.left + 1.0
    if math.isfinite(model.right):
        return model.right - 1.0
    return 0.0


def _window_verdict(window_logs: np.ndarray) -> Tuple[Optional[bool], int]:
    """
    Decide finiteness from per-window log contributions.

    Returns:
        (finite?, windows used); finite? is None when undecided
    """
    running = -np.inf
    for j in range(len(window_logs)):
        if not np.isfinite(window_logs[j]) and window_logs[j] > 0:
            return False, j + 1
        running = np.logaddexp(running, window_logs[j])
        if running > 700.0:
            return False, j + 1
        if j < 8:
            continue
        recent = np.diff(window_logs[j - 8 : j + 1])
        ratios = np.exp(recent)
        if np.all(ratios >= 0.95):
            return False, j + 1
        if np.all(ratios < 0.95) and window_logs[j] - running < math.log(1e-8):
            return True, j + 1
    return None, len(window_logs)


def classify_boundary(
    model: UnitDiffusionModel,
    side: Union[Side, str],
    config: Optional[Mapping[str, Any]] = None,
) -> BoundaryClass:
    """
    Feller classification of one endpoint.

    Both iterated integrals are accumulated from an interior point toward
    the endpoint on a grid that halves the remaining distance (finite
    endpoint) or doubles the covered distance (infinite endpoint), in log
    space so that exponentially large speed densities stay representable.

    Args:
        model: Unit-diffusion model
        side: "left" or "right"
        config: Numerical settings

    Returns:
        The class with both integral estimates (inf when divergent)
    """
    side = Side(side)
    endpoint = model.left if side is Side.LEFT else model.right
    direction = -1.0 if side is Side.LEFT else 1.0
    centre = _interior_point(model)
    per_window = int(setting(config, "feller_points_per_doubling"))
    budget = int(setting(config, "feller_budget"))

    if not math.isfinite(endpoint):
        windows = min(200, budget // per_window)
        exponents = np.arange(windows * per_window + 1) / per_window
        grid = centre + direction * np.expm1(exponents * math.log(2.0))
    else:
        windows = min(200 if endpoint == 0.0 else 50, budget // per_window)
        exponents = np.arange(windows * per_window + 1) / per_window
        distance = abs(endpoint - centre)
        grid = endpoint - direction * distance * np.exp2(-exponents)

    log_speed = model.B_between(centre, grid)
    log_speed = np.where(np.isnan(log_speed), np.inf, log_speed)
    log_steps = np.log(np.abs(np.diff(grid)) / 2.0)

    def iterated(log_outer: np.ndarray, log_inner: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            inner_pieces = log_steps + np.logaddexp(log_inner[:-1], log_inner[1:])
            log_cumulative = np.concatenate(([-np.inf], np.logaddexp.accumulate(inner_pieces)))
            integrand = log_outer + log_cumulative
            outer_pieces = log_steps + np.logaddexp(integrand[:-1], integrand[1:])
        outer_pieces = np.where(np.isnan(outer_pieces), np.inf, outer_pieces)
        return logsumexp(outer_pieces.reshape(windows, per_window), axis=1)

    sigma_windows = iterated(-log_speed, log_speed)
    n_windows = iterated(log_speed, -log_speed)
    sigma_finite, used_sigma = _window_verdict(sigma_windows)
    n_finite, used_n = _window_verdict(n_windows)

    def total(window_logs: np.ndarray, finite: Optional[bool], used: int) -> float:
        if finite is None:
            return math.nan
        if not finite:
            return math.inf
        return float(np.exp(logsumexp(window_logs[:used])))

    sigma_value = total(sigma_windows, sigma_finite, used_sigma)
    n_value = total(n_windows, n_finite, used_n)

    if sigma_finite is None or n_finite is None:
        kind = BoundaryKind.INCONCLUSIVE
        logger.warning(f"⚠️ {side.value} endpoint {endpoint}: Feller integrals undecided within budget")
    elif sigma_finite and n_finite:
        kind = BoundaryKind.REGULAR
    elif sigma_finite:
        kind = BoundaryKind.EXIT
    elif n_finite:
        kind = BoundaryKind.ENTRANCE
    else:
        kind = BoundaryKind.NATURAL

    logger.debug(f"🧭 {side.value} endpoint {endpoint}: {kind.value} (Σ={sigma_value:.6g}, N={n_value:.6g})")
    return BoundaryClass(side, kind, sigma_value, n_value, max(used_sigma, used_n))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📐 Growth conditions
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def condition_grid(y_max: float, config: Optional[Mapping[str, Any]] = None) -> np.ndarray:
    return np.geomspace(1.0, y_max, int(setting(config, "condition_grid_points")))


def _last_decade(grid: np.ndarray) -> np.ndarray:
    return grid >= grid[-1] / 10.0


def _loglog_slope(grid: np.ndarray, values: np.ndarray) -> float:
    mask = _last_decade(grid) & np.isfinite(values) & (values > 0)
    if mask.sum() < 3:
        return math.nan
    return float(np.polyfit(np.log(grid[mask]), np.log(values[mask]), 1)[0])


def nondecreasing(values: np.ndarray) -> bool:
    """Monotone up to rounding; overflow to +inf counts as growth."""
    values = np.asarray(values, dtype=float)
    if np.any(np.isnan(values)):
        return False
    before, after = values[:-1], values[1:]
    slack = np.where(np.isfinite(before), 1e-12 * np.maximum(1.0, np.abs(before)), 0.0)
    with np.errstate(invalid="ignore"):
        steps = (after >= before - slack) | np.isposinf(after)
    return bool(np.all(steps))


def _bounded_ratio(grid: np.ndarray, ratio: np.ndarray) -> bool:
    """True when ``ratio`` looks bounded as y grows."""
    if not np.all(np.isfinite(ratio)):
        return False
    tail = _last_decade(grid)
    tail_max = float(np.max(ratio[tail]))
    if tail_max <= 0.0:
        return True
    head_max = float(np.max(ratio[~tail])) if np.any(~tail) else -math.inf
    if tail_max <= head_max * (1.0 + 1e-9):
        return True
    slope = _loglog_slope(grid, ratio)
    return math.isfinite(slope) and slope <= 0.01


def check_lp_prime(
    model: UnitDiffusionModel,
    y_max: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> LpPrimeResult:
    """
    Check liminf z^{-2}(b̃² + b̃′ + 2κ̃) > −∞ (or κ̃ ≡ 0) on a geometric grid.

    Args:
        model: Unit-diffusion model with right endpoint ∞
        y_max: Largest grid point
        config: Numerical settings

    Returns:
        Result with the minimizing z, the minimum and its margin to the floor
    """
    floor = float(setting(config, "lp_floor"))
    if model.kappa_is_zero:
        return LpPrimeResult(True, math.nan, math.nan, math.inf, "killing vanishes identically")

    grid = condition_grid(y_max or float(setting(config, "condition_y_max")), config)
    drift = model.drift(grid)
    with np.errstate(all="ignore"):
        values = (drift * drift + model.drift_prime(grid) + 2.0 * model.kappa(grid)) / (grid * grid)
    values = np.where(np.isnan(values), np.inf, values)
    index = int(np.argmin(values))
    value_min = float(values[index])
    margin = value_min + floor

    if value_min <= -floor:
        return LpPrimeResult(False, float(grid[index]), value_min, margin, "minimum below floor")

    tail = _last_decade(grid) & np.isfinite(values)
    if tail.sum() >= 3:
        trend = float(np.polyfit(np.log(grid[tail]), values[tail], 1)[0])
        projected = float(values[tail][-1]) + trend * math.log(10.0)
        if projected <= -floor:
            return LpPrimeResult(False, float(grid[index]), value_min, margin, "decreasing toward the floor")

    return LpPrimeResult(True, float(grid[index]), value_min, margin, "bounded below on the grid")


def check_gb(
    model: UnitDiffusionModel,
    y_max: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> ConditionReport:
    """
    Certify one of the growth conditions on a geometric grid.

    MonotoneKappa needs κ̃ nondecreasing and a reflecting left endpoint;
    GBPrime needs |b̃| ≤ b_* y and κ̃ ≤ κ_* y; GBDoublePrime relaxes the
    lower drift bound to −b_* y^β and adds b̃′ ≤ b_** y².
    """
    y_max = y_max or float(setting(config, "condition_y_max"))
    grid = condition_grid(y_max, config)
    threshold = float(grid[0])
    lp_prime = check_lp_prime(model, y_max, config).holds

    drift = model.drift(grid)
    kappa = model.kappa(grid)
    with np.errstate(all="ignore"):
        drift_ratio = np.abs(drift) / grid
        upper_drift_ratio = np.maximum(drift, 0.0) / grid
        kappa_ratio = kappa / grid

    kappa_bounded = _bounded_ratio(grid, kappa_ratio)
    kappa_star = float(np.max(kappa_ratio)) if kappa_bounded else None
    gb_prime = kappa_bounded and _bounded_ratio(grid, drift_ratio)
    b_star = float(np.max(drift_ratio)) if gb_prime else None

    if model.p0 == 1.0 and nondecreasing(kappa):
        logger.debug("📐 Killing is nondecreasing with reflection at 0: MonotoneKappa")
        return ConditionReport(lp_prime, GBVariant.MONOTONE_KAPPA, kappa_star, b_star, None, None, threshold)
    if gb_prime:
        return ConditionReport(lp_prime, GBVariant.GB_PRIME, kappa_star, b_star, None, None, threshold)

    if kappa_bounded and _bounded_ratio(grid, upper_drift_ratio):
        with np.errstate(all="ignore"):
            drift_prime_ratio = np.maximum(model.drift_prime(grid), 0.0) / (grid * grid)
        if _bounded_ratio(grid, drift_prime_ratio):
            beta = max(1.0, _loglog_slope(grid, -drift) if np.any(drift < 0) else 1.0)
            if math.isfinite(beta):
                with np.errstate(all="ignore"):
                    lower_ratio = np.maximum(-drift, 0.0) / grid**beta
                b_star = float(max(np.max(upper_drift_ratio), np.max(lower_ratio)))
                b_starstar = float(np.max(drift_prime_ratio))
                logger.debug(f"📐 GBDoublePrime with β={beta:.4g}")
                return ConditionReport(
                    lp_prime, GBVariant.GB_DOUBLE_PRIME, kappa_star, b_star, b_starstar, beta, threshold
                )

    logger.debug("📐 No growth condition certified on the grid")
    return ConditionReport(lp_prime, GBVariant.NONE, kappa_star, None, None, None, threshold)
