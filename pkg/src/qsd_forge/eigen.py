#!/usr/bin/env python3
# 🌀 Eidosian Eigen Forge
"""
Eigenfunctions and the principal eigenvalue of killed unit diffusions.

The adjoint eigenfunction φ_λ solves ½φ″ − (b̃φ)′ − κ̃φ = −λφ with
φ(0) = p0 and ½φ′(0) − b̃(0)φ(0) = 1 − p0; the forward eigenfunction ψ_λ
solves ½ψ″ + b̃ψ′ − κ̃ψ = −λψ with ψ(0) = p0, ½ψ′(0) = 1 − p0. Both are
integrated as first-order systems in flux form, so b̃′ is never needed:

    φ system:  (φ, w = ½φ′ − b̃φ)    φ′ = 2w + 2b̃φ,   w′ = (κ̃ − λ)φ
    ψ system:  (ψ, v = ½ψ′)         ψ′ = 2v,          v′ = −2b̃v + (κ̃ − λ)ψ

The state is kept inside a fixed magnitude band by power-of-two rescaling,
so neither overflow nor loss of relative accuracy in decaying regions can
flip the sign bookkeeping. Integration ends early once the solution is
certified zero-free: past the point where the Liouville potential exceeds λ
for good, a solution whose conjugate u = e^{-B/2}φ moves away from zero can
never return.

The principal eigenvalue λ̲ is the largest λ for which φ_λ keeps one sign;
it is located by bisection on that dichotomy over a schedule of truncations.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import BracketError, NotNormalizableError, NumericalError, SpectrumResolutionError
from .global_info import setting
from .model import ConditionReport, UnitDiffusionModel, nondecreasing

logger = logging.getLogger("qsd_forge.eigen")

RESCALE_FLOOR = 1.0e-3


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📦 Result types
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@dataclass(frozen=True)
class EigenSolution:
    """
    φ_λ and ψ_λ sampled on a grid.

    ``stop`` is "end" when the grid was integrated to X_max, "zero" when the
    integration stopped at the first zero and "certified" when the tail
    beyond the last grid point was certified zero-free.
    """

    lam: float
    grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    dphi: np.ndarray
    dpsi: np.ndarray
    first_zero: float
    log_abs_phi: np.ndarray
    stop: str = "end"
    x_max: float = math.nan

    @property
    def zeros_free(self) -> bool:
        return math.isinf(self.first_zero)


@dataclass(frozen=True)
class RiccatiTrace:
    lam: float
    grid: np.ndarray
    g: np.ndarray
    log_psi: np.ndarray
    blowup_points: Tuple[float, ...]
    g_bound: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PrincipalEigenvalue:
    value: float
    bracket: Tuple[float, float]
    x_max: float
    truncation_history: Tuple[Tuple[float, float], ...]
    integrable: bool
    mass: float
    raw_value: float
    extrapolated: bool = False
    separation_point: float = math.nan
    solution: Optional[EigenSolution] = field(default=None, repr=False)
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class TruncatedSpectrum:
    r: float
    pr: Optional[float]
    boundary: str  # "pr" or "entrance"
    eigenvalues: Tuple[float, ...]


@dataclass(frozen=True)
class QsdDensity:
    lam: float
    grid: np.ndarray
    density: np.ndarray
    mass: float

    def cdf(self) -> np.ndarray:
        increments = 0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid)
        return np.concatenate(([0.0], np.cumsum(increments)))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.interp(points, self.grid, self.density, left=0.0, right=0.0)


@dataclass(frozen=True)
class RegularIntervalLimit:
    """Large-t behaviour e^{λ0 t}P_x{X_t ∈ A} → weight on an interval with two regular ends."""

    lambda0: float
    weight: float
    qsd: QsdDensity


@dataclass(frozen=True)
class _Shot:
    grid: np.ndarray
    mantissa: np.ndarray  # (n, 2)
    exponent: np.ndarray  # (n,)
    zeros: Tuple[float, ...]
    stop: str
    x_end: float

    def values(self, component: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.ldexp(self.mantissa[:, component], self.exponent)

    def log_abs(self, component: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.mantissa[:, component])) + self.exponent * math.log(2.0)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🔧 Shooting integrator
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@lru_cache(maxsize=64)
def _potential_suffix(model: UnitDiffusionModel, x_max: float, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sample points and the potential V on [0, x_max]."""
    points = np.linspace(0.0, x_max, samples)
    return points, model.potential(points)


def _forbidden_from(model: UnitDiffusionModel, lam: float, x_max: float, config: Optional[Mapping[str, Any]]) -> float:
    """Smallest sample point beyond which V − λ > 0 at every sample, or inf."""
    try:
        points, potential = _potential_suffix(model, float(x_max), int(setting(config, "potential_samples")))
    except ValueError:
        # tabulated drift without a second derivative
        return math.inf
    with np.errstate(invalid="ignore"):
        positive = potential - lam > 0
    suffix = np.logical_and.accumulate(positive[::-1])[::-1]
    if not suffix[-1]:
        return math.inf
    return float(points[int(np.argmax(suffix))])


def _drift_function(model: UnitDiffusionModel) -> Callable[[float], float]:
    """Scalar b̃ with its right limit at 0."""
    drift = model.drift.scalar
    at_zero = model.drift_at_zero()

    def evaluate(x: float) -> float:
        return drift(x) if x > 0.0 else at_zero

    return evaluate


def _vector_drift(model: UnitDiffusionModel, points: np.ndarray) -> np.ndarray:
    values = model.drift(points)
    return np.where(points > 0.0, values, model.drift_at_zero())


def _rhs_factory(model: UnitDiffusionModel, lam: float, system: str) -> Callable[[float, np.ndarray], List[float]]:
    drift = _drift_function(model)
    kappa = model.kappa.scalar

    if system == "phi":

        def rhs(x: float, state: np.ndarray) -> List[float]:
            b = drift(x)
            return [2.0 * (state[1] + b * state[0]), (kappa(x) - lam) * state[0]]

    else:

        def rhs(x: float, state: np.ndarray) -> List[float]:
            return [2.0 * state[1], -2.0 * drift(x) * state[1] + (kappa(x) - lam) * state[0]]

    return rhs


def _event(func: Callable[[float, np.ndarray], float], terminal: bool, direction: float) -> Callable:
    func.terminal = terminal  # type: ignore[attr-defined]
    func.direction = direction  # type: ignore[attr-defined]
    return func


def _shoot(
    model: UnitDiffusionModel,
    lam: float,
    x_max: float,
    system: str = "phi",
    grid: Optional[np.ndarray] = None,
    stop_at_first_zero: bool = False,
    certify: bool = True,
    config: Optional[Mapping[str, Any]] = None,
) -> _Shot:
    """
    Integrate the φ or ψ system from 0 to ``x_max``.

    Returns mantissa/exponent pairs on ``grid`` (if given), the zeros of the
    first component and the reason integration ended.
    """
    method = str(setting(config, "integrator_method"))
    rtol = float(setting(config, "rtol"))
    atol = float(setting(config, "atol"))
    log_ceiling = math.log(float(setting(config, "overflow_guard")))
    log_floor = math.log(RESCALE_FLOOR)

    p0 = model.p0
    drift = _drift_function(model)
    rhs = _rhs_factory(model, lam, system)
    forbidden_from = _forbidden_from(model, lam, x_max, config) if certify else math.inf
    out_grid = np.asarray(grid, dtype=float) if grid is not None else np.empty(0)

    def flux(x: float, y: np.ndarray) -> float:
        # sign of u·u′ for the Liouville conjugate u
        return float(y[0] * (2.0 * y[1] + drift(x) * y[0]))

    def log_size(y: np.ndarray) -> float:
        return math.log(abs(y[0]) + abs(y[1]) + 1e-300)

    zero_event = _event(lambda x, y: y[0], stop_at_first_zero, 0.0)
    high_event = _event(lambda x, y: log_size(y) - log_ceiling, True, 1.0)
    low_event = _event(lambda x, y: log_size(y) - log_floor, True, -1.0)
    certificate_event = _event(flux, True, 1.0)

    state = np.array([p0, 1.0 - p0], dtype=float)
    exponent = 0
    mantissas: List[np.ndarray] = []
    exponents: List[np.ndarray] = []
    recorded = 0
    zeros: List[float] = []
    x_start = 0.0
    stop = "end"

    def nudge(x: float, y: np.ndarray) -> Tuple[float, np.ndarray]:
        """Step off a zero of the first component before watching for sign changes."""
        lead = min(1e-6 / (1.0 + math.sqrt(abs(lam)) + abs(drift(x))), x_max - x)
        step = solve_ivp(rhs, (x, x + lead), y, method=method, rtol=rtol, atol=atol)
        if step.status < 0:
            raise NumericalError(f"integration failed: {step.message}", x)
        return x + lead, step.y[:, -1]

    if p0 == 0.0:
        if out_grid.size and out_grid[0] == 0.0:
            mantissas.append(state[np.newaxis, :].copy())
            exponents.append(np.zeros(1, dtype=int))
            recorded = 1
        x_start, state = nudge(0.0, state)

    while x_start < x_max:
        in_forbidden = x_start >= forbidden_from
        if in_forbidden and flux(x_start, state) > 0.0:
            stop = "certified"
            break
        segment_end = x_max if in_forbidden or forbidden_from >= x_max else forbidden_from
        events = [zero_event, high_event, low_event] + ([certificate_event] if in_forbidden else [])

        solution = solve_ivp(
            rhs,
            (x_start, segment_end),
            state,
            method=method,
            dense_output=bool(out_grid.size),
            events=events,
            rtol=rtol,
            atol=atol,
        )
        if solution.status < 0:
            location = float(solution.t[-1]) if solution.t.size else x_start
            raise NumericalError(f"integration failed: {solution.message}", location)

        x_reached = float(solution.t[-1])
        if out_grid.size:
            upto = int(np.searchsorted(out_grid, x_reached, side="right"))
            if upto > recorded:
                points = out_grid[recorded:upto]
                mantissas.append(np.asarray(solution.sol(points)).T)
                exponents.append(np.full(points.size, exponent, dtype=int))
                recorded = upto

        tolerance = 1e-12 * max(1.0, abs(x_start))
        fresh = [float(t) for t in solution.t_events[0] if t > x_start + tolerance]
        zeros.extend(fresh)
        state = solution.y[:, -1]

        if solution.status == 0:
            x_start = segment_end
            continue
        x_start = x_reached
        if stop_at_first_zero and fresh:
            stop = "zero"
            break
        if len(solution.t_events) > 3 and solution.t_events[3].size:
            stop = "certified"
            break
        if solution.t_events[1].size or solution.t_events[2].size:
            _, shift = math.frexp(max(abs(state[0]), abs(state[1])))
            state = np.ldexp(state, -shift)
            exponent += shift
            continue
        x_start, state = nudge(x_start, state)

    mantissa = np.concatenate(mantissas) if mantissas else np.empty((0, 2))
    exps = np.concatenate(exponents) if exponents else np.empty(0, dtype=int)
    return _Shot(out_grid[:recorded], mantissa, exps, tuple(zeros), stop, min(x_start, x_max))


def _eigen_grid(x_max: float, config: Optional[Mapping[str, Any]]) -> np.ndarray:
    return np.linspace(0.0, x_max, int(setting(config, "grid_points")))


def _solve(
    model: UnitDiffusionModel,
    lam: float,
    x_max: float,
    primary: str,
    grid: Optional[np.ndarray],
    certify: bool,
    config: Optional[Mapping[str, Any]],
) -> EigenSolution:
    grid = _eigen_grid(x_max, config) if grid is None else np.asarray(grid, dtype=float)
    phi_shot = _shoot(model, lam, x_max, "phi", grid, certify=certify, config=config)
    psi_shot = _shoot(model, lam, x_max, "psi", grid, certify=certify, config=config)
    n = min(phi_shot.grid.size, psi_shot.grid.size)
    points = phi_shot.grid[:n]
    drift = _vector_drift(model, points)

    phi = phi_shot.values(0)[:n]
    psi = psi_shot.values(0)[:n]
    with np.errstate(over="ignore", invalid="ignore"):
        dphi = 2.0 * (phi_shot.values(1)[:n] + drift * phi)
        dpsi = 2.0 * psi_shot.values(1)[:n]

    main = phi_shot if primary == "phi" else psi_shot
    first_zero = main.zeros[0] if main.zeros else math.inf
    return EigenSolution(
        lam=lam,
        grid=points,
        phi=phi,
        psi=psi,
        dphi=dphi,
        dpsi=dpsi,
        first_zero=first_zero,
        log_abs_phi=phi_shot.log_abs(0)[:n],
        stop=main.stop,
        x_max=x_max,
    )


def solve_phi(
    model: UnitDiffusionModel,
    lam: float,
    x_max: float,
    grid: Optional[np.ndarray] = None,
    certify: bool = True,
    config: Optional[Mapping[str, Any]] = None,
) -> EigenSolution:
    """
    Solve the adjoint eigenfunction problem for one λ.

    Args:
        model: Unit-diffusion model
        lam: Eigenvalue parameter
        x_max: Right end of the integration interval
        grid: Output abscissas (default: ``grid_points`` equally spaced)
        certify: Stop once the tail is certified zero-free
        config: Numerical settings

    Returns:
        EigenSolution whose ``first_zero`` refers to φ; ψ is integrated
        independently on the same grid

    Raises:
        NumericalError: Step-size underflow, with its location
    """
    logger.debug(f"🔍 Solving φ at λ={lam:.12g} on [0, {x_max:g}]")
    return _solve(model, lam, x_max, "phi", grid, certify, config)


def solve_psi(
    model: UnitDiffusionModel,
    lam: float,
    x_max: float,
    grid: Optional[np.ndarray] = None,
    certify: bool = True,
    config: Optional[Mapping[str, Any]] = None,
) -> EigenSolution:
    """Solve the forward eigenfunction problem for one λ (see :func:`solve_phi`)."""
    logger.debug(f"🔍 Solving ψ at λ={lam:.12g} on [0, {x_max:g}]")
    return _solve(model, lam, x_max, "psi", grid, certify, config)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📈 Riccati form
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def riccati_g(
    model: UnitDiffusionModel,
    lam: float,
    x_max: float,
    grid: Optional[np.ndarray] = None,
    conditions: Optional[ConditionReport] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> RiccatiTrace:
    """
    Integrate g_λ = ψ′_{−λ}/ψ_{−λ} together with log|ψ_{−λ}|.

    Here λ is the Laplace parameter: ψ_{−λ} solves ½ψ″ + b̃ψ′ − κ̃ψ = λψ.
    Where |g| grows past 2 the reciprocal h = 1/g is integrated instead,
    so poles of g (zeros of ψ) are crossed as regular zeros of h.

        g′ = 2(κ̃ + λ) − g² − 2b̃g          ℓ′ = g              (ℓ = log|ψ|)
        h′ = 1 + 2b̃h − 2(κ̃ + λ)h²          m′ = 2(κ̃ + λ)h − 2b̃  (m = log|ψ′|)

    Args:
        model: Unit-diffusion model
        lam: Laplace parameter
        x_max: Right end of the interval
        grid: Output abscissas
        conditions: When a growth condition is certified, its bound on g is attached
        config: Numerical settings

    Returns:
        RiccatiTrace with g, log|ψ| and the pole locations
    """
    method = str(setting(config, "riccati_method"))
    rtol = float(setting(config, "rtol"))
    atol = float(setting(config, "atol"))
    drift = _drift_function(model)
    kappa = model.kappa.scalar
    grid = _eigen_grid(x_max, config) if grid is None else np.asarray(grid, dtype=float)

    def g_rhs(x: float, y: np.ndarray) -> List[float]:
        return [2.0 * (kappa(x) + lam) - y[0] * y[0] - 2.0 * drift(x) * y[0], y[0]]

    def h_rhs(x: float, y: np.ndarray) -> List[float]:
        rate = 2.0 * (kappa(x) + lam)
        b = drift(x)
        return [1.0 + 2.0 * b * y[0] - rate * y[0] * y[0], rate * y[0] - 2.0 * b]

    to_h = _event(lambda x, y: abs(y[0]) - 2.0, True, 1.0)
    to_g = _event(lambda x, y: abs(y[0]) - 1.0, True, 1.0)
    pole = _event(lambda x, y: y[0], False, 0.0)

    p0 = model.p0
    poles: List[float] = []
    if p0 == 0.0:
        mode, state = "h", np.array([0.0, math.log(2.0)])
        poles.append(0.0)
    else:
        g0 = 2.0 * (1.0 - p0) / p0
        if abs(g0) > 2.0:
            mode, state = "h", np.array([1.0 / g0, math.log(abs(2.0 * (1.0 - p0)))])
        else:
            mode, state = "g", np.array([g0, math.log(p0)])

    g_values = np.full(grid.size, np.nan)
    log_psi = np.full(grid.size, np.nan)
    x_start = 0.0
    recorded = 0

    while x_start < x_max:
        upto = int(np.searchsorted(grid, x_max, side="right"))
        t_eval = grid[recorded:upto]
        t_eval = t_eval[t_eval >= x_start]
        rhs, events = (g_rhs, [to_h]) if mode == "g" else (h_rhs, [to_g, pole])
        solution = solve_ivp(
            rhs,
            (x_start, x_max),
            state,
            method=method,
            t_eval=t_eval if t_eval.size else None,
            events=events,
            rtol=rtol,
            atol=atol,
        )
        if solution.status < 0:
            location = float(solution.t[-1]) if solution.t.size else x_start
            raise NumericalError(f"Riccati integration failed: {solution.message}", location)

        count = solution.t.size if t_eval.size else 0
        if count:
            first, second = solution.y[0], solution.y[1]
            if mode == "g":
                g_values[recorded : recorded + count] = first
                log_psi[recorded : recorded + count] = second
            else:
                with np.errstate(divide="ignore"):
                    g_values[recorded : recorded + count] = 1.0 / first
                    log_psi[recorded : recorded + count] = second + np.log(np.abs(first))
            recorded += count

        if mode == "h":
            tolerance = 1e-12 * max(1.0, x_start)
            poles.extend(float(t) for t in solution.t_events[1] if t > x_start + tolerance)

        if solution.status == 0:
            break
        switch = solution.t_events[0]
        x_start = float(switch[0])
        value, log_part = np.asarray(solution.y_events[0][0], dtype=float)
        if mode == "g":
            mode, state = "h", np.array([1.0 / value, log_part + math.log(abs(value))])
        else:
            mode, state = "g", np.array([1.0 / value, log_part + math.log(abs(value))])

    bound = None
    if conditions is not None:
        bound = conditions.g_bound(grid, lam, _vector_drift(model, grid))
    return RiccatiTrace(lam, grid, g_values, log_psi, tuple(sorted(set(poles))), bound)


def hitting_probability(
    model: UnitDiffusionModel,
    y: float,
    x: float,
    lam: float = 0.0,
    config: Optional[Mapping[str, Any]] = None,
) -> float:
    """
    E_y[e^{−λτ_x}; τ_x < τ_∂] for y ≤ x, i.e. ψ_{−λ}(y)/ψ_{−λ}(x).

    At λ = 0 this is P_y{τ_x < τ_∂}, the reciprocal of ω_*(x, y).
    """
    if y > x:
        raise ValueError(f"hitting_probability needs y ≤ x, got y={y}, x={x}")
    if y == x:
        return 1.0
    count = int(setting(config, "grid_points"))
    grid = np.unique(np.concatenate((np.linspace(0.0, x, count), [y, x])))
    trace = riccati_g(model, lam, x, grid=grid, config=config)
    log_y = float(trace.log_psi[np.searchsorted(grid, y)])
    log_x = float(trace.log_psi[-1])
    if not math.isfinite(log_x):
        raise NumericalError("ψ vanishes at the target point", x)
    return math.exp(log_y - log_x) if math.isfinite(log_y) else 0.0


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🎯 Principal eigenvalue
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _is_high(model: UnitDiffusionModel, lam: float, x_max: float, config: Optional[Mapping[str, Any]]) -> bool:
    """λ is high when φ_λ has a zero in (0, x_max]."""
    shot = _shoot(model, lam, x_max, "phi", stop_at_first_zero=True, config=config)
    return bool(shot.zeros) and shot.zeros[0] <= x_max


def _initial_bracket(model: UnitDiffusionModel, x_max: float, config: Optional[Mapping[str, Any]]) -> Tuple[float, float]:
    doublings = int(setting(config, "bracket_max_doublings"))
    ceiling = float(setting(config, "spectrum_max_lambda"))
    if _is_high(model, 0.0, x_max, config):
        hi, step = 0.0, 1.0
        for _ in range(doublings):
            if not _is_high(model, -step, x_max, config):
                return -step, hi
            hi, step = -step, 2.0 * step
        raise BracketError(
            f"φ_λ has a zero on [0, {x_max:g}] for every λ down to {-step / 2:g}; check the left boundary"
        )
    lo, step = 0.0, 1.0
    for _ in range(doublings):
        if step > ceiling:
            break
        if _is_high(model, step, x_max, config):
            return lo, step
        lo, step = step, 2.0 * step
    raise BracketError(f"φ_λ keeps one sign on [0, {x_max:g}] for every λ up to {lo:g}")


def _lower_end(
    model: UnitDiffusionModel, lo: float, hi: float, x_max: float, config: Optional[Mapping[str, Any]]
) -> float:
    """Move ``lo`` down until it is low again for the longer truncation."""
    if not _is_high(model, lo, x_max, config):
        return lo
    step = max(2.0 * (hi - lo), 1e-6 * max(1.0, abs(lo)))
    for _ in range(int(setting(config, "bracket_max_doublings"))):
        candidate = lo - step
        if not _is_high(model, candidate, x_max, config):
            return candidate
        lo, step = candidate, 2.0 * step
    raise BracketError(f"no sign-definite φ_λ found below λ={lo:g} on [0, {x_max:g}]")


def _bisect(
    model: UnitDiffusionModel,
    lo: float,
    hi: float,
    x_max: float,
    tol: float,
    config: Optional[Mapping[str, Any]],
) -> Tuple[float, float]:
    for _ in range(int(setting(config, "bisection_max_steps"))):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        if _is_high(model, mid, x_max, config):
            hi = mid
        else:
            lo = mid
    return lo, hi


def _richardson(history: Sequence[Tuple[float, float]], tol: float) -> Optional[float]:
    """Extrapolate X → ∞ when the history decays like c/X²."""
    if len(history) < 3:
        return None
    (x1, l1), (x2, l2), (x3, l3) = history[-3:]
    floor = 10.0 * tol * max(1.0, abs(l3))
    d1, d2 = l1 - l2, l2 - l3
    if d1 <= floor or d2 <= floor:
        return None
    expected = (1.0 / x1**2 - 1.0 / x2**2) / (1.0 / x2**2 - 1.0 / x3**2)
    if abs((d1 / d2) / expected - 1.0) > 0.25:
        return None
    return (x3**2 * l3 - x2**2 * l2) / (x3**2 - x2**2)


def _trapezoid(values: np.ndarray, points: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(points)))


def _tail_integrable(points: np.ndarray, log_phi: np.ndarray) -> bool:
    """Decaying faster than 1/x over the last decade of the reliable range."""
    end = points[-1]
    window = (points >= end / 10.0) & np.isfinite(log_phi) & (points > 0)
    if window.sum() < 3:
        return False
    if nondecreasing(log_phi[window]):
        return False
    slope = float(np.polyfit(np.log(points[window]), log_phi[window], 1)[0])
    return slope <= -1.0


def _reliable_solution(
    model: UnitDiffusionModel,
    lo: float,
    hi: float,
    x_max: float,
    config: Optional[Mapping[str, Any]],
) -> Tuple[EigenSolution, float]:
    """
    φ at the bracket's low end, cut where it separates from φ at the high end.

    Beyond that point the computed φ is dominated by the growing solution
    admitted by the bracket width and no longer represents φ_λ̲.
    """
    hi_shot = _shoot(model, hi, x_max, "phi", stop_at_first_zero=True, config=config)
    reach = hi_shot.zeros[0] if hi_shot.zeros else hi_shot.x_end
    grid = _eigen_grid(reach, config)
    low = solve_phi(model, lo, reach, grid=grid, config=config)
    high = _shoot(model, hi, reach, "phi", grid, config=config)
    n = min(low.grid.size, high.grid.size)
    rtol = float(setting(config, "separation_rtol"))
    same_sign = np.sign(high.mantissa[:n, 0]) == np.sign(low.phi[:n])
    with np.errstate(invalid="ignore", over="ignore"):
        log_ratio = high.log_abs(0)[:n] - low.log_abs_phi[:n]
        ratio = np.where(same_sign, np.exp(log_ratio), -np.exp(log_ratio))
        gap = np.abs(ratio - 1.0)
    separated = np.nonzero(gap[1:] > rtol)[0]
    cut = int(separated[0]) + 1 if separated.size else n
    return low, float(low.grid[min(cut, low.grid.size) - 1])


def _truncate(sol: EigenSolution, x_end: float) -> EigenSolution:
    keep = sol.grid <= x_end
    return EigenSolution(
        lam=sol.lam,
        grid=sol.grid[keep],
        phi=sol.phi[keep],
        psi=sol.psi[keep],
        dphi=sol.dphi[keep],
        dpsi=sol.dpsi[keep],
        first_zero=sol.first_zero,
        log_abs_phi=sol.log_abs_phi[keep],
        stop=sol.stop,
        x_max=sol.x_max,
    )


def find_lambda_lower(
    model: UnitDiffusionModel,
    x_max_schedule: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> PrincipalEigenvalue:
    """
    Locate λ̲ by bisection on the sign-change dichotomy.

    For each truncation X in the schedule, λ is "high" when φ_λ has a zero
    in (0, X] and "low" otherwise. When the estimates fall like X^{-2} (the
    bottom of the spectrum is the edge of a continuum) the last two
    truncations are extrapolated. Integrability is then decided from the
    reliable part of φ_λ̲.

    Args:
        model: Unit-diffusion model with a regular (or at least finite) left end
        x_max_schedule: Increasing truncations (default from settings)
        tol: Relative bisection tolerance
        config: Numerical settings

    Returns:
        PrincipalEigenvalue with bracket, history, mass and integrability

    Raises:
        BracketError: No sign-definite φ_λ was found
    """
    if not model.left_finite:
        raise NumericalError("the left endpoint lies at infinite scale; no boundary condition can be imposed")
    if math.isfinite(model.right):
        return _finite_interval_lower(model, config)

    schedule = [float(x) for x in (x_max_schedule or setting(config, "x_max_schedule"))]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("the X_max schedule must be nonempty and increasing")
    tol = float(tol if tol is not None else setting(config, "lambda_tol"))
    warnings: List[str] = []
    history: List[Tuple[float, float]] = []

    lo, hi = _initial_bracket(model, schedule[0], config)
    for x_max in schedule:
        lo = _lower_end(model, lo, hi, x_max, config)
        lo, hi = _bisect(model, lo, hi, x_max, tol, config)
        estimate = 0.5 * (lo + hi)
        logger.debug(f"🎯 X_max={x_max:g}: λ̲ ≈ {estimate:.12g}")
        if history and estimate > history[-1][1] + 1e-9:
            message = f"λ̲ estimate increased from {history[-1][1]:.12g} to {estimate:.12g} at X_max={x_max:g}"
            logger.warning(f"⚠️ {message}")
            warnings.append(message)
        history.append((x_max, estimate))

    raw = history[-1][1]
    extrapolated = _richardson(history, tol)
    final_x = schedule[-1]

    if extrapolated is None and len(history) > 1 and abs(history[-1][1] - history[-2][1]) >= 10.0 * tol * max(1.0, abs(raw)):
        message = f"λ̲ not converged over the truncation schedule (last change {history[-2][1] - raw:.3g})"
        logger.warning(f"⚠️ {message}")
        warnings.append(message)

    if extrapolated is not None:
        value = extrapolated
        logger.info(f"✨ Continuum edge detected; λ̲ extrapolated to {value:.12g} (last truncation {raw:.12g})")
        solution = solve_phi(model, value, final_x, certify=False, config=config)
        if solution.zeros_free:
            reliable = solution
        else:
            reliable = _truncate(solution, solution.first_zero)
        separation = float(reliable.grid[-1])
    else:
        value = raw
        reliable, separation = _reliable_solution(model, lo, hi, final_x, config)
        reliable = _truncate(reliable, separation)

    integrable = _tail_integrable(reliable.grid, reliable.log_abs_phi)
    mass = _trapezoid(reliable.phi, reliable.grid) if integrable else math.inf
    if integrable and not (math.isfinite(mass) and mass > 0):
        integrable, mass = False, math.inf
    logger.info(f"✅ λ̲ = {value:.12g}, φ_λ̲ {'integrable' if integrable else 'not integrable'}")

    return PrincipalEigenvalue(
        value=value,
        bracket=(lo, hi),
        x_max=final_x,
        truncation_history=tuple(history),
        integrable=integrable,
        mass=mass,
        raw_value=raw,
        extrapolated=extrapolated is not None,
        separation_point=separation,
        solution=reliable,
        warnings=tuple(warnings),
    )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🎼 Truncated problems
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _prufer_angle(model: UnitDiffusionModel, lam: float, r: float, config: Optional[Mapping[str, Any]]) -> float:
    """θ(r) for θ = atan2(φ, w), accumulated continuously from θ(0)."""
    drift = _drift_function(model)
    kappa = model.kappa.scalar

    def rhs(x: float, theta: np.ndarray) -> List[float]:
        s, c = math.sin(theta[0]), math.cos(theta[0])
        return [2.0 * c * c + 2.0 * drift(x) * s * c + (lam - kappa(x)) * s * s]

    start = math.atan2(model.p0, 1.0 - model.p0)
    solution = solve_ivp(
        rhs,
        (0.0, r),
        [start],
        method=str(setting(config, "integrator_method")),
        rtol=float(setting(config, "rtol")),
        atol=float(setting(config, "atol")),
    )
    if solution.status < 0:
        raise NumericalError(f"Prüfer integration failed: {solution.message}", float(solution.t[-1]))
    return float(solution.y[0, -1])


def _target_angle(model: UnitDiffusionModel, r: float, pr: Optional[float], entrance: bool) -> float:
    """Angle α with θ(r) ≡ α (mod π) encoding the right boundary condition."""
    if entrance:
        return 0.5 * math.pi
    if pr is None:
        raise ValueError("a boundary parameter pr (or entrance=True) is required at r")
    weight = (1.0 - pr) * math.exp(-float(model.B(r)))
    return math.pi - math.atan2(pr, weight)


def truncated_spectrum(
    model: UnitDiffusionModel,
    r: float,
    n: int,
    pr: Optional[float] = None,
    entrance: bool = False,
    tol: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> TruncatedSpectrum:
    """
    The n lowest eigenvalues of the problem restricted to (0, r).

    The right boundary condition is (1 − p_r)e^{−B(r)}φ(r) + p_r w(r) = 0
    (Dirichlet at p_r = 0), or the zero-flux condition w(r) = 0 of an
    entrance boundary. λ_k solves θ(r; λ) = α + kπ for the Prüfer angle θ,
    which increases with λ; its eigenfunction has exactly k interior zeros.

    Raises:
        SpectrumResolutionError: λ_k lies beyond ``spectrum_max_lambda`` or
            two eigenvalues cannot be told apart
    """
    if n < 1:
        raise ValueError("n must be positive")
    if pr is None and not entrance:
        pr = model.pr
    tol = float(tol if tol is not None else setting(config, "lambda_tol"))
    ceiling = float(setting(config, "spectrum_max_lambda"))
    alpha = _target_angle(model, r, pr, entrance)

    eigenvalues: List[float] = []
    lo = -1.0
    for k in range(n):
        target = alpha + k * math.pi

        def mismatch(lam: float) -> float:
            return _prufer_angle(model, lam, r, config) - target

        step = 1.0
        while mismatch(lo) > 0.0:
            lo -= step
            step *= 2.0
            if step > ceiling:
                raise SpectrumResolutionError(f"cannot bracket λ_{k} from below")
        hi = max(lo + 1.0, 1.0)
        while mismatch(hi) < 0.0:
            hi = lo + 2.0 * (hi - lo)
            if hi > ceiling:
                raise SpectrumResolutionError(f"λ_{k} exceeds {ceiling:g}; request fewer eigenvalues")
        value = brentq(mismatch, lo, hi, xtol=tol * max(1.0, abs(lo)), rtol=4 * np.finfo(float).eps, maxiter=200)
        if eigenvalues and value - eigenvalues[-1] <= 10.0 * tol * max(1.0, abs(value)):
            raise SpectrumResolutionError(f"λ_{k} cannot be separated from λ_{k - 1}")
        eigenvalues.append(float(value))
        lo = float(value)
        logger.debug(f"🎼 λ_{k} = {value:.12g}")

    return TruncatedSpectrum(r=r, pr=pr, boundary="entrance" if entrance else "pr", eigenvalues=tuple(eigenvalues))


def spectrum_eigenfunction(
    model: UnitDiffusionModel,
    spectrum: TruncatedSpectrum,
    k: int,
    config: Optional[Mapping[str, Any]] = None,
) -> EigenSolution:
    """φ for λ_k on [0, r], integrated without tail certification."""
    return solve_phi(model, spectrum.eigenvalues[k], spectrum.r, certify=False, config=config)


def interior_zero_count(sol: EigenSolution) -> int:
    """Sign changes of φ strictly inside the grid."""
    values = sol.phi[1:-1]
    signs = np.sign(values[values != 0.0])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _finite_interval_lower(model: UnitDiffusionModel, config: Optional[Mapping[str, Any]]) -> PrincipalEigenvalue:
    """λ̲ on a finite unit domain: the lowest eigenvalue of the two-boundary problem."""
    spectrum = truncated_spectrum(model, model.right, 1, pr=model.pr, entrance=model.pr is None, config=config)
    value = spectrum.eigenvalues[0]
    solution = spectrum_eigenfunction(model, spectrum, 0, config)
    mass = _trapezoid(solution.phi, solution.grid)
    logger.info(f"✅ λ̲ = {value:.12g} on the finite interval (0, {model.right:g})")
    return PrincipalEigenvalue(
        value=value,
        bracket=(value, value),
        x_max=model.right,
        truncation_history=((model.right, value),),
        integrable=True,
        mass=mass,
        raw_value=value,
        separation_point=model.right,
        solution=solution,
    )


def regular_interval_limit(
    model: UnitDiffusionModel,
    r: float,
    pr: float,
    region: Tuple[float, float],
    start: float,
    config: Optional[Mapping[str, Any]] = None,
) -> RegularIntervalLimit:
    """
    Survival asymptotics on (0, r) with two regular endpoints.

    e^{λ0 t}P_x{X_t ∈ A} → ψ_0(x)·∫_A φ_0 / ∫ φ_0ψ_0, and the conditional
    law converges to the normalized φ_0.

    Args:
        model: Unit-diffusion model
        r: Right endpoint
        pr: Boundary parameter at r
        region: The set A as an interval (a1, a2)
        start: Starting point x
        config: Numerical settings
    """
    spectrum = truncated_spectrum(model, r, 1, pr=pr, config=config)
    lambda0 = spectrum.eigenvalues[0]
    solution = spectrum_eigenfunction(model, spectrum, 0, config)
    grid = solution.grid
    phi = solution.phi
    psi = solution.psi
    inside = (grid >= region[0]) & (grid <= region[1])
    normaliser = _trapezoid(phi * psi, grid)
    weight = float(np.interp(start, grid, psi)) * _trapezoid(phi[inside], grid[inside]) / normaliser
    mass = _trapezoid(phi, grid)
    qsd = QsdDensity(lam=lambda0, grid=grid, density=phi / mass, mass=mass)
    return RegularIntervalLimit(lambda0=lambda0, weight=weight, qsd=qsd)


def qsd_density(pe: PrincipalEigenvalue, sol: Optional[EigenSolution] = None) -> QsdDensity:
    """
    Normalize φ_λ̲ into the quasistationary density.

    Raises:
        NotNormalizableError: φ_λ̲ is not integrable (the process escapes)
    """
    if not pe.integrable:
        raise NotNormalizableError(f"φ at λ̲={pe.value:.6g} has infinite mass; there is no QSD")
    sol = sol if sol is not None else pe.solution
    if sol is None:
        raise NotNormalizableError("no eigenfunction attached to the principal eigenvalue")
    keep = sol.grid <= (pe.separation_point if math.isfinite(pe.separation_point) else np.inf)
    grid, phi = sol.grid[keep], sol.phi[keep]
    mass = _trapezoid(phi, grid)
    return QsdDensity(lam=pe.value, grid=grid, density=phi / mass, mass=mass)
