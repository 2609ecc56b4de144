#!/usr/bin/env python3
# 🌀 Eidosian Verdict Forge
"""
Survival dichotomy verdicts.

Combines the principal eigenvalue λ̲, the integrability of φ_λ̲ and the limit
K = lim κ̃ into one of three modes: the conditioned process converges to the
quasistationary distribution, it escapes to infinity, or the analytic
information cannot decide. Clauses are applied in a fixed order so every
combination of inputs maps to exactly one verdict; the clauses that fired
are listed in the verdict's rationale.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .eigen import PrincipalEigenvalue, QsdDensity, solve_psi
from .errors import NumericalError, SimulationError
from .global_info import setting
from .mc import (
    CompactDensity,
    ConditionalHistogram,
    OmegaTable,
    SimConfig,
    SurvivalCurve,
    estimate_akr,
    simulate_ensemble,
)
from .model import ConditionReport, GBVariant, UnitDiffusionModel, condition_grid, nondecreasing

logger = logging.getLogger("qsd_forge.verdict")


class Mode(str, Enum):
    CONVERGES = "ConvergesToQSD"
    ESCAPES = "EscapesToInfinity"
    AMBIGUOUS = "Ambiguous"


class KStatus(str, Enum):
    FINITE = "Finite"
    INFINITE = "Infinite"
    NONE = "None"


# Rationale ids: T:<rule>(<clause>) for the decision clauses of `decide`, MC:<outcome> for simulation.
ESCAPE_CLAUSE = "T:dichotomy(1)"
ABOVE_CLAUSE = "T:dichotomy(2)"
EQUAL_CLAUSE = "T:dichotomy(3)"
BELOW_CLAUSE = "T:dichotomy(4)"
NO_LIMIT_CLAUSE = "T:dichotomy(5)"
MC_LAMBDA_CLAUSE = "MC:rate(lambda)"
MC_KAPPA_CLAUSE = "MC:rate(kappa-limit)"
MC_INCONCLUSIVE_CLAUSE = "MC:inconclusive"

MC_PROTOCOL = (
    "simulate from a compactly supported start, fit the killing rate over a late window and "
    "compare it with λ̲ and K; compare the late conditional histogram with the QSD"
)


@dataclass(frozen=True)
class KLimit:
    status: KStatus
    value: Optional[float] = None

    @classmethod
    def finite(cls, value: float) -> "KLimit":
        return cls(KStatus.FINITE, float(value))

    @classmethod
    def infinite(cls) -> "KLimit":
        return cls(KStatus.INFINITE, math.inf)

    @classmethod
    def none(cls) -> "KLimit":
        return cls(KStatus.NONE, None)

    def as_number(self) -> Optional[float]:
        return self.value


@dataclass(frozen=True)
class DichotomyVerdict:
    mode: Mode
    eta: Optional[float]
    lambda_lower: float
    K: Optional[float]
    integrable: bool
    rationale: Tuple[str, ...]
    evidence: Dict[str, Any] = field(default_factory=dict)
    leaning: Optional[str] = None
    recommendation: Optional[str] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "eta": self.eta,
            "lambda_lower": self.lambda_lower,
            "K": self.K,
            "integrable": self.integrable,
            "rationale": list(self.rationale),
            "evidence": dict(self.evidence),
            "leaning": self.leaning,
            "recommendation": self.recommendation,
        }


@dataclass(frozen=True)
class OmegaLimitCurve:
    eta: float
    reference: float
    grid: np.ndarray
    ratio: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.grid, self.ratio)


@dataclass(frozen=True)
class QsdComparison:
    applicable: bool
    tv_distance: float
    ks_distance: float
    z: float
    mass_below: float
    noise_tv: float = 0.0  # expected tv of an exact sample of the same size

    @property
    def excess_tv(self) -> float:
        return max(0.0, self.tv_distance - self.noise_tv)


@dataclass(frozen=True)
class InvarianceCheck:
    survival: float
    expected: float
    se: float
    survival_ok: bool
    tv_distance: float
    histogram_ok: bool

    @property
    def passed(self) -> bool:
        return self.survival_ok and self.histogram_ok


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# ⚖️ Analytic decision
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def detect_kappa_limit(
    model: UnitDiffusionModel,
    y_max: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> KLimit:
    """
    Look for K = lim κ̃(y) over the last two decades of a geometric grid.

    Finite when κ̃ varies there by at most atol + rtol·|K|; Infinite when it
    is nondecreasing and overflows or grows by two orders of magnitude;
    otherwise no limit is reported.
    """
    if math.isfinite(model.right):
        return KLimit.none()
    grid = condition_grid(y_max or float(setting(config, "condition_y_max")), config)
    window = grid >= grid[-1] / 100.0
    with np.errstate(all="ignore"):
        values = model.kappa(grid[window])
    if np.any(np.isnan(values)):
        return KLimit.none()

    if np.all(np.isfinite(values)):
        last = float(values[-1])
        spread = float(values.max() - values.min())
        atol = float(setting(config, "kappa_limit_atol"))
        rtol = float(setting(config, "kappa_limit_rtol"))
        if spread <= atol + rtol * abs(last):
            return KLimit.finite(last)

    if nondecreasing(values):
        first, last = float(values[0]), float(values[-1])
        if not math.isfinite(last) or last >= 100.0 * max(1.0, first):
            return KLimit.infinite()
    return KLimit.none()


def _equality_tolerance(lambda_lower: float, config: Optional[Mapping[str, Any]]) -> float:
    return max(float(setting(config, "k_equal_atol")), float(setting(config, "k_equal_rtol")) * abs(lambda_lower))


def decide(
    lambda_lower: PrincipalEigenvalue,
    K: KLimit,
    conditions: Optional[ConditionReport] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> DichotomyVerdict:
    """
    Map λ̲, its integrability flag and K to a verdict.

    Clauses, in order:
        1. φ_λ̲ not integrable: the process escapes, η = K (or +inf, or unknown)
        2. K infinite or K > λ̲: convergence to the QSD, η = λ̲
        3. K = λ̲ within tolerance: ambiguous, η = λ̲ = K
        4. K < λ̲: ambiguous, leaning to convergence under a growth condition
        5. no limit K: ambiguous
    """
    lam = lambda_lower.value
    integrable = lambda_lower.integrable
    evidence: Dict[str, Any] = {
        "lambda_bracket": list(lambda_lower.bracket),
        "truncation_history": [list(entry) for entry in lambda_lower.truncation_history],
        "extrapolated": lambda_lower.extrapolated,
        "phi_mass": lambda_lower.mass,
        "kappa_limit_status": K.status.value,
    }
    if lambda_lower.warnings:
        evidence["warnings"] = list(lambda_lower.warnings)
    if conditions is not None:
        evidence["gb_variant"] = conditions.gb_variant.value
        evidence["lp_prime_holds"] = conditions.lp_prime_holds

    def verdict(mode: Mode, eta: Optional[float], clause: str, **extra: Any) -> DichotomyVerdict:
        logger.info(f"⚖️ {mode.value} ({clause}), η={eta}")
        return DichotomyVerdict(mode, eta, lam, K.value, integrable, (clause,), evidence, **extra)

    if not integrable:
        eta = K.value if K.status is not KStatus.NONE else None
        return verdict(Mode.ESCAPES, eta, ESCAPE_CLAUSE)

    if K.status is KStatus.NONE:
        return verdict(Mode.AMBIGUOUS, None, NO_LIMIT_CLAUSE, recommendation=MC_PROTOCOL)

    tolerance = _equality_tolerance(lam, config)
    k_value = float(K.value)  # type: ignore[arg-type]
    if K.status is KStatus.INFINITE or k_value > lam + tolerance:
        return verdict(Mode.CONVERGES, lam, ABOVE_CLAUSE)
    if abs(k_value - lam) <= tolerance:
        return verdict(Mode.AMBIGUOUS, lam, EQUAL_CLAUSE)

    leaning = "converge" if conditions is not None and conditions.gb_variant is not GBVariant.NONE else None
    return verdict(Mode.AMBIGUOUS, None, BELOW_CLAUSE, leaning=leaning, recommendation=MC_PROTOCOL)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📈 Limits and comparisons
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def omega_limit_curve(
    eta: float,
    model: UnitDiffusionModel,
    x_max: float,
    reference: float = 1.0,
    config: Optional[Mapping[str, Any]] = None,
) -> OmegaLimitCurve:
    """
    lim ω_t(x) = ψ_η(x)/ψ_η(reference), tabulated on [0, x_max].

    Raises:
        NumericalError: η is not finite or ψ_η(reference) is below 1e−12
    """
    if not math.isfinite(eta):
        raise NumericalError(f"the ω limit needs a finite η, got {eta}")
    grid = np.unique(np.concatenate((np.linspace(0.0, x_max, int(setting(config, "grid_points"))), [reference])))
    solution = solve_psi(model, eta, x_max, grid=grid, certify=False, config=config)
    at_reference = float(solution.psi[np.searchsorted(solution.grid, reference)])
    if abs(at_reference) < 1e-12:
        raise NumericalError(f"ψ_η vanishes at the reference point ({at_reference:.3g})", reference)
    ratio = solution.psi / at_reference
    ratio[np.searchsorted(solution.grid, reference)] = 1.0
    return OmegaLimitCurve(eta, reference, solution.grid, ratio)


def bin_density(qsd: QsdDensity, edges: np.ndarray) -> ConditionalHistogram:
    """The QSD's mass in each bin, shaped like an MC histogram."""
    cdf = np.interp(edges, qsd.grid, qsd.cdf(), left=0.0, right=1.0)
    probs = np.diff(cdf)
    overflow = max(0.0, 1.0 - float(cdf[-1]))
    return ConditionalHistogram(math.nan, np.asarray(edges, dtype=float), probs, 1, np.zeros(probs.size, dtype=int), overflow)


def compare_mc_to_qsd(
    hist: ConditionalHistogram,
    qsd: Optional[QsdDensity],
    z: Optional[float] = None,
) -> QsdComparison:
    """
    Total-variation and Kolmogorov-Smirnov distances on [0, z].

    Both laws are restricted to the bins below ``z`` and renormalized there.
    ``noise_tv`` is the tv an exact sample of the same size would show
    on these bins; decisions use the excess over it. Without a QSD the comparison is not applicable and only the conditional
    mass below ``z`` is reported.

    Raises:
        SimulationError: The histogram is empty
    """
    if hist.empty:
        raise SimulationError(f"empty histogram at t={hist.t:g}")
    z = float(z if z is not None else hist.bin_edges[-1])
    below = hist.mass_below(z)
    if qsd is None:
        return QsdComparison(False, math.nan, math.nan, z, below)

    keep = hist.bin_edges[1:] <= z + 1e-12
    edges = hist.bin_edges[: int(keep.sum()) + 1]
    empirical = hist.probs[keep]
    reference = bin_density(qsd, edges).probs
    if empirical.sum() <= 0 or reference.sum() <= 0:
        return QsdComparison(True, 1.0, 1.0, z, below)
    empirical = empirical / empirical.sum()
    reference = reference / reference.sum()
    tv = 0.5 * float(np.abs(empirical - reference).sum())
    ks = float(np.max(np.abs(np.cumsum(empirical) - np.cumsum(reference))))
    n = max(1.0, hist.n_alive * float(hist.probs[keep].sum()))
    noise = 0.5 * float(np.sum(np.sqrt(2.0 * reference * (1.0 - reference) / (math.pi * n))))
    return QsdComparison(True, tv, ks, z, below, noise)


def check_qsd_invariance(
    model: UnitDiffusionModel,
    qsd: QsdDensity,
    cfg: SimConfig,
    horizon: float = 1.0,
    config: Optional[Mapping[str, Any]] = None,
) -> InvarianceCheck:
    """
    Start from the QSD and check it is λ̲-invariant over ``horizon``.

    Survival must equal e^{−λ̲·horizon} within 3 standard errors and the
    conditional histogram must stay within the tv threshold of the QSD.
    """
    initial = CompactDensity.normalized(qsd.grid, qsd.density)
    run_cfg = replace(cfg, initial=initial, t_max=horizon)
    result = simulate_ensemble(model, run_cfg, snapshot_times=[horizon], z_display=float(qsd.grid[-1]), config=config)
    survival = float(result.curve.fraction[-1])
    expected = math.exp(-qsd.lam * horizon)
    se = math.sqrt(max(expected * (1.0 - expected), 1e-300) / cfg.n_paths)
    comparison = compare_mc_to_qsd(result.histograms[0], qsd)
    threshold = float(setting(config, "tv_threshold"))
    check = InvarianceCheck(
        survival=survival,
        expected=expected,
        se=se,
        survival_ok=abs(survival - expected) <= 3.0 * se,
        tv_distance=comparison.tv_distance,
        histogram_ok=comparison.excess_tv < threshold,
    )
    logger.info(f"🔍 QSD invariance: survival {survival:.5f} vs {expected:.5f}, tv={comparison.tv_distance:.4f}")
    return check


def omega_convexity_evidence(
    table: OmegaTable,
    model: UnitDiffusionModel,
    lambda_lower: float,
    K: float,
    x_max: float,
    config: Optional[Mapping[str, Any]] = None,
) -> List[Dict[str, Any]]:
    """
    Whether the latest ω̂_t(x) lies between the ψ-ratio limits at λ̲ and K.

    Reported as evidence; a miss is not an error.
    """
    low_curve = omega_limit_curve(lambda_lower, model, x_max, table.reference, config)
    k_curve = omega_limit_curve(K, model, x_max, table.reference, config)
    rows: List[Dict[str, Any]] = []
    for i, x in enumerate(table.xs):
        a, b = float(low_curve(np.array(x))), float(k_curve(np.array(x)))
        value, se = float(table.omega[i, -1]), float(table.se[i, -1])
        inside = min(a, b) - 3.0 * se <= value <= max(a, b) + 3.0 * se
        rows.append({"x": x, "t": table.ts[-1], "omega": value, "se": se, "limits": [a, b], "inside": inside})
    return rows


def _mass_inside_decreasing(histograms: Sequence[ConditionalHistogram]) -> bool:
    populated = [h for h in histograms if not h.empty]
    if len(populated) < 2:
        return False
    inside = np.array([1.0 - h.overflow for h in populated])
    se = np.array([math.sqrt(max(p * (1 - p), 1e-12) / h.n_alive) for p, h in zip(inside, populated)])
    steps_ok = np.all(inside[1:] <= inside[:-1] + 3.0 * np.hypot(se[1:], se[:-1]))
    return bool(steps_ok and inside[-1] < inside[0])


def resolve_with_mc(
    verdict: DichotomyVerdict,
    curve: SurvivalCurve,
    histograms: Sequence[ConditionalHistogram],
    qsd: Optional[QsdDensity],
    fit_window: Tuple[float, float],
    seed: int = 0,
    config: Optional[Mapping[str, Any]] = None,
) -> DichotomyVerdict:
    """
    Settle an Ambiguous verdict with simulation evidence.

    Converges when the fitted killing rate covers λ̲ and the last
    conditional histogram is close to the QSD; escapes when the rate covers
    K and the conditional mass inside the display window keeps falling.
    Anything else stays Ambiguous with the evidence attached.
    """
    if verdict.mode is not Mode.AMBIGUOUS:
        return verdict
    akr = estimate_akr(curve, fit_window, seed=seed, config=config)
    evidence = dict(verdict.evidence)
    evidence["mc_eta"] = {"value": akr.value, "ci": [akr.ci_low, akr.ci_high]}
    threshold = float(setting(config, "tv_threshold"))

    def covers(value: Optional[float]) -> bool:
        return value is not None and math.isfinite(value) and akr.ci_low <= value <= akr.ci_high

    last = next((h for h in reversed(histograms) if not h.empty), None)
    comparison = compare_mc_to_qsd(last, qsd) if last is not None and qsd is not None else None
    if comparison is not None:
        evidence["mc_tv_distance"] = comparison.tv_distance
        evidence["mc_tv_noise"] = comparison.noise_tv
        evidence["mc_ks_distance"] = comparison.ks_distance

    if covers(verdict.lambda_lower) and comparison is not None and comparison.excess_tv < threshold:
        logger.info("✨ Simulation settles the verdict: ConvergesToQSD")
        return replace(
            verdict,
            mode=Mode.CONVERGES,
            eta=verdict.lambda_lower,
            rationale=verdict.rationale + (MC_LAMBDA_CLAUSE,),
            evidence=evidence,
        )
    if covers(verdict.K) and _mass_inside_decreasing(histograms):
        logger.info("✨ Simulation settles the verdict: EscapesToInfinity")
        return replace(
            verdict,
            mode=Mode.ESCAPES,
            eta=verdict.K,
            rationale=verdict.rationale + (MC_KAPPA_CLAUSE,),
            evidence=evidence,
        )
    logger.warning("⚠️ Simulation evidence does not settle the verdict")
    return replace(verdict, rationale=verdict.rationale + (MC_INCONCLUSIVE_CLAUSE,), evidence=evidence)
