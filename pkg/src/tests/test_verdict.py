#!/usr/bin/env python3
# Tests for the dichotomy verdict and the simulation cross-checks
import json
import math
import re
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsd_forge.eigen import PrincipalEigenvalue, QsdDensity
from qsd_forge.errors import NumericalError, SimulationError
from qsd_forge.mc import ConditionalHistogram, OmegaTable, SurvivalCurve
from qsd_forge.model import ConditionReport, GBVariant, UnitDiffusionModel
from qsd_forge.verdict import (
    ABOVE_CLAUSE,
    BELOW_CLAUSE,
    EQUAL_CLAUSE,
    ESCAPE_CLAUSE,
    MC_INCONCLUSIVE_CLAUSE,
    MC_KAPPA_CLAUSE,
    MC_LAMBDA_CLAUSE,
    MC_PROTOCOL,
    NO_LIMIT_CLAUSE,
    KLimit,
    KStatus,
    Mode,
    bin_density,
    compare_mc_to_qsd,
    decide,
    detect_kappa_limit,
    omega_convexity_evidence,
    omega_limit_curve,
    resolve_with_mc,
)


def principal(value: float, integrable: bool = True, mass: float = 1.0) -> PrincipalEigenvalue:
    return PrincipalEigenvalue(value, (value, value), 10.0, ((10.0, value),), integrable, mass, value)


def ou_qsd() -> QsdDensity:
    grid = np.linspace(0.0, 6.0, 2001)
    return QsdDensity(1.0, grid, 2.0 * grid * np.exp(-grid * grid), 1.0)


def exponential_curve(rate: float, n: int = 20000, t_max: float = 6.0) -> SurvivalCurve:
    """Death times at the exact exponential quantiles."""
    deaths = -np.log(1.0 - (np.arange(n) + 0.5) / n) / rate
    times = np.arange(0.0, t_max, 0.05)
    alive = n - np.searchsorted(np.sort(deaths), times, side="right")
    return SurvivalCurve(times, alive, n, deaths)


def leaking_histograms() -> list:
    edges = np.array([0.0, 1.0])
    return [
        ConditionalHistogram(t, edges, np.array([1.0 - leak]), 5000, np.array([int(5000 * (1.0 - leak))]), leak)
        for t, leak in ((2.0, 0.1), (4.0, 0.3), (6.0, 0.6))
    ]


k_limits = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False).map(KLimit.finite),
    st.just(KLimit.infinite()),
    st.just(KLimit.none()),
)


@pytest.mark.unit
class TestKappaLimit:
    """Detecting K = lim κ̃ at the right end."""

    @pytest.mark.parametrize(
        "kappa, status, value",
        [
            ("0", KStatus.FINITE, 0.0),
            ("2 + exp(-x)", KStatus.FINITE, 2.0),
            ("x^2", KStatus.INFINITE, math.inf),
            ("exp(x)", KStatus.INFINITE, math.inf),
            ("1 + sin(x)^2", KStatus.NONE, None),
        ],
    )
    def test_limits(self, kappa, status, value):
        limit = detect_kappa_limit(UnitDiffusionModel.from_expressions(kappa=kappa, p0=1.0))
        assert limit.status is status
        if value is None:
            assert limit.value is None
        else:
            assert limit.value == pytest.approx(value, abs=1e-5)

    def test_finite_right_end_has_no_limit(self, dirichlet_interval):
        assert detect_kappa_limit(dirichlet_interval).status is KStatus.NONE


@pytest.mark.unit
class TestDecide:
    """The ordered decision clauses."""

    def test_non_integrable_escapes(self):
        verdict = decide(principal(1.0, integrable=False, mass=math.inf), KLimit.finite(0.5))
        assert verdict.mode is Mode.ESCAPES
        assert verdict.eta == 0.5
        assert verdict.rationale == (ESCAPE_CLAUSE,)

    def test_escape_without_limit_leaves_eta_unknown(self):
        verdict = decide(principal(1.0, integrable=False), KLimit.none())
        assert verdict.mode is Mode.ESCAPES and verdict.eta is None

    @pytest.mark.parametrize("limit", [KLimit.infinite(), KLimit.finite(2.0)])
    def test_limit_above_lambda_converges(self, limit):
        verdict = decide(principal(1.0), limit)
        assert verdict.mode is Mode.CONVERGES
        assert verdict.eta == 1.0
        assert verdict.rationale == (ABOVE_CLAUSE,)

    def test_limit_equal_to_lambda(self):
        verdict = decide(principal(1.0), KLimit.finite(1.0 + 1e-8))
        assert verdict.mode is Mode.AMBIGUOUS
        assert verdict.eta == 1.0
        assert verdict.rationale == (EQUAL_CLAUSE,)

    def test_limit_below_lambda(self):
        verdict = decide(principal(1.0), KLimit.finite(0.5))
        assert verdict.mode is Mode.AMBIGUOUS
        assert verdict.rationale == (BELOW_CLAUSE,)
        assert verdict.leaning is None
        assert verdict.recommendation == MC_PROTOCOL

    def test_growth_condition_sets_a_leaning(self):
        report = ConditionReport(lp_prime_holds=True, gb_variant=GBVariant.GB_PRIME, kappa_star=1.0, b_star=0.0)
        verdict = decide(principal(1.0), KLimit.finite(0.5), report)
        assert verdict.leaning == "converge"
        assert verdict.evidence["gb_variant"] == GBVariant.GB_PRIME.value

    def test_no_limit(self):
        verdict = decide(principal(1.0), KLimit.none())
        assert verdict.mode is Mode.AMBIGUOUS
        assert verdict.rationale == (NO_LIMIT_CLAUSE,)

    def test_clause_ids_follow_the_decision_order(self):
        clauses = [ESCAPE_CLAUSE, ABOVE_CLAUSE, EQUAL_CLAUSE, BELOW_CLAUSE, NO_LIMIT_CLAUSE]
        assert clauses == [f"T:dichotomy({n})" for n in range(1, 6)]
        for clause in (MC_LAMBDA_CLAUSE, MC_KAPPA_CLAUSE, MC_INCONCLUSIVE_CLAUSE):
            assert re.fullmatch(r"MC:[a-z]+(\([a-z-]+\))?", clause)

    @given(st.floats(min_value=0.0, max_value=1e6, allow_nan=False), st.booleans(), k_limits)
    def test_every_input_gets_exactly_one_verdict(self, value, integrable, limit):
        verdict = decide(principal(value, integrable), limit)
        assert verdict.mode in set(Mode)
        assert len(verdict.rationale) == 1
        if verdict.mode is Mode.CONVERGES:
            assert integrable and verdict.eta == value
        if not integrable:
            assert verdict.mode is Mode.ESCAPES

    def test_json_form(self):
        payload = decide(principal(1.0), KLimit.finite(0.5)).to_json()
        restored = json.loads(json.dumps(payload))
        assert restored["mode"] == "Ambiguous"
        assert restored["K"] == 0.5
        assert restored["evidence"]["kappa_limit_status"] == "Finite"


@pytest.mark.unit
class TestOmegaLimit:
    """ψ-ratio limits of ω_t."""

    def test_ou_limit_is_linear(self, absorbed_ou, fast_config):
        """ψ_1(x) = x for the absorbed OU process."""
        curve = omega_limit_curve(1.0, absorbed_ou, 3.0, config=fast_config)
        assert float(curve(np.array(2.5))) == pytest.approx(2.5, rel=1e-6)
        assert float(curve(np.array(1.0))) == 1.0

    def test_flat_limit_at_the_killing_rate(self, constant_killing, fast_config):
        curve = omega_limit_curve(0.5, constant_killing, 3.0, config=fast_config)
        np.testing.assert_allclose(curve.ratio, 1.0, rtol=1e-8)

    def test_needs_a_finite_rate(self, absorbed_ou):
        with pytest.raises(NumericalError):
            omega_limit_curve(math.inf, absorbed_ou, 3.0)

    def test_convexity_evidence(self, absorbed_ou, fast_config):
        table = OmegaTable((0.5, 2.0), (5.0,), np.array([[0.5], [30.0]]), np.array([[0.01], [0.01]]))
        rows = omega_convexity_evidence(table, absorbed_ou, 1.0, 0.0, 3.0, fast_config)
        assert [row["inside"] for row in rows] == [True, False]
        assert rows[0]["limits"][0] == pytest.approx(0.5, rel=1e-6)


@pytest.mark.unit
class TestCompareToQsd:
    """Distances between a conditional histogram and the QSD."""

    def test_identical_laws(self):
        qsd = ou_qsd()
        histogram = replace(bin_density(qsd, np.linspace(0.0, 3.0, 33)), n_alive=1000, t=1.0)
        comparison = compare_mc_to_qsd(histogram, qsd)
        assert comparison.applicable
        assert comparison.tv_distance < 1e-12
        assert comparison.ks_distance < 1e-12
        assert comparison.noise_tv > 0.0
        assert comparison.excess_tv == 0.0

    def test_without_a_qsd(self):
        histogram = leaking_histograms()[0]
        comparison = compare_mc_to_qsd(histogram, None, z=0.5)
        assert not comparison.applicable
        assert comparison.mass_below == pytest.approx(0.45)

    def test_empty_histogram(self):
        empty = ConditionalHistogram(1.0, np.array([0.0, 1.0]), np.zeros(1), 0, np.zeros(1, dtype=int))
        with pytest.raises(SimulationError):
            compare_mc_to_qsd(empty, ou_qsd())


@pytest.mark.unit
class TestResolveWithMc:
    """Settling Ambiguous verdicts with simulation evidence."""

    def test_rate_and_shape_match_the_qsd(self):
        verdict = decide(principal(1.0), KLimit.finite(0.5))
        qsd = ou_qsd()
        histogram = replace(bin_density(qsd, np.linspace(0.0, 3.0, 33)), n_alive=5000, t=6.0)
        resolved = resolve_with_mc(verdict, exponential_curve(1.0), [histogram], qsd, (1.0, 4.0))
        assert resolved.mode is Mode.CONVERGES
        assert resolved.eta == 1.0
        assert resolved.rationale[-1] == MC_LAMBDA_CLAUSE
        assert "mc_eta" in resolved.evidence

    def test_rate_matches_the_kappa_limit(self):
        verdict = decide(principal(1.0), KLimit.finite(0.2))
        resolved = resolve_with_mc(verdict, exponential_curve(0.2), leaking_histograms(), None, (1.0, 4.0))
        assert resolved.mode is Mode.ESCAPES
        assert resolved.eta == 0.2
        assert resolved.rationale == (BELOW_CLAUSE, MC_KAPPA_CLAUSE)

    def test_inconclusive_evidence(self):
        verdict = decide(principal(1.0), KLimit.finite(0.2))
        resolved = resolve_with_mc(verdict, exponential_curve(0.6), leaking_histograms(), None, (1.0, 4.0))
        assert resolved.mode is Mode.AMBIGUOUS
        assert resolved.rationale[-1] == MC_INCONCLUSIVE_CLAUSE

    def test_decided_verdicts_pass_through(self):
        verdict = decide(principal(1.0), KLimit.infinite())
        assert resolve_with_mc(verdict, exponential_curve(1.0), [], None, (1.0, 4.0)) is verdict
