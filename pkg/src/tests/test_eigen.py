#!/usr/bin/env python3
# Tests for eigenfunctions, the principal eigenvalue and truncated spectra
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from qsd_forge.eigen import (
    PrincipalEigenvalue,
    find_lambda_lower,
    hitting_probability,
    interior_zero_count,
    qsd_density,
    regular_interval_limit,
    riccati_g,
    solve_phi,
    solve_psi,
    spectrum_eigenfunction,
    truncated_spectrum,
)
from qsd_forge.errors import NotNormalizableError, NumericalError
from qsd_forge.model import UnitDiffusionModel


def ou_qsd(x: np.ndarray) -> np.ndarray:
    return 2.0 * x * np.exp(-x * x)


@pytest.mark.unit
class TestEigenfunctions:
    """φ_λ and ψ_λ against closed forms for Brownian motion."""

    def test_reflected_phi_is_a_cosine(self, reflected_bm, fast_config):
        sol = solve_phi(reflected_bm, 0.125, 10.0, config=fast_config)
        np.testing.assert_allclose(sol.phi, np.cos(sol.grid / 2.0), atol=1e-8)
        assert sol.first_zero == pytest.approx(math.pi, rel=1e-8)
        assert not sol.zeros_free

    def test_absorbed_psi_is_a_sine(self, absorbed_bm, fast_config):
        sol = solve_psi(absorbed_bm, 0.5, 2.0, config=fast_config)
        np.testing.assert_allclose(sol.psi, 2.0 * np.sin(sol.grid), atol=1e-8)
        np.testing.assert_allclose(sol.dpsi, 2.0 * np.cos(sol.grid), atol=1e-7)
        assert sol.zeros_free

    def test_phi_is_constant_at_zero(self, reflected_bm, fast_config):
        sol = solve_phi(reflected_bm, 0.0, 5.0, config=fast_config)
        np.testing.assert_allclose(sol.phi, 1.0, atol=1e-12)
        assert sol.zeros_free

    def test_speed_density_links_psi_and_phi(self, absorbed_ou, fast_config):
        """φ_λ = e^{B}ψ_λ."""
        sol = solve_phi(absorbed_ou, 0.7, 3.0, certify=False, config=fast_config)
        np.testing.assert_allclose(sol.phi, sol.psi * absorbed_ou.speed_density(sol.grid), rtol=1e-6, atol=1e-10)

    def test_rescaling_keeps_huge_solutions_accurate(self, reflected_bm, fast_config):
        """cosh(√2·x) passes 1e150 long before x = 300."""
        sol = solve_phi(reflected_bm, -1.0, 300.0, certify=False, config=fast_config)
        expected = math.sqrt(2.0) * sol.grid[-1] + math.log(0.5)
        assert sol.log_abs_phi[-1] == pytest.approx(expected, rel=1e-8)
        assert sol.zeros_free

    def test_solution_satisfies_the_first_order_system(self, fast_config):
        model = UnitDiffusionModel.from_expressions(drift="-x", kappa="x", p0=0.5)
        lam = 0.3
        grid = np.linspace(0.0, 2.0, 4001)
        sol = solve_phi(model, lam, 2.0, grid=grid, certify=False, config=fast_config)
        x, phi = sol.grid, sol.phi
        w = 0.5 * sol.dphi - model.drift(x) * phi
        scale = float(np.max(np.abs(phi)))
        phi_gap = (phi - phi[0]) - cumulative_trapezoid(sol.dphi, x, initial=0.0)
        w_gap = (w - w[0]) - cumulative_trapezoid((model.kappa(x) - lam) * phi, x, initial=0.0)
        assert np.max(np.abs(phi_gap)) < 1e-5 * scale
        assert np.max(np.abs(w_gap)) < 1e-5 * scale

    def test_zero_structure_around_lambda_lower(self, absorbed_ou, fast_config):
        below = solve_phi(absorbed_ou, 0.9, 10.0, config=fast_config)
        above = solve_phi(absorbed_ou, 1.5, 10.0, config=fast_config)
        assert math.isinf(below.first_zero)
        assert 0.0 < above.first_zero < 10.0


@pytest.mark.unit
class TestRiccati:
    """The log-derivative g_λ and its poles."""

    def test_absorbed_bm_gives_reciprocal(self, absorbed_bm, fast_config):
        trace = riccati_g(absorbed_bm, 0.0, 4.0, config=fast_config)
        keep = trace.grid >= 0.5
        np.testing.assert_allclose(trace.g[keep], 1.0 / trace.grid[keep], rtol=1e-7)
        assert trace.blowup_points == (0.0,)

    def test_negative_parameter_has_a_pole(self, reflected_bm, fast_config):
        trace = riccati_g(reflected_bm, -0.5, 3.0, config=fast_config)
        assert len(trace.blowup_points) == 1
        assert trace.blowup_points[0] == pytest.approx(math.pi / 2.0, abs=1e-6)

    def test_positive_parameter_stays_positive(self, reflected_bm, fast_config):
        trace = riccati_g(reflected_bm, 1.0, 10.0, config=fast_config)
        assert np.all(trace.g[1:] > 0.0)
        assert trace.g[-1] == pytest.approx(math.sqrt(2.0), rel=1e-6)
        assert trace.blowup_points == ()

    def test_hitting_probability_matches_cosh_ratio(self, constant_killing, fast_config):
        value = hitting_probability(constant_killing, 1.0, 2.0, config=fast_config)
        assert value == pytest.approx(math.cosh(1.0) / math.cosh(2.0), rel=1e-7)

    def test_hitting_probability_edge_cases(self, constant_killing, fast_config):
        assert hitting_probability(constant_killing, 2.0, 2.0, config=fast_config) == 1.0
        with pytest.raises(ValueError):
            hitting_probability(constant_killing, 3.0, 2.0, config=fast_config)


@pytest.mark.integration
class TestFindLambdaLower:
    """λ̲ by bisection on sign changes over a truncation schedule."""

    def test_reflected_bm_sits_at_the_continuum_edge(self, reflected_bm, fast_config):
        pe = find_lambda_lower(reflected_bm, x_max_schedule=[25.0, 50.0, 100.0], config=fast_config)
        assert pe.value == pytest.approx(0.0, abs=1e-8)
        assert pe.extrapolated
        assert not pe.integrable
        with pytest.raises(NotNormalizableError):
            qsd_density(pe)

    def test_absorbed_ou(self, absorbed_ou, fast_config):
        pe = find_lambda_lower(absorbed_ou, config=fast_config)
        assert pe.value == pytest.approx(1.0, abs=1e-6)
        assert pe.integrable
        assert pe.bracket[0] <= pe.value <= pe.bracket[1]
        qsd = qsd_density(pe)
        gap = np.abs(qsd.density - ou_qsd(qsd.grid))
        tv = 0.5 * float(np.sum(0.5 * (gap[1:] + gap[:-1]) * np.diff(qsd.grid)))
        assert tv < 1e-4
        assert qsd.cdf()[-1] == pytest.approx(1.0, rel=1e-9)

    @pytest.mark.parametrize("shift", [0.1, 0.7, 3.0])
    def test_constant_shift_moves_lambda(self, absorbed_ou, fast_config, shift):
        pe = find_lambda_lower(absorbed_ou.shift_killing(shift), config=fast_config)
        assert pe.value == pytest.approx(1.0 + shift, abs=1e-6)

    def test_drifting_bm_is_not_integrable(self, escape_bm):
        pe = find_lambda_lower(escape_bm, x_max_schedule=[50.0, 100.0, 200.0])
        assert pe.value == pytest.approx(0.5, abs=1e-4)
        assert not pe.integrable
        assert math.isinf(pe.mass)

    def test_schedule_must_increase(self, absorbed_ou):
        with pytest.raises(ValueError):
            find_lambda_lower(absorbed_ou, x_max_schedule=[20.0, 10.0])

    def test_infinite_scale_left_end(self):
        model = replace(UnitDiffusionModel.from_expressions(p0=1.0), left=-math.inf)
        with pytest.raises(NumericalError):
            find_lambda_lower(model)


@pytest.mark.unit
class TestTruncatedSpectrum:
    """Prüfer-angle spectra of the problem on (0, r)."""

    def test_dirichlet_ladder(self, dirichlet_interval, fast_config):
        spectrum = truncated_spectrum(dirichlet_interval, math.pi, 3, config=fast_config)
        np.testing.assert_allclose(spectrum.eigenvalues, [0.5, 2.0, 4.5], rtol=1e-8)
        for k in range(3):
            assert interior_zero_count(spectrum_eigenfunction(dirichlet_interval, spectrum, k, fast_config)) == k

    def test_ground_state_is_a_sine(self, dirichlet_interval, fast_config):
        spectrum = truncated_spectrum(dirichlet_interval, math.pi, 1, config=fast_config)
        sol = spectrum_eigenfunction(dirichlet_interval, spectrum, 0, fast_config)
        np.testing.assert_allclose(sol.phi / sol.phi.max(), np.sin(sol.grid), atol=1e-6)

    def test_neumann_ladder(self, neumann_interval, fast_config):
        spectrum = truncated_spectrum(neumann_interval, math.pi, 3, config=fast_config)
        np.testing.assert_allclose(spectrum.eigenvalues, [0.0, 0.5, 2.0], atol=1e-8)

    def test_entrance_condition(self, reflected_bm, fast_config):
        spectrum = truncated_spectrum(reflected_bm, math.pi, 2, entrance=True, config=fast_config)
        assert spectrum.boundary == "entrance"
        np.testing.assert_allclose(spectrum.eigenvalues, [0.0, 0.5], atol=1e-8)

    def test_killing_shift(self, dirichlet_interval, fast_config):
        pe = find_lambda_lower(dirichlet_interval.shift_killing(0.3), config=fast_config)
        assert pe.value == pytest.approx(0.8, rel=1e-8)
        assert pe.integrable

    def test_needs_a_boundary_rule(self, reflected_bm):
        with pytest.raises(ValueError):
            truncated_spectrum(reflected_bm, 2.0, 1)

    def test_two_regular_ends_limit(self, dirichlet_interval, fast_config):
        """A = (0, π): the weight is ψ_0(x)·∫φ_0/∫φ_0ψ_0 = (4/π)·sin(x)."""
        limit = regular_interval_limit(dirichlet_interval, math.pi, 0.0, (0.0, math.pi), 1.0, fast_config)
        assert limit.lambda0 == pytest.approx(0.5, rel=1e-8)
        assert limit.weight == pytest.approx(4.0 / math.pi * math.sin(1.0), rel=1e-5)
        np.testing.assert_allclose(limit.qsd.density, 0.5 * np.sin(limit.qsd.grid), atol=1e-5)


@pytest.mark.unit
def test_qsd_density_needs_a_solution():
    pe = PrincipalEigenvalue(1.0, (1.0, 1.0), 10.0, ((10.0, 1.0),), True, 1.0, 1.0)
    with pytest.raises(NotNormalizableError):
        qsd_density(pe)
