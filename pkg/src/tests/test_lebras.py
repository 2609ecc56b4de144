#!/usr/bin/env python3
# Tests for the Bessel-function reference model
import math

import mpmath
import numpy as np
import pytest

from qsd_forge.eigen import find_lambda_lower
from qsd_forge.errors import BesselError, ModelDomainError
from qsd_forge.lebras import (
    LeBrasParams,
    bessel_k_imag,
    find_y_tilde,
    lebras_lambda_lower,
    phi_on_unit_scale,
)


def mp_k(y: float, x: float) -> float:
    return float(mpmath.re(mpmath.besselk(1j * y, x)))


@pytest.mark.unit
class TestBesselKImag:
    """K_{iy}(x) by quadrature against mpmath."""

    @pytest.mark.parametrize("y, x", [(0.0, 1.0), (0.5, 2.0), (1.0, 1.0), (1.5, 3.0), (3.0, 5.0), (2.0, 50.0)])
    def test_matches_mpmath(self, y, x):
        result = bessel_k_imag(y, x)
        assert result.K_value == pytest.approx(mp_k(y, x), rel=1e-8, abs=1e-300)
        assert result.scaled_value == pytest.approx(math.exp(x) * mp_k(y, x), rel=1e-8)

    def test_order_zero_is_the_usual_k0(self):
        assert bessel_k_imag(0.0, 1.0).K_value == pytest.approx(float(mpmath.besselk(0, 1)), rel=1e-10)

    def test_even_in_the_order(self):
        assert bessel_k_imag(-1.3, 2.0).K_value == bessel_k_imag(1.3, 2.0).K_value

    @pytest.mark.parametrize("y, x", [(0.0, 1.0), (0.8, 2.0), (2.0, 4.0)])
    def test_derivative_recurrence(self, y, x):
        """K′_ν = −(K_{ν−1} + K_{ν+1})/2, which is −Re K_{1+iy} for ν = iy."""
        expected = -float(mpmath.re(mpmath.besselk(1 + 1j * y, x)))
        assert bessel_k_imag(y, x).Kprime_value == pytest.approx(expected, rel=1e-8)

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_needs_a_positive_argument(self, x):
        with pytest.raises(BesselError):
            bessel_k_imag(1.0, x)

    def test_oscillation_budget(self):
        with pytest.raises(BesselError, match="pieces"):
            bessel_k_imag(50.0, 1e-3, config={"bessel_max_pieces": 10})


@pytest.mark.unit
class TestYTilde:
    """The order fixed by the reflecting condition."""

    def test_grows_with_x0(self):
        values = [find_y_tilde(x0) for x0 in (1.0, 2.0, 4.0)]
        assert values[0] < values[1] < values[2]

    def test_derivative_changes_sign_at_the_root(self):
        x0 = 2.0
        y_tilde = find_y_tilde(x0)
        assert bessel_k_imag(y_tilde - 1e-3, x0).Kprime_value < 0.0
        assert bessel_k_imag(y_tilde + 1e-3, x0).Kprime_value > 0.0
        assert abs(bessel_k_imag(y_tilde, x0).Kprime_value) < 1e-8

    def test_zero_flux_root(self):
        x0, ratio = 2.0, 1.0
        y_tilde = find_y_tilde(x0, ratio)
        value = bessel_k_imag(y_tilde, x0)
        assert x0 * value.Kprime_value == pytest.approx(ratio * value.K_value, abs=1e-9)

    def test_cap_without_sign_change(self):
        with pytest.raises(BesselError, match="no sign change"):
            find_y_tilde(4.0, config={"bessel_y_cap": 0.5})


@pytest.mark.unit
class TestLeBrasParams:
    """Parameter domain of the geometric model."""

    @pytest.mark.parametrize(
        "sigma, b, k",
        [(0.0, 1.0, 1.0), (1.0, 1.0, 0.0), (1.0, 0.5, 1.0), (2.0, 1.5, 1.0)],
    )
    def test_domain(self, sigma, b, k):
        with pytest.raises(ModelDomainError):
            LeBrasParams(sigma=sigma, b=b, k=k)

    def test_unit_scale_quantities(self):
        params = LeBrasParams(sigma=2.0, b=3.0, k=0.5)
        assert params.drift == pytest.approx(0.5)
        assert params.x0 == pytest.approx(1.0)
        model = params.unit_model()
        assert model.p0 == 1.0
        assert float(model.kappa(np.array([1.0]))[0]) == pytest.approx(0.5 * math.exp(2.0))


@pytest.mark.integration
class TestLeBrasLambdaLower:
    """λ̲ and the QSD of the geometric model."""

    @pytest.fixture(scope="class")
    def unit_result(self):
        return lebras_lambda_lower(LeBrasParams(sigma=1.0, b=1.0, k=1.0), grid_points=256)

    def test_lower_bound(self, unit_result):
        assert unit_result.lambda_lower >= 0.5 * unit_result.params.drift**2
        assert unit_result.lambda_lower == pytest.approx(
            0.125 + unit_result.y_tilde**2 / 8.0, rel=1e-12
        )

    def test_density_is_positive_and_normalized(self, unit_result):
        assert unit_result.positive
        assert np.all(unit_result.xi > 0.0)
        x, xi = unit_result.x_grid, unit_result.xi
        assert float(np.sum(0.5 * (xi[1:] + xi[:-1]) * np.diff(x))) == pytest.approx(1.0, rel=1e-12)

    def test_tail_exponent(self, unit_result):
        assert unit_result.tail_exponent == pytest.approx(-0.75)
        assert unit_result.printed_tail_exponent == pytest.approx(-1.0)
        assert unit_result.tail_exponent_fit == pytest.approx(-0.75, abs=0.02)
        assert not unit_result.warnings

    def test_agrees_with_the_shooting_solver(self, unit_result):
        """The zero-flux root is the one the ODE solver reproduces."""
        pe = find_lambda_lower(unit_result.params.unit_model(), x_max_schedule=[20.0, 40.0])
        assert pe.value == pytest.approx(unit_result.lambda_lower, rel=1e-4)

    def test_phi_matches_the_tabulated_density(self, unit_result):
        """φ on the unit scale is σx·ξ up to normalization."""
        y = unit_result.y_grid[:40]
        phi = phi_on_unit_scale(unit_result.params, unit_result.y_tilde, y)
        ratio = phi / unit_result.phi[:40]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-8)

    def test_printed_boundary_condition(self, unit_result):
        printed = lebras_lambda_lower(unit_result.params, printed_boundary=True, grid_points=64)
        assert printed.printed_boundary
        assert printed.y_tilde != pytest.approx(unit_result.y_tilde, rel=1e-6)
        assert printed.summary()["printed_boundary"] is True
        assert unit_result.summary()["lambda_lower"] == unit_result.lambda_lower
