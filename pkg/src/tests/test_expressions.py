#!/usr/bin/env python3
# Tests for the coefficient expression language
import math

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from qsd_forge.errors import ConfigError
from qsd_forge.expressions import X, Coefficient, is_literal_zero, parse_expression, tokenize, unparse

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.unit
class TestParseExpression:
    """Parsing coefficient text into sympy expressions."""

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("0", sympy.Integer(0)),
            ("-x", -X),
            ("2*x^2 + 1", 2 * X**2 + 1),
            ("x^-1", X**-1),
            ("-x^2", -(X**2)),
            ("exp(x) - log(x)", sympy.exp(X) - sympy.log(X)),
            ("max(x, 1, 2)", sympy.Max(X, 2)),
            ("sqrt(abs(x))/pi", sympy.sqrt(sympy.Abs(X)) / sympy.pi),
        ],
    )
    def test_known_expressions(self, text, expected):
        """Operators, precedence and functions map onto the sympy tree."""
        assert sympy.simplify(parse_expression(text) - expected) == 0

    def test_power_is_right_associative(self):
        assert parse_expression("2^3^2") == sympy.Integer(512)

    @given(finite_floats, finite_floats)
    def test_affine_expressions_evaluate_exactly(self, a, b):
        """Any a*x + b parses and evaluates like the arithmetic it spells."""
        expr = parse_expression(f"{a!r}*x + {b!r}")
        value = float(expr.subs(X, 0.5))
        assert value == pytest.approx(0.5 * a + b, rel=1e-12, abs=1e-6)

    @pytest.mark.parametrize(
        "text, column",
        [
            ("x + $", 5),
            ("2 * foo(x)", 5),
            ("(x + 1", 7),
            ("x +", 4),
            ("", 1),
        ],
    )
    def test_errors_carry_columns(self, text, column):
        """Every syntax error reports where it happened."""
        with pytest.raises(ConfigError) as info:
            parse_expression(text, line=3)
        assert info.value.line == 3
        assert info.value.column == column

    def test_column_offset_shifts_reported_columns(self):
        with pytest.raises(ConfigError) as info:
            parse_expression("x $", line=1, column_offset=10)
        assert info.value.column == 13

    @pytest.mark.parametrize("text", ["exp(x, 1)", "min(x)", "log()"])
    def test_wrong_arity(self, text):
        with pytest.raises(ConfigError):
            parse_expression(text)

    def test_tokens_skip_whitespace(self):
        kinds = [token.kind for token in tokenize(" x\t+ 1.5e-3 ")]
        assert kinds == ["NAME", "OP", "NUMBER", "END"]


@pytest.mark.unit
class TestUnparse:
    """Rendering expressions back into model-file syntax."""

    @pytest.mark.parametrize("text", ["-x", "2*x^2 + 1", "exp(-x)*sin(x)", "min(x, 3)", "abs(x - 1/3)", "0.25*x"])
    def test_rendering_parses_to_the_same_expression(self, text):
        expr = parse_expression(text)
        assert parse_expression(unparse(expr)) == expr

    def test_literal_zero(self):
        assert is_literal_zero(parse_expression("0"))
        assert is_literal_zero(parse_expression("x - x"))
        assert not is_literal_zero(parse_expression("x"))


@pytest.mark.unit
class TestCoefficient:
    """Vectorised and scalar evaluation of coefficients."""

    def test_vector_and_scalar_agree(self):
        coefficient = Coefficient(parse_expression("x^2 - 3*x + exp(-x)"), X)
        points = np.linspace(0.1, 5.0, 11)
        vector = coefficient(points)
        scalar = np.array([coefficient.scalar(p) for p in points])
        np.testing.assert_allclose(vector, scalar, rtol=1e-14)

    def test_constant_broadcasts_to_the_input_shape(self):
        coefficient = Coefficient(parse_expression("2.5"), X)
        assert coefficient.is_constant
        assert coefficient(np.zeros((3, 4))).shape == (3, 4)

    def test_derivative_is_exact(self):
        derivative = Coefficient(parse_expression("sin(x)*x"), X).derivative()
        assert derivative.scalar(1.0) == pytest.approx(math.cos(1.0) + math.sin(1.0), rel=1e-14)

    def test_right_limit_resolves_removable_singularities(self):
        coefficient = Coefficient(parse_expression("sin(x)/x"), X)
        assert coefficient.right_limit(0.0) == pytest.approx(1.0)

    def test_needs_exactly_one_source(self):
        with pytest.raises(ValueError):
            Coefficient()
