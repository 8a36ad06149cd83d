"""Expression language: parsing, evaluation, differentiation, round trips."""

import math

import numpy as np
import pytest

from posctrl.errors import EvaluationError, ExpressionSyntaxError, ModelFileError
from posctrl.expr import (
    Bin,
    Call,
    Const,
    Neg,
    Var,
    differentiate,
    evaluate,
    fd_jacobian,
    parse_expression,
    parse_model_file,
    serialize,
)

MU_PARAMS = {"mu_m": 1.0, "K_m": 1.0, "K_i": 1.0}
MU_TEXT = "mu_m*x1/(K_m+x1+x1^2/K_i)"


class TestParsing:
    def test_product_power_structure(self):
        e = parse_expression("x1*x2^2")
        assert e == Bin("*", Var(1), Bin("^", Var(2), Const(2.0)))

    def test_precedence_sum_product_power(self):
        assert evaluate(parse_expression("2+3*4^2"), (), {}) == 50.0

    def test_power_right_associative(self):
        assert evaluate(parse_expression("2^3^2"), (), {}) == 512.0

    def test_unary_minus_binds_below_power(self):
        assert evaluate(parse_expression("-2^2"), (), {}) == -4.0
        assert evaluate(parse_expression("(-2)^2"), (), {}) == 4.0

    def test_haldane_at_one(self):
        e = parse_expression(MU_TEXT)
        assert evaluate(e, (1.0,), MU_PARAMS) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_hill_at_one(self):
        assert evaluate(parse_expression("1/(1+x3^80)"), (0, 0, 1.0), {}) == 0.5

    def test_syntax_error_carries_offset(self):
        with pytest.raises(ExpressionSyntaxError) as info:
            parse_expression("x1*+2")
        assert info.value.offset == 3

    def test_unknown_function(self):
        with pytest.raises(ExpressionSyntaxError, match="unknown function"):
            parse_expression("sin(x1)")

    def test_trailing_garbage(self):
        with pytest.raises(ExpressionSyntaxError):
            parse_expression("1+2 2")

    def test_unbalanced_paren(self):
        with pytest.raises(ExpressionSyntaxError):
            parse_expression("(1+2")


class TestEvaluation:
    def test_constant(self):
        assert evaluate(Const(7.0), (1.0, 2.0), {}) == 7.0

    def test_steep_hill_tail(self):
        # x3^80 at 1.2 is about 2.1e6, so psi is positive but below 1e-6
        val = evaluate(parse_expression("1/(1+x3^80)"), (0, 0, 1.2), {})
        assert 0.0 < val < 1e-6

    def test_division_by_zero_raises(self):
        with pytest.raises(EvaluationError, match="division"):
            evaluate(parse_expression("x1/x2"), (1.0, 0.0), {})

    def test_ln_domain_raises(self):
        with pytest.raises(EvaluationError, match="ln"):
            evaluate(parse_expression("ln(x1)"), (0.0,), {})

    def test_unbound_parameter(self):
        with pytest.raises(EvaluationError, match="unbound"):
            evaluate(parse_expression("a*x1"), (1.0,), {})

    def test_integer_power_of_negative_base(self):
        assert evaluate(parse_expression("x1^3"), (-2.0,), {}) == -8.0

    def test_fractional_power_needs_positive_base(self):
        assert evaluate(parse_expression("x1^0.5"), (4.0,), {}) == pytest.approx(2.0)
        with pytest.raises(EvaluationError):
            evaluate(parse_expression("x1^0.5"), (-4.0,), {})

    def test_exp_ln_inverse(self):
        e = parse_expression("ln(exp(x1))")
        assert evaluate(e, (1.25,), {}) == pytest.approx(1.25, abs=1e-15)


class TestDifferentiate:
    def test_product_square(self):
        d = differentiate(parse_expression("x1*x2^2"), 2)
        assert evaluate(d, (1.0, 3.0), {}) == pytest.approx(6.0)

    def test_haldane_derivative_closed_form(self):
        # d/dx1 [mu_m x/(K_m + x + x^2/K_i)] = mu_m (K_m - x^2/K_i) / D^2,
        # which vanishes at x = sqrt(K_m K_i) = 1 (the growth peak)
        d = differentiate(parse_expression(MU_TEXT), 1)
        assert evaluate(d, (1.0,), MU_PARAMS) == pytest.approx(0.0, abs=1e-15)
        assert evaluate(d, (2.0,), MU_PARAMS) == pytest.approx(-3.0 / 49.0, abs=1e-14)
        assert evaluate(d, (0.5,), MU_PARAMS) == pytest.approx(
            (1 - 0.25) / (1 + 0.5 + 0.25) ** 2, abs=1e-14)

    def test_absent_variable_gives_zero(self):
        d = differentiate(parse_expression(MU_TEXT), 3)
        assert d == Const(0.0)

    def test_power_rule_at_zero_base(self):
        # the logarithmic form would fail at x=0; the power rule must not
        d = differentiate(parse_expression("x3^80"), 3)
        assert evaluate(d, (0, 0, 0.0), {}) == 0.0

    def test_parameter_exponent_uses_power_rule(self):
        d = differentiate(parse_expression("x1^n"), 1)
        assert evaluate(d, (2.0,), {"n": 3.0}) == pytest.approx(12.0)

    def test_variable_exponent_general_rule(self):
        d = differentiate(parse_expression("x1^x2"), 2)
        # d/db a^b = a^b ln a
        assert evaluate(d, (2.0, 3.0), {}) == pytest.approx(8.0 * math.log(2.0))


def _random_expression(rng, n_vars, depth):
    """Random expression, total on a box around the origin (guarded ln, /, ^)."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.5:
            return Const(float(rng.uniform(0.2, 2.5)))
        return Var(int(rng.integers(1, n_vars + 1)))
    pick = rng.random()
    a = _random_expression(rng, n_vars, depth - 1)
    if pick < 0.18:
        return Bin("+", a, _random_expression(rng, n_vars, depth - 1))
    if pick < 0.36:
        return Bin("-", a, _random_expression(rng, n_vars, depth - 1))
    if pick < 0.58:
        return Bin("*", a, _random_expression(rng, n_vars, depth - 1))
    if pick < 0.72:
        b = _random_expression(rng, n_vars, depth - 1)
        denom = Bin("+", Const(0.3), Bin("*", b, b))
        return Bin("/", a, denom)
    if pick < 0.82:
        return Bin("^", a, Const(float(rng.integers(0, 4))))
    if pick < 0.90:
        return Neg(a)
    if pick < 0.95:
        scaled = Bin("/", a, Bin("+", Const(1.0), Bin("*", a, a)))
        return Call("exp", scaled)
    return Call("ln", Bin("+", Const(0.5), Bin("*", a, a)))


def test_roundtrip_random_expressions():
    rng = np.random.default_rng(99)
    for _ in range(100):
        e = _random_expression(rng, 3, int(rng.integers(1, 7)))
        back = parse_expression(serialize(e))
        assert back == e  # structural identity for canonical ASTs
        for _ in range(5):
            x = rng.uniform(-2.0, 2.0, 3)
            assert evaluate(back, x, {}) == evaluate(e, x, {})


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(1234)
    checked = 0
    while checked < 200:
        e = _random_expression(rng, 3, int(rng.integers(2, 7)))
        derivs = [differentiate(e, i + 1) for i in range(3)]
        x = rng.uniform(-1.5, 1.5, 3)
        try:
            if abs(evaluate(e, x, {})) > 1e4:
                continue
            sym = np.array([evaluate(d, x, {}) for d in derivs])
            fd = fd_jacobian(
                lambda y: np.array([evaluate(e, y, {})]), x, rel_step=1e-6)[0]
        except EvaluationError:
            continue
        if np.max(np.abs(sym)) > 1e4:
            continue  # steep regions make central differences meaningless
        rel = np.max(np.abs(fd - sym)) / max(1.0, np.max(np.abs(sym)))
        assert rel < 1e-5, (serialize(e), x, sym, fd)
        checked += 1


class TestModelFile:
    GOOD = """\
# toy two-species model
system toy
dim 2
param a = 1.5
param b = a/3
f1 = -a*x1 + b
f2 = x1 - x2
c = [1, 0]
psi = x1*x2
"""

    def test_parses_and_evaluates(self):
        m = parse_model_file(self.GOOD)
        assert m.name == "toy" and m.n == 2
        assert m.params["b"] == pytest.approx(0.5)
        assert np.allclose(m.f(np.array([2.0, 1.0])), [-2.5, 1.0])
        assert m.psi(np.array([2.0, 3.0])) == 6.0
        np.testing.assert_allclose(m.jacobian(np.array([2.0, 1.0])),
                                   [[-1.5, 0.0], [1.0, -1.0]])

    def test_dimension_mismatch(self):
        bad = self.GOOD.replace("dim 2", "dim 3")
        with pytest.raises(ModelFileError, match="dimension mismatch"):
            parse_model_file(bad)

    def test_unbound_parameter(self):
        bad = self.GOOD.replace("f1 = -a*x1 + b", "f1 = -k9*x1 + b")
        with pytest.raises(ModelFileError, match="unbound parameter 'k9'"):
            parse_model_file(bad)

    def test_state_variable_in_c_rejected(self):
        bad = self.GOOD.replace("c = [1, 0]", "c = [x1, 0]")
        with pytest.raises(ModelFileError, match="state variables"):
            parse_model_file(bad)

    def test_variable_index_out_of_range(self):
        bad = self.GOOD.replace("psi = x1*x2", "psi = x1*x5")
        with pytest.raises(ModelFileError, match="x5"):
            parse_model_file(bad)

    def test_missing_psi(self):
        bad = self.GOOD.replace("psi = x1*x2", "")
        with pytest.raises(ModelFileError, match="psi"):
            parse_model_file(bad)


def test_builtin_jacobians_match_finite_differences(s1, s2, s3):
    rng = np.random.default_rng(5)
    for m in (s1, s2, s3):
        for _ in range(20):
            x = rng.uniform(0.1, 8.0, m.n)
            J = m.jacobian(x)
            J_fd = fd_jacobian(m.f, x)
            rel = np.max(np.abs(J - J_fd)) / max(1.0, np.max(np.abs(J)))
            assert rel < 1e-6
