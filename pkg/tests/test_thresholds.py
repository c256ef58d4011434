import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcplab.errors import ParameterDomainError
from mcplab.thresholds import (
    BromanParams,
    GenericMcpRates,
    LAMBDA_C_LITERATURE,
    McpParams,
    c_for_lambda_bar,
    c_star,
    cpree_broman_params,
    lambda_bar_broman,
    lambda_bar_mcp,
    lambda_c_preset,
    sufficient_c_bound,
    survival_sufficient,
)

mpmath.mp.dps = 50


def mcp_oracle(beta, c, alpha, d):
    """Unrationalized smaller root at 50 digits."""
    b, c, a = mpmath.mpf(beta), mpmath.mpf(c), mpmath.mpf(alpha)
    A = c * b + a + 2 * d * b * a
    D = (c * b - a - 2 * d * b * a) ** 2 + 8 * d * a * c * b**2
    return (A - mpmath.sqrt(D)) / 2


def modulated_oracle(a0, a1, g, p):
    a0, a1, g, p = (mpmath.mpf(v) for v in (a0, a1, g, p))
    return (a1 + a0 + g - mpmath.sqrt((a1 - a0 - g) ** 2 + 4 * g * (1 - p) * (a1 - a0))) / 2


def bisect_c(target, alpha, beta, d):
    """c with lambda_bar == target, by bisection on the high-precision oracle."""
    lo, hi = mpmath.mpf("1e-12"), mpmath.mpf(1)
    while mcp_oracle(beta, hi, alpha, d) < target:
        hi *= 2
    for _ in range(200):
        mid = (lo + hi) / 2
        if mcp_oracle(beta, mid, alpha, d) < target:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


rate = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)
dims = st.integers(min_value=1, max_value=5)


def test_worked_examples():
    assert lambda_bar_mcp(McpParams(4, 6, 8, 1)) == pytest.approx(0.5 * (96 - math.sqrt(8448)), abs=1e-12)
    assert lambda_bar_mcp(McpParams(4, 7, 6, 1)) == pytest.approx(0.5 * (82 - math.sqrt(6052)), abs=1e-12)
    assert lambda_bar_broman(BromanParams(0, 1, 1, 0.5)) == pytest.approx(0.5 * (2 - math.sqrt(2)), abs=1e-15)
    assert c_star(2, 1, 1) == pytest.approx(5.0, abs=1e-12)
    assert sufficient_c_bound(8, 4, 1) == pytest.approx(2 / 4 + 32 / 6, abs=1e-12)


def test_accessors_and_mapping():
    p = McpParams(4, 6, 8, 1)
    assert (p.beta1, p.delta1, p.beta2, p.delta2) == (32, 8, 24, 1)
    b = cpree_broman_params(p)
    assert (b.alpha0, b.alpha1, b.gamma) == (0, 24, 72)
    assert b.p == pytest.approx(1 / 9, rel=1e-15)
    b = cpree_broman_params(McpParams(1, 1, 1, 1))
    assert (b.alpha0, b.alpha1, b.gamma, b.p) == (0, 1, 3, pytest.approx(1 / 3))


@settings(max_examples=300, deadline=None)
@given(rate, rate, rate, dims)
def test_lambda_bar_matches_oracle(beta, c, alpha, d):
    got = lambda_bar_mcp(McpParams(beta, c, alpha, d))
    want = mcp_oracle(beta, c, alpha, d)
    assert got == pytest.approx(float(want), rel=1e-12, abs=1e-300)
    assert 0 < got < min(alpha, c * beta / (1 + 2 * d * beta))


@settings(max_examples=300, deadline=None)
@given(rate, rate, rate, st.floats(min_value=1e-3, max_value=1 - 1e-3))
def test_modulated_threshold_matches_oracle_and_bounds(a0, extra, g, p):
    b = BromanParams(a0, a0 + extra, g, p)
    got = lambda_bar_broman(b)
    assert got == pytest.approx(float(modulated_oracle(b.alpha0, b.alpha1, g, p)), rel=1e-11)
    assert b.alpha0 * (1 - 1e-12) <= got <= b.mean_rate * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(rate, rate, dims)
def test_c_star_matches_bisection(beta, alpha, d):
    m = 2 * d - 1
    if alpha * m <= 1.0:
        with pytest.raises(ParameterDomainError):
            c_star(alpha, beta, d)
        return
    if alpha * m < 1.0 + 1e-6:
        return  # c_star blows up at the boundary; bisection cannot track it
    cs = c_star(alpha, beta, d)
    assert cs > 1
    assert cs == pytest.approx(bisect_c(1.0 / m, alpha, beta, d), rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=2.01, max_value=1e3), st.floats(min_value=2.01, max_value=1e3), st.integers(1, 3))
def test_sufficient_bound_is_sufficient(alpha, beta, d):
    bound = sufficient_c_bound(alpha, beta, d)
    exact = bisect_c(2.0 / d, alpha, beta, d)
    assert exact <= bound * (1 + 1e-9)
    assert lambda_bar_mcp(McpParams(beta, bound + 1e-6, alpha, d)) >= 2.0 / d - 1e-9


def test_sufficient_bound_large_alpha_below_five():
    for d in (1, 2, 3):
        beta = 2.0 / d + 0.5
        assert sufficient_c_bound(1e9, beta, d) < 5


def test_c_for_lambda_bar_inverts():
    for beta, c, alpha, d in [(4, 6, 8, 1), (0.3, 12, 2, 2), (1, 1, 1, 1), (7, 0.5, 30, 3)]:
        lam = lambda_bar_mcp(McpParams(beta, c, alpha, d))
        assert c_for_lambda_bar(lam, alpha, beta, d) == pytest.approx(c, rel=1e-9)
    with pytest.raises(ParameterDomainError):
        c_for_lambda_bar(3.0, 3.0, 1.0, 1)


def test_limits():
    assert lambda_bar_mcp(McpParams(1, 1e9, 2, 1)) == pytest.approx(2, abs=1e-6)
    b = BromanParams(0, 1, 1e6, 0.5)
    assert lambda_bar_broman(b) == pytest.approx(0.5, abs=1e-5)
    for a, g, p in [(3.0, 1.0, 0.2), (0.0, 5.0, 0.9), (2.5, 1e-3, 0.5)]:
        assert lambda_bar_broman(BromanParams(a, a, g, p)) == pytest.approx(a, abs=1e-12)


@pytest.mark.parametrize(
    "args",
    [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, float("nan"), 1), (1, 1, 1, 0), (1, 1, 1, 1.5), (1, 1, math.inf, 1)],
)
def test_mcp_domain(args):
    with pytest.raises(ParameterDomainError):
        McpParams(*args)


@pytest.mark.parametrize(
    "args", [(-1, 1, 1, 0.5), (2, 1, 1, 0.5), (0, 1, 0, 0.5), (0, 1, 1, 0.0), (0, 1, 1, 1.0)]
)
def test_modulated_params_domain(args):
    with pytest.raises(ParameterDomainError):
        BromanParams(*args)


def test_other_domains():
    with pytest.raises(ParameterDomainError):
        c_star(1.0, 1.0, 1)
    with pytest.raises(ParameterDomainError):
        c_star(1 / 3, 1.0, 2)
    with pytest.raises(ParameterDomainError, match="alpha"):
        sufficient_c_bound(2.0, 4.0, 1)
    with pytest.raises(ParameterDomainError, match="beta"):
        sufficient_c_bound(8.0, 2.0, 1)
    with pytest.raises(ParameterDomainError):
        GenericMcpRates(-1, 0, 0, 0)
    with pytest.raises(ParameterDomainError):
        GenericMcpRates.contact_process(-0.5)
    with pytest.raises(ParameterDomainError):
        survival_sufficient(McpParams(4, 6, 8), 0.0)


def test_presets():
    assert lambda_c_preset("lower", 1) == 1.0
    assert lambda_c_preset("lower", 3) == pytest.approx(0.2)
    assert lambda_c_preset("upper", 2) == 1.0
    assert lambda_c_preset("literature", 1) == LAMBDA_C_LITERATURE[1]
    assert lambda_c_preset("1.5", 1) == 1.5
    with pytest.raises(ParameterDomainError):
        lambda_c_preset("literature", 4)
    with pytest.raises(ParameterDomainError):
        lambda_c_preset("banana", 1)
    with pytest.raises(ParameterDomainError):
        lambda_c_preset("-1", 1)


def test_sufficiency_is_strict():
    p = McpParams(4, 6, 8, 1)
    lam = lambda_bar_mcp(p)
    assert survival_sufficient(p, 2.0)
    assert not survival_sufficient(p, lam)
    assert survival_sufficient(p, lambda_c_preset("literature", 1))
