from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermeval

from noisestab.gaussian_core import ConvergenceError, gauss_hermite_rule, phi
from noisestab.hermite_mehler import (
    CoefficientEnvelope,
    HermiteSeries,
    alpha_zero_claims,
    check_envelope,
    closed_form_leading,
    expand_gaussian_bump,
    expand_gaussian_derivative,
    expand_phi_penalty,
    hermite_eval,
    mehler_closed_form,
    mehler_kernel_1d,
    orthonormal_hermite,
    penalty_function,
)

EXPANDERS = {
    "phi_expansion": expand_phi_penalty,
    "gaussian_expansion": expand_gaussian_bump,
    "gaussian_derivative_expansion": expand_gaussian_derivative,
}


@pytest.mark.parametrize("k, x, expected", [(2, 1.0, 0.0), (0, 3.7, 1.0), (3, 1.0, -1 / 3), (1, -2.5, -2.5)])
def test_hermite_eval_low_orders(k, x, expected):
    assert hermite_eval(k, x) == pytest.approx(expected, abs=1e-15)


@given(st.integers(0, 40), st.floats(-6, 6))
def test_hermite_eval_matches_numpy(k, x):
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    ref = hermeval(x, coef) / math.factorial(k)
    assert hermite_eval(k, x) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@settings(max_examples=60)
@given(st.integers(0, 30), st.floats(-4, 4))
def test_derivative_ladder(k, x):
    h = 1e-5
    fd = (hermite_eval(k + 1, x + h) - hermite_eval(k + 1, x - h)) / (2 * h)
    assert abs(fd - hermite_eval(k, x)) <= 1e-6 * max(1.0, abs(hermite_eval(k, x)))


@pytest.mark.parametrize("k", [-1, 401, 2.5])
def test_hermite_eval_rejects_bad_order(k):
    with pytest.raises(ValueError):
        hermite_eval(k, 0.0)


def test_orthonormal_system_under_gauss_hermite():
    x, w = gauss_hermite_rule(200)
    e = orthonormal_hermite(60, x)
    gram = (e * w) @ e.T
    assert np.max(np.abs(gram - np.eye(61))) < 1e-12


def test_mehler_at_zero_correlation():
    x, y = 0.7, -1.3
    assert mehler_kernel_1d(0.0, x, y, 10) == pytest.approx(math.exp(-(x * x + y * y) / 2), rel=1e-15)


def test_mehler_origin_value():
    assert abs(mehler_kernel_1d(0.5, 0.0, 0.0, 60) - 1 / math.sqrt(0.75)) < 1e-12


@given(st.floats(-0.9, 0.9), st.floats(-4, 4), st.floats(-4, 4))
def test_mehler_symmetric(rho, x, y):
    assert mehler_kernel_1d(rho, x, y, 50) == mehler_kernel_1d(rho, y, x, 50)


@pytest.mark.parametrize("rho", [0.3, -0.6, 0.9])
def test_mehler_matches_closed_form_on_grid(rho):
    g = np.linspace(-4, 4, 21)
    X, Y = np.meshgrid(g, g)
    err = np.abs(mehler_kernel_1d(rho, X, Y, 200) - mehler_closed_form(rho, X, Y))
    assert err.max() < 1e-9


def _mp_coefficient(kind, beta, alpha, k):
    def f(x):
        s2 = 1 - beta * beta
        u = beta * x - alpha
        if kind == "phi_expansion":
            val = mp.ncdf(u / mp.sqrt(s2))
        else:
            bump = mp.exp(-u * u / (2 * s2))
            val = bump / mp.sqrt(s2) if kind == "gaussian_expansion" else -u * bump / s2**1.5
        ek = mp.hermite(k, x / mp.sqrt(2)) / mp.sqrt(2**k * mp.factorial(k))
        return val * ek * mp.npdf(x)

    with mp.workdps(30):
        return float(mp.quad(f, [-mp.inf, 0, mp.inf]))


@pytest.mark.parametrize("kind", list(EXPANDERS))
@pytest.mark.parametrize("beta, alpha", [(0.5, 0.0), (0.3, 1.2), (0.7, -0.8)])
def test_leading_coefficients_match_closed_forms_and_quadrature(kind, beta, alpha):
    s = EXPANDERS[kind](beta, alpha, N=20)
    c0, c1 = closed_form_leading(kind, beta, alpha)
    assert s.coeffs[0] == pytest.approx(c0, abs=1e-12)
    assert s.coeffs[1] == pytest.approx(c1, abs=1e-12)
    for k in (0, 1, 4, 7):
        assert s.coeffs[k] == pytest.approx(_mp_coefficient(kind, beta, alpha, k), abs=1e-11)


def test_phi_constant_term_is_the_measure_of_the_matched_half_space():
    for alpha in (-1.0, 0.0, 0.4):
        assert expand_phi_penalty(0.5, alpha, N=4).coeffs[0] == pytest.approx(phi(-alpha), abs=1e-12)


def test_named_examples():
    assert expand_phi_penalty(0.5, 0.0).coeffs[1] == pytest.approx(0.5 / math.sqrt(2 * math.pi), abs=1e-12)
    phi_series = expand_phi_penalty(0.5, 0.0, N=60).array
    assert np.max(np.abs(phi_series[2::2])) < 1e-12
    assert expand_gaussian_bump(0.5, 0.0).coeffs[0] == pytest.approx(1.0, abs=1e-12)
    assert expand_gaussian_bump(0.5, 0.0).coeffs[1] == pytest.approx(0.0, abs=1e-12)
    assert expand_gaussian_bump(0.5, 1.0).coeffs[1] == pytest.approx(0.5 * math.exp(-0.5), abs=1e-12)
    assert expand_gaussian_derivative(0.5, 0.0).coeffs[0] == pytest.approx(0.0, abs=1e-12)


def test_derivative_series_first_coefficient():
    # Under the bump the variable is N(alpha beta, 1 - beta^2); at alpha = 0
    # the first coefficient is -beta e^0 = -0.5, confirmed by quadrature.
    c1 = expand_gaussian_derivative(0.5, 0.0).coeffs[1]
    assert c1 == pytest.approx(-0.5, abs=1e-12)
    assert c1 == pytest.approx(_mp_coefficient("gaussian_derivative_expansion", 0.5, 0.0, 1), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(EXPANDERS)), st.floats(0.05, 0.7), st.floats(-2.5, 2.5))
def test_reconstruction_at_origin(kind, beta, alpha):
    # the order-60 tail is about beta**60, below 1e-8 only for beta <= 0.7
    s = EXPANDERS[kind](beta, alpha, N=60)
    assert s.evaluate(0.0) == pytest.approx(float(penalty_function(kind, beta, alpha, 0.0)), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(EXPANDERS)), st.floats(0.05, 0.85), st.floats(-2.5, 2.5))
def test_parseval(kind, beta, alpha):
    s = EXPANDERS[kind](beta, alpha, N=100)
    x, w = gauss_hermite_rule(300)
    norm2 = float(np.sum(w * penalty_function(kind, beta, alpha, x) ** 2))
    assert abs(s.l2_norm() ** 2 - norm2) <= 1e-8


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.2])
def test_expansion_rejects_beta_out_of_range(beta):
    with pytest.raises(ValueError):
        expand_phi_penalty(beta, 0.0)


def test_expansion_reports_unreachable_tolerance():
    with pytest.raises(ConvergenceError):
        expand_phi_penalty(0.99, 0.0, N=10, tol=1e-16)


def test_series_json_round_trip():
    s = expand_gaussian_bump(0.4, 0.3, N=12)
    back = HermiteSeries.from_json(s.to_json())
    assert back == s
    assert back.coeffs == s.coeffs


# -- envelopes ----------------------------------------------------------------


def test_envelope_example_passes():
    env = CoefficientEnvelope(0.5, 0.25, 0.0, "phi_expansion")
    assert check_envelope(expand_phi_penalty(0.5, 0.0, N=60), env).passed


def test_zero_series_passes():
    env = CoefficientEnvelope(0.5, 0.25, 0.0, "gaussian_expansion")
    assert check_envelope(HermiteSeries((0.0,) * 61), env).passed


def test_constructed_violation_is_reported():
    env = CoefficientEnvelope(0.5, 0.25, 0.7, "gaussian_expansion")
    s = expand_gaussian_bump(0.5, 0.7, N=60).with_coefficient(5, 2 * env(5))
    report = check_envelope(s, env)
    assert not report.passed
    assert report.first_violation == 5


@pytest.mark.parametrize("kind", list(EXPANDERS))
@pytest.mark.parametrize("beta, lam", [(0.3, 0.1), (0.5, 0.25), (0.6, 0.3), (0.45, 0.45)])
@pytest.mark.parametrize("alpha", [-2.0, -0.5, 0.0, 1.0, 2.5])
def test_envelopes_hold(kind, beta, lam, alpha):
    series = EXPANDERS[kind](beta, alpha, N=60)
    assert check_envelope(series, CoefficientEnvelope(beta, lam, alpha, kind)).passed


@pytest.mark.parametrize("kwargs", [dict(lam=0.6), dict(lam=0.0), dict(beta=1.0), dict(kind="other")])
def test_envelope_validation(kwargs):
    base = dict(beta=0.5, lam=0.25, alpha=0.0, kind="phi_expansion")
    with pytest.raises(ValueError):
        CoefficientEnvelope(**{**base, **kwargs})


@pytest.mark.parametrize("kind, start", [("gaussian_expansion", 1), ("phi_expansion", 2)])
@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
def test_alpha_zero_sharp_bounds(kind, start, beta):
    s = EXPANDERS[kind](beta, 0.0, N=60).array
    k = np.arange(start, 61)
    assert np.all(np.abs(s[start:]) <= alpha_zero_claims(kind, beta, k) + 1e-14)
