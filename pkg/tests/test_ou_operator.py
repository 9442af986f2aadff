from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import interval_unions, rhos
from noisestab.gaussian_core import QuadratureSpec
from noisestab.ou_operator import (
    heat_equation_residual,
    ou_apply,
    ou_derivative,
    ou_indicator,
    ou_value,
    semigroup_check,
)
from noisestab.sets_1d import IntervalUnion, measure

INF = math.inf
LEFT = IntervalUnion.of((-INF, 0.0))


@pytest.mark.parametrize("rho", [-0.7, 0.0, 0.4, 0.95])
@pytest.mark.parametrize("x", [-2.0, 0.0, 1.3])
def test_full_line_is_fixed(rho, x):
    ev = ou_indicator(IntervalUnion.full(), rho, x)
    assert ev.value == 1.0
    assert ev.derivative == 0.0


@given(interval_unions(), st.floats(-5, 5))
def test_zero_correlation_gives_measure(s, x):
    ev = ou_indicator(s, 0.0, x)
    assert ev.value == pytest.approx(measure(s), abs=1e-15)
    assert ev.derivative == 0.0


def test_half_line_at_origin_and_monte_carlo():
    assert ou_value(LEFT, 0.5, 0.0) == 0.5
    rng = np.random.default_rng(11)
    z = rng.standard_normal(1_000_000)
    hits = np.mean(0.5 * 0.0 + math.sqrt(0.75) * z <= 0.0)
    assert abs(hits - 0.5) < 3 * math.sqrt(0.25 / z.size)


@settings(max_examples=30, deadline=None)
@given(interval_unions(max_components=3), st.floats(-0.9, 0.9), st.floats(-3, 3))
def test_value_matches_integral_of_kernel(s, rho, x):
    sig = math.sqrt(1 - rho * rho)
    ref = sum(
        float(mp.quad(lambda y: mp.npdf((y - rho * x) / sig) / sig, [lo, hi])) for lo, hi in s
    )
    assert ou_value(s, rho, x) == pytest.approx(ref, abs=1e-12)


@given(interval_unions(), st.floats(-0.95, 0.95), st.floats(-4, 4))
def test_value_in_unit_interval(s, rho, x):
    assert 0.0 <= ou_value(s, rho, x) <= 1.0


@given(interval_unions(), st.floats(-0.95, 0.95), st.floats(-4, 4))
def test_complement_symmetry(s, rho, x):
    assert ou_value(s, rho, x) + ou_value(s.complement(), rho, x) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=50)
@given(interval_unions(), st.floats(-0.9, 0.9).filter(lambda r: abs(r) > 0.05), st.floats(-3, 3))
def test_derivatives_match_finite_differences(s, rho, x):
    h = 1e-5
    d1 = (ou_value(s, rho, x + h) - ou_value(s, rho, x - h)) / (2 * h)
    d2 = (ou_derivative(s, rho, x + h) - ou_derivative(s, rho, x - h)) / (2 * h)
    assert ou_derivative(s, rho, x) == pytest.approx(d1, abs=1e-8)
    assert ou_derivative(s, rho, x, order=2) == pytest.approx(d2, abs=1e-7)


def test_derivative_rejects_order():
    with pytest.raises(ValueError):
        ou_derivative(LEFT, 0.5, 0.0, order=3)


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_rho_validation(rho):
    with pytest.raises(ValueError):
        ou_value(LEFT, rho, 0.0)


def test_ou_apply_matches_closed_form_for_smooth_function():
    # T_rho cos(x) = e^{-(1-rho^2)/2} cos(rho x)
    rho, x = 0.6, 0.8
    assert ou_apply(np.cos, rho, x) == pytest.approx(math.exp(-0.32) * math.cos(rho * x), abs=1e-12)


def test_semigroup_examples():
    spec = QuadratureSpec(scheme="tanh_sinh", node_count=200, abs_tol=1e-12)
    assert semigroup_check(LEFT, 0.9, 0.9, 0.3, spec) < 1e-9
    s = IntervalUnion.of((-1.0, 0.5), (1.0, INF))
    assert semigroup_check(s, 0.0, 0.7, 1.1, spec) < 1e-14
    assert semigroup_check(IntervalUnion.full(), 0.5, 0.5, 0.2, spec) == 0.0


@settings(max_examples=20, deadline=None)
@given(interval_unions(max_components=2), st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(-2, 2))
def test_semigroup_property(s, r1, r2, x):
    spec = QuadratureSpec(scheme="tanh_sinh", node_count=200, abs_tol=1e-10)
    assert semigroup_check(s, r1, r2, x, spec) < 1e-9


def test_semigroup_rejects_negative_correlation():
    with pytest.raises(ValueError):
        semigroup_check(LEFT, -0.1, 0.5, 0.0)


def test_heat_equation_examples():
    assert heat_equation_residual(LEFT, 0.5, 0.7) < 1e-6
    assert heat_equation_residual(IntervalUnion.of((-1.0, 1.0)), 0.5, 0.0) < 1e-6
    assert heat_equation_residual(IntervalUnion.full(), 0.5, 0.3) == 0.0


@settings(max_examples=50)
@given(interval_unions(), st.floats(0.1, 0.9), st.floats(-3, 3))
def test_heat_equation_property(s, rho, x):
    assert heat_equation_residual(s, rho, x) < 1e-6


def test_set_hash_tracks_the_set():
    s = IntervalUnion.of((0.0, 1.0))
    assert ou_indicator(s, 0.3, 0.0).set_hash == hash(IntervalUnion.of((0.0, 1.0)))


@given(interval_unions(), rhos)
def test_vectorized_matches_scalar(s, rho):
    xs = np.linspace(-3, 3, 7)
    vec = ou_value(s, rho, xs)
    assert np.allclose(vec, [ou_value(s, rho, float(x)) for x in xs], atol=0, rtol=0)
    assert ou_derivative(s, rho, xs).shape == xs.shape
