"""The Ornstein-Uhlenbeck operator ``T_rho f(x) = E f(rho x + sqrt(1-rho^2) Z)`` on indicators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gaussian_core import DEFAULT_QUADRATURE, QuadratureSpec, gamma1, integrate_gaussian, interval_measure
from .sets_1d import IntervalUnion


def _check_rho(rho: float) -> None:
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")


@dataclass(frozen=True)
class OUEvaluation:
    rho: float
    value: float
    derivative: float
    set_hash: int


def _standardized(s: IntervalUnion, rho: float, x: np.ndarray):
    sigma = math.sqrt(1.0 - rho * rho)
    with np.errstate(invalid="ignore"):
        u_lo = (s.lows[:, None] - rho * x[None, :]) / sigma
        u_hi = (s.highs[:, None] - rho * x[None, :]) / sigma
    return sigma, u_lo, u_hi


def ou_value(s: IntervalUnion, rho: float, x):
    """``T_rho 1_s(x)``, vectorized over ``x``."""
    _check_rho(rho)
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    if s.is_empty:
        out = np.zeros(flat.shape)
    else:
        _, u_lo, u_hi = _standardized(s, rho, flat)
        out = np.clip(interval_measure(u_lo, u_hi).sum(axis=0), 0.0, 1.0)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def ou_derivative(s: IntervalUnion, rho: float, x, order: int = 1):
    """First or second ``x``-derivative of ``T_rho 1_s``, in closed form.

    Uses ``d/dx gamma1((c - rho x)/sigma) = (rho/sigma) u gamma1(u)``.
    """
    _check_rho(rho)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    if s.is_empty or rho == 0.0:
        out = np.zeros(flat.shape)
    else:
        sigma, u_lo, u_hi = _standardized(s, rho, flat)
        g_lo, g_hi = gamma1(u_lo), gamma1(u_hi)
        k = rho / sigma
        if order == 1:
            out = k * (g_lo - g_hi).sum(axis=0)
        else:
            with np.errstate(invalid="ignore"):
                t_lo = np.where(np.isinf(u_lo), 0.0, u_lo * g_lo)
                t_hi = np.where(np.isinf(u_hi), 0.0, u_hi * g_hi)
            out = k * k * (t_lo - t_hi).sum(axis=0)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def ou_indicator(s: IntervalUnion, rho: float, x: float) -> OUEvaluation:
    return OUEvaluation(
        rho=rho,
        value=ou_value(s, rho, float(x)),
        derivative=ou_derivative(s, rho, float(x)),
        set_hash=hash(s),
    )


def ou_apply(f: Callable, rho: float, x: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``T_rho f(x)`` for a general ``f`` by Gaussian quadrature in the noise variable."""
    _check_rho(rho)
    sigma = math.sqrt(1.0 - rho * rho)
    return integrate_gaussian(lambda y: f(rho * x + sigma * np.asarray(y)), spec).value


def semigroup_check(
    s: IntervalUnion, rho1: float, rho2: float, x: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """``|T_rho1 T_rho2 1_s(x) - T_{rho1 rho2} 1_s(x)|`` with the outer operator done by quadrature."""
    for r in (rho1, rho2):
        if not 0.0 <= r < 1.0:
            raise ValueError("semigroup_check takes rho1, rho2 in [0, 1)")
    inner = lambda y: ou_value(s, rho2, y)  # noqa: E731
    outer = ou_apply(inner, rho1, x, spec)
    return abs(outer - ou_value(s, rho1 * rho2, x))


def heat_equation_residual(s: IntervalUnion, rho: float, x: float, h: float = 1e-4) -> float:
    """Mismatch between ``dT/drho`` and ``(-T'' + x T')/rho``.

    The left side is a central difference in ``rho``; the right side is analytic.
    """
    if not (0.0 < rho - h and rho + h < 1.0):
        raise ValueError("need 0 < rho - h and rho + h < 1")
    d_rho = (ou_value(s, rho + h, x) - ou_value(s, rho - h, x)) / (2.0 * h)
    rhs = (-ou_derivative(s, rho, x, order=2) + x * ou_derivative(s, rho, x)) / rho
    return abs(d_rho - rhs)
