"""Hermite polynomials, the Mehler kernel, and spectra of the penalty functions.

Two normalizations appear. ``h_k = He_k / k!`` has generating function
``exp(lam*x - lam**2/2) = sum_k lam**k h_k(x)`` and satisfies ``h_{k+1}' = h_k``.
The orthonormal system in ``L2(gamma1)`` is ``e_k = h_k * sqrt(k!)``; series
coefficients are always taken against ``e_k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .gaussian_core import ConvergenceError, gauss_hermite_rule, phi

MAX_ORDER = 400

SeriesKind = Literal["phi_expansion", "gaussian_expansion", "gaussian_derivative_expansion"]
SERIES_KINDS: tuple[str, ...] = ("phi_expansion", "gaussian_expansion", "gaussian_derivative_expansion")


def _check_order(k: int) -> None:
    if k < 0 or k > MAX_ORDER or int(k) != k:
        raise ValueError(f"Hermite order must be an integer in [0, {MAX_ORDER}], got {k}")


def hermite_eval(k: int, x):
    """Evaluate ``h_k(x) = He_k(x)/k!`` by the stable recurrence.

    ``(k+1) h_{k+1} = x h_k - h_{k-1}`` follows from differentiating the
    generating function in ``lam``.
    """
    _check_order(k)
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for j in range(k):
        prev, cur = cur, (x * cur - prev) / (j + 1)
    return float(cur) if cur.ndim == 0 else cur


def orthonormal_hermite(k_max: int, x) -> np.ndarray:
    """Rows ``e_0(x), ..., e_{k_max}(x)`` of the orthonormal Hermite system."""
    _check_order(k_max)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((k_max + 1,) + x.shape)
    out[0] = 1.0
    if k_max >= 1:
        out[1] = x
    for k in range(1, k_max):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def mehler_kernel_1d(rho: float, x, y, trunc: int):
    """Truncated Mehler sum ``sum_{k<=trunc} rho^k h_k(x) h_k(y) k! e^{-(x^2+y^2)/2}``."""
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    _check_order(trunc)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x_b, y_b = np.broadcast_arrays(x, y)
    ex = orthonormal_hermite(trunc, x_b.ravel())
    ey = orthonormal_hermite(trunc, y_b.ravel())
    powers = rho ** np.arange(trunc + 1)
    # ex * ey first so swapping x and y is exact; sum from the top order down.
    total = np.sum(powers[::-1, None] * (ex * ey)[::-1], axis=0)
    out = (total * np.exp(-0.5 * (x_b.ravel() ** 2 + y_b.ravel() ** 2))).reshape(x_b.shape)
    return float(out) if out.ndim == 0 else out


def mehler_closed_form(rho: float, x, y):
    """``(1-rho^2)^{-1/2} exp((-x^2 - y^2 + 2 rho x y) / (2 (1-rho^2)))``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = 1.0 - rho * rho
    out = np.exp((-x * x - y * y + 2.0 * rho * x * y) / (2.0 * s)) / math.sqrt(s)
    return float(out) if np.ndim(out) == 0 else out


# -- penalty functions and their spectra -------------------------------------


def penalty_function(kind: str, beta: float, alpha: float, x):
    """The three functions whose spectra are tracked.

    ``phi_expansion``: ``Phi((beta x - alpha)/sqrt(1-beta^2))``.
    ``gaussian_expansion``: ``(1-beta^2)^{-1/2} exp(-(beta x-alpha)^2/(2(1-beta^2)))``.
    ``gaussian_derivative_expansion``: ``(1-beta^2)^{-3/2} (alpha - beta x) exp(...)``.
    """
    x = np.asarray(x, dtype=float)
    s2 = 1.0 - beta * beta
    u = beta * x - alpha
    if kind == "phi_expansion":
        return phi(u / math.sqrt(s2))
    bump = np.exp(-(u * u) / (2.0 * s2))
    if kind == "gaussian_expansion":
        return bump / math.sqrt(s2)
    if kind == "gaussian_derivative_expansion":
        return -u * bump / s2**1.5
    raise ValueError(f"unknown series kind {kind!r}")


def closed_form_leading(kind: str, beta: float, alpha: float) -> tuple[float, float]:
    """Closed forms of the first two coefficients ``(c_0, c_1)``.

    The constant term of the phi expansion is ``Phi(-alpha)``, the Gaussian
    measure ``a`` of the matched half space. For the derivative kind, under
    ``exp(...) gamma1`` the variable is normal with mean ``alpha*beta`` and
    variance ``1-beta^2``, which gives ``c_0 = alpha e^{-alpha^2/2}`` and
    ``c_1 = beta (alpha^2-1) e^{-alpha^2/2}``.
    """
    g = math.exp(-0.5 * alpha * alpha)
    if kind == "phi_expansion":
        return phi(-alpha), beta * g / math.sqrt(2.0 * math.pi)
    if kind == "gaussian_expansion":
        return g, alpha * beta * g
    if kind == "gaussian_derivative_expansion":
        return alpha * g, beta * (alpha * alpha - 1.0) * g
    raise ValueError(f"unknown series kind {kind!r}")


@dataclass(frozen=True)
class HermiteSeries:
    """Coefficients against ``e_k``; immutable."""

    coeffs: tuple[float, ...]
    beta: float = math.nan
    alpha: float = math.nan
    kind: str = "custom"
    quadrature_error: float = field(default=0.0, compare=False)

    @property
    def truncation_order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.array**2)))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        basis = orthonormal_hermite(self.truncation_order, x.ravel())
        out = (self.array @ basis).reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def with_coefficient(self, k: int, value: float) -> HermiteSeries:
        c = list(self.coeffs)
        c[k] = float(value)
        return HermiteSeries(tuple(c), self.beta, self.alpha, self.kind)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "alpha": self.alpha, "kind": self.kind, "coeffs": list(self.coeffs)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> HermiteSeries:
        return cls(tuple(float(c) for c in d["coeffs"]), float(d["beta"]), float(d["alpha"]), str(d["kind"]))

    @classmethod
    def from_json(cls, text: str) -> HermiteSeries:
        return cls.from_dict(json.loads(text))


def project(f, N: int, nodes: int | None = None) -> tuple[np.ndarray, float]:
    """Coefficients ``int f e_k gamma1`` for ``k <= N`` by Gauss-Hermite projection.

    Returns the coefficients and the largest change seen when one node is added.
    """
    _check_order(N)
    n = nodes if nodes is not None else max(200, 2 * N + 40)

    def coeffs(m: int) -> np.ndarray:
        x, w = gauss_hermite_rule(m)
        return orthonormal_hermite(N, x) @ (w * np.asarray(f(x), dtype=float))

    c = coeffs(n)
    err = float(np.max(np.abs(coeffs(n + 1) - c)))
    return c, err


def _expand(kind: str, beta: float, alpha: float, N: int, tol: float) -> HermiteSeries:
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    c, err = project(lambda x: penalty_function(kind, beta, alpha, x), N)
    if err > tol:
        raise ConvergenceError(f"projection quadrature for {kind} unstable: {err:.2e}", float(c[0]), err)
    return HermiteSeries(tuple(float(v) for v in c), beta, alpha, kind, err)


def expand_phi_penalty(beta: float, alpha: float, N: int = 100, tol: float = 1e-10) -> HermiteSeries:
    return _expand("phi_expansion", beta, alpha, N, tol)


def expand_gaussian_bump(beta: float, alpha: float, N: int = 100, tol: float = 1e-10) -> HermiteSeries:
    return _expand("gaussian_expansion", beta, alpha, N, tol)


def expand_gaussian_derivative(beta: float, alpha: float, N: int = 100, tol: float = 1e-10) -> HermiteSeries:
    return _expand("gaussian_derivative_expansion", beta, alpha, N, tol)


# -- envelopes --------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientEnvelope:
    beta: float
    lam: float
    alpha: float
    kind: str

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.lam <= self.beta:
            raise ValueError("lambda must lie in (0, beta]")
        if self.kind not in SERIES_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")

    @property
    def k_min(self) -> int:
        return 2 if self.kind == "phi_expansion" else 1

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        boost = math.exp(self.alpha**2 * max(0.0, self.beta / (2.0 * self.lam) - 0.5))
        out = (self.beta + self.lam) ** k * boost
        if self.kind == "gaussian_derivative_expansion":
            out = out * np.sqrt(k)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EnvelopeCheck:
    passed: bool
    first_violation: int | None
    worst_ratio: float


def check_envelope(
    series: HermiteSeries, env: CoefficientEnvelope, atol: float | None = None
) -> EnvelopeCheck:
    """Check ``|c_k| <= envelope(k) + atol`` for ``k_min <= k <= N``.

    Projected coefficients bottom out near 1e-16, far above envelopes such as
    ``0.15**60``; ``atol`` defaults to ``max(1e-14, 10 * quadrature_error)``.
    """
    if atol is None:
        atol = max(1e-14, 10.0 * series.quadrature_error)
    if series.kind not in ("custom", env.kind):
        raise ValueError(f"series kind {series.kind} does not match envelope kind {env.kind}")
    if not math.isnan(series.beta) and (series.beta != env.beta or series.alpha != env.alpha):
        raise ValueError("series and envelope must share beta and alpha")
    c = np.abs(series.array)
    k = np.arange(len(c))
    mask = k >= env.k_min
    if not mask.any():
        return EnvelopeCheck(True, None, 0.0)
    bound = env(k[mask])
    ratio = c[mask] / (bound + atol)
    bad = np.nonzero(c[mask] > bound + atol)[0]
    first = int(k[mask][bad[0]]) if bad.size else None
    return EnvelopeCheck(first is None, first, float(ratio.max()))


def alpha_zero_claims(kind: str, beta: float, k) -> np.ndarray:
    """Sharper bounds claimed at ``alpha = 0``; used only for empirical reporting.

    ``gaussian_expansion``: ``beta^k k^{-1/4}``. ``phi_expansion``:
    ``(1-beta^2)^{-1} beta^k k^{1/4}``.
    """
    k = np.asarray(k, dtype=float)
    if kind == "gaussian_expansion":
        return beta**k * k ** (-0.25)
    if kind == "phi_expansion":
        return beta**k * k**0.25 / (1.0 - beta * beta)
    raise ValueError(f"no alpha=0 claim for kind {kind!r}")
