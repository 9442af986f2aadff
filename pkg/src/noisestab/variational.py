"""First and second variation quantities for 1-D sets and their products with R.

Boundary integrals are sums over the finite endpoints of an interval union,
each carrying its exterior normal ``N = +-1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.linalg import eigh, null_space

from .functionals import (
    ObjectiveSpec,
    PreconditionError,
    _check_measure,
    _sign_of_barycenter,
    a0_value,
    objective,
    phi_weight,
    phi_weight_derivative,
    weighted_integral,
)
from .gaussian_core import INV_SQRT_2PI, gamma1, phi_upper
from .ou_operator import ou_derivative, ou_value
from .sets_1d import IntervalUnion, alpha_of, barycenter, measure

ProfileKind = Literal["lemma_finallem2", "lemma_finallem3"]


def _boundary(s: IntervalUnion) -> tuple[np.ndarray, np.ndarray]:
    x, n = s.boundary_arrays()
    if x.size == 0:
        raise ValueError("set has no finite boundary points")
    return x, n


def _check_rho01(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")


def _penalty_gradient(s: IntervalUnion, spec: ObjectiveSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Penalty profile and its derivative at ``x``, already scaled by ``epsilon * a0``.

    The phi penalties contribute ``eps a0 Phi(...)``; the barycenter penalty
    contributes ``eps z x``. ``zeta`` is zero for product sets and omitted.
    """
    zero = np.zeros_like(x)
    if spec.epsilon == 0 or spec.penalty == "none":
        return zero, zero
    if spec.penalty == "barycenter_squared":
        z = barycenter(s)
        return spec.epsilon * z * x, np.full_like(x, spec.epsilon * z)
    sign = _sign_of_barycenter(s)
    scale = spec.epsilon * a0_value(s, spec.beta, spec.a, sign)
    alpha = spec.alpha
    return (
        scale * phi_weight(x, spec.beta, alpha, sign),
        scale * phi_weight_derivative(x, spec.beta, alpha, sign),
    )


# -- first variation ------------------------------------------------------------


@dataclass(frozen=True)
class VariationReport:
    first_variation_residual: float
    level_constant: float
    second_variation: float = math.nan
    closed_form: float | None = None
    oracle_value: float | None = None
    points: tuple[dict, ...] = field(default=())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points"] = [dict(p) for p in self.points]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def level_values(s: IntervalUnion, spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary points, normals and ``L(x) = T_rho 1_s(x) - (penalty profile)(x)``."""
    x, n = _boundary(s)
    prof, _ = _penalty_gradient(s, spec, x)
    return x, n, ou_value(s, spec.rho, x) - prof


def level_residual(s: IntervalUnion, spec: ObjectiveSpec) -> VariationReport:
    x, n, L = level_values(s, spec)
    pts = tuple({"x": float(a), "normal": int(b), "level": float(c)} for a, b, c in zip(x, n, L))
    return VariationReport(
        first_variation_residual=float(L.max() - L.min()),
        level_constant=float(L.mean()),
        points=pts,
    )


def translation_first_variation(s: IntervalUnion, spec: ObjectiveSpec) -> float:
    """``d/dt objective(s + t)`` at ``t = 0`` in closed form.

    Moving every endpoint by ``t`` has normal speed ``N``. The stability term
    contributes ``2 sum T N gamma1``, the squared penalties contribute twice
    their linearization, and the volume term contributes
    ``-2(1+|alpha|) sgn(gamma(s)-a) sum N gamma1``.
    """
    x, n, L = level_values(s, spec)
    g = gamma1(x)
    out = 2.0 * float(np.sum(L * n * g))
    if spec.penalty == "phi_squared_with_volume":
        out -= spec.volume_weight * float(np.sign(measure(s) - spec.a)) * float(np.sum(n * g))
    return out


def translation_finite_difference(s: IntervalUnion, spec: ObjectiveSpec, h: float = 1e-4) -> float:
    return (objective(s.translate(h), spec) - objective(s.translate(-h), spec)) / (2.0 * h)


# -- S operator and the translation identity ----------------------------------------


def s_operator(s: IntervalUnion, rho: float, f, x):
    """``(1-rho^2)^{-1/2} (2 pi)^{-1/2} sum_y f(y) exp(-(y - rho x)^2 / (2(1-rho^2)))``."""
    _check_rho01(rho)
    y, _ = s.boundary_arrays()
    f = np.broadcast_to(np.asarray(f, dtype=float), y.shape)
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    sig2 = 1.0 - rho * rho
    k = np.exp(-((y[:, None] - rho * flat[None, :]) ** 2) / (2.0 * sig2)) * INV_SQRT_2PI / math.sqrt(sig2)
    out = (f @ k).reshape(x.shape) if y.size else np.zeros(x.shape)
    return float(out) if np.ndim(out) == 0 else out


def divergence_residual(s: IntervalUnion, rho: float, x):
    """``|rho S(N)(x) + d/dx T_rho 1_s(x)|``; vanishes for every set."""
    _, n = s.boundary_arrays()
    return np.abs(rho * s_operator(s, rho, n, x) + ou_derivative(s, rho, x))


@dataclass(frozen=True)
class EigenResidual:
    max_residual: float
    points: tuple[dict, ...]

    @property
    def all_aligned(self) -> bool:
        return all(p["aligned"] for p in self.points)


def translation_eigen_residual(s: IntervalUnion, spec: ObjectiveSpec) -> EigenResidual:
    """Per boundary point ``|rho S(N) + P' - N |dT - P'||`` where ``P'`` is the penalty slope.

    This is zero exactly when ``dT - P'`` points against the exterior normal.
    """
    x, n = _boundary(s)
    _, slope = _penalty_gradient(s, spec, x)
    lhs = spec.rho * s_operator(s, spec.rho, n, x) + slope
    grad = ou_derivative(s, spec.rho, x) - slope
    res = np.abs(lhs - n * np.abs(grad))
    pts = tuple(
        {"x": float(a), "normal": int(b), "residual": float(r), "aligned": bool(g * b <= 0)}
        for a, b, r, g in zip(x, n, res, grad)
    )
    return EigenResidual(float(res.max()), pts)


# -- quadratic forms -------------------------------------------------------------


def boundary_kernel(rho: float, x: np.ndarray) -> np.ndarray:
    """``G(x, y) = (1-rho^2)^{-1/2} (2 pi)^{-1} exp((-x^2 - y^2 + 2 rho x y)/(2(1-rho^2)))``."""
    x = np.asarray(x, dtype=float)
    s2 = 1.0 - rho * rho
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.exp((-X * X - Y * Y + 2.0 * rho * X * Y) / (2.0 * s2)) / (2.0 * math.pi * math.sqrt(s2))


def g_form(rho: float, x, f) -> float:
    f = np.asarray(f, dtype=float)
    return float(f @ boundary_kernel(rho, x) @ f)


@dataclass(frozen=True)
class StabilityForm:
    value: float
    closed_form: float


@lru_cache(maxsize=256)
def stack_calibration(rho: float, t1: float = 0.5, t2: float = 1.0) -> tuple[float, float]:
    """Fit ``A`` and ``c`` in ``value([-t, t]) = rho A exp(-c t^2)``.

    Two symmetric intervals pin down both constants. The fit reproduces
    ``A = 2 / (pi sqrt(1-rho^2))`` and ``c = 1/(1-rho)``, so the weight is
    ``w(sigma) = exp(-sigma^2 / (2 (1-rho)))``.
    """
    v1 = _stability_form_direct(IntervalUnion.of((-t1, t1)), rho)
    v2 = _stability_form_direct(IntervalUnion.of((-t2, t2)), rho)
    c = (math.log(v1) - math.log(v2)) / (t2 * t2 - t1 * t1)
    A = v1 / rho * math.exp(c * t1 * t1)
    return A, c


def _stability_form_direct(s: IntervalUnion, rho: float) -> float:
    # rho S(1) - |dT| = rho (P + M - |P - M|) = 2 rho min(P, M), where P and M
    # collect the kernel mass from right and left endpoints; no cancellation.
    x, n = s.boundary_arrays()
    if x.size == 0:
        return 0.0
    sig2 = 1.0 - rho * rho
    K = np.exp(-((x[:, None] - rho * x[None, :]) ** 2) / (2.0 * sig2)) * INV_SQRT_2PI / math.sqrt(sig2)
    P = K[n > 0].sum(axis=0)
    M = K[n < 0].sum(axis=0)
    return float(np.sum(2.0 * rho * np.minimum(P, M) * gamma1(x)))


def stability_form_unsimplified(s: IntervalUnion, rho: float) -> float:
    """``sum [rho S(1) - |dT|] gamma1`` evaluated literally through the S operator and ``dT``."""
    x, _ = s.boundary_arrays()
    if x.size == 0:
        return 0.0
    s1 = s_operator(s, rho, np.ones_like(x), x)
    grad = np.abs(ou_derivative(s, rho, x))
    return float(np.sum((rho * s1 - grad) * gamma1(x)))


def stability_form(s: IntervalUnion, rho: float) -> StabilityForm:
    """``sum_x [rho S(1)(x) - |dT(x)|] gamma1(x)`` and its product-form approximation.

    The closed form ``rho A (sum_{N=+1} w)(sum_{N=-1} w)`` is exact for
    symmetric two-point boundaries and drops the cross term
    ``exp(rho x y / (1-rho^2))`` elsewhere.
    """
    _check_rho01(rho)
    value = _stability_form_direct(s, rho)
    x, n = s.boundary_arrays()
    A, c = stack_calibration(rho)
    w = np.exp(-0.5 * c * x * x)
    closed = rho * A * float(np.sum(w[n > 0])) * float(np.sum(w[n < 0]))
    return StabilityForm(value, closed)


def product_lift_form(s: IntervalUnion, rho: float, g) -> float:
    """``rho sum g G g - sum |dT| g^2 gamma1``; equals the stability form at ``g = 1``."""
    x, _ = s.boundary_arrays()
    g = np.broadcast_to(np.asarray(g, dtype=float), x.shape)
    grad = np.abs(ou_derivative(s, rho, x))
    return rho * g_form(rho, x, g) - float(np.sum(grad * g * g * gamma1(x)))


def perimeter_gap(s: IntervalUnion, a: float) -> float:
    """``sum_{boundary} gamma1 - gamma1(alpha)``."""
    x, _ = s.boundary_arrays()
    return float(np.sum(gamma1(x))) - gamma1(alpha_of(a))


def stability_form_lower_bound(
    s: IntervalUnion, rho: float, a: float | None = None, power: Literal["max", "min", 1, 2] = "max"
) -> float:
    """``rho (1-rho) min(a, 1-a)/80 * gap^k``.

    ``power="max"`` takes the larger of ``gap`` and ``gap^2``, ``"min"`` the
    smaller; an integer fixes ``k``.
    """
    a = measure(s) if a is None else a
    gap = perimeter_gap(s, a)
    if power == "max":
        g = max(gap, gap * gap)
    elif power == "min":
        g = min(gap, gap * gap)
    else:
        g = gap ** int(power)
    return rho * (1.0 - rho) * min(a, 1.0 - a) / 80.0 * g


def second_variation_matrix(s: IntervalUnion, spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``Q`` of the translation second variation and the volume constraint vector."""
    x, _ = _boundary(s)
    g = gamma1(x)
    Q = boundary_kernel(spec.rho, x)
    if spec.epsilon > 0 and spec.penalty in ("phi_squared", "phi_squared_with_volume"):
        sign = _sign_of_barycenter(s)
        p = phi_weight(x, spec.beta, spec.alpha, sign) * g
        Q = Q - spec.epsilon * np.outer(p, p)
    elif spec.epsilon > 0 and spec.penalty == "barycenter_squared":
        p = x * g
        Q = Q - spec.epsilon * np.outer(p, p)
    _, slope = _penalty_gradient(s, spec, x)
    grad = np.abs(ou_derivative(s, spec.rho, x) - slope)
    Q = Q - np.diag(grad * g)
    return Q, g


def second_variation_translation(s: IntervalUnion, spec: ObjectiveSpec, f) -> float:
    """Quadratic form ``f^T Q f`` for boundary values with ``sum f gamma1 = 0``."""
    Q, g = second_variation_matrix(s, spec)
    f = np.asarray(f, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"need one value per boundary point ({g.size}), got {f.size}")
    if abs(float(f @ g)) > 1e-10:
        raise PreconditionError("boundary values must satisfy sum f gamma1 = 0")
    return float(f @ Q @ f)


def max_admissible_second_variation(s: IntervalUnion, spec: ObjectiveSpec) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of ``Q`` restricted to ``sum f gamma1 = 0``, with a unit maximizer."""
    Q, g = second_variation_matrix(s, spec)
    B = null_space(g[None, :])
    if B.shape[1] == 0:
        return 0.0, np.zeros_like(g)
    vals, vecs = eigh(B.T @ Q @ B)
    f = B @ vecs[:, -1]
    return float(vals[-1]), f


def techlem_theta(rho: float, beta: float, a: float, epsilon: float, z: float) -> float:
    """``eps rho 10 e^{alpha^2 max(0, beta/(rho-beta) - 1)} / ((1-rho) z^2)``."""
    alpha = alpha_of(a)
    ratio = math.inf if beta >= rho else beta / (rho - beta)
    expo = 0.0 if alpha == 0 else alpha * alpha * max(0.0, ratio - 1.0)
    return epsilon * rho * 10.0 * math.exp(expo) / ((1.0 - rho) * z * z)


def techlem_sides(s: IntervalUnion, spec: ObjectiveSpec, f) -> tuple[float, float]:
    """``(eps (sum Phi f gamma1)^2, theta * G-form(f))`` for admissible ``f``."""
    x, _ = _boundary(s)
    g = gamma1(x)
    f = np.asarray(f, dtype=float)
    if abs(float(f @ g)) > 1e-10:
        raise PreconditionError("boundary values must satisfy sum f gamma1 = 0")
    z = barycenter(s)
    sign = _sign_of_barycenter(s)
    p = float(np.sum(phi_weight(x, spec.beta, spec.alpha, sign) * f * g))
    theta = techlem_theta(spec.rho, spec.beta, spec.a, spec.epsilon, z)
    return spec.epsilon * p * p, theta * g_form(spec.rho, x, f)


# -- half-space profiles ---------------------------------------------------------


def profile_epsilon_cap(kind: ProfileKind, a: float, beta: float) -> float:
    alpha = alpha_of(a)
    if kind == "lemma_finallem2":
        return math.exp(-alpha * alpha / (1 + beta)) * math.sqrt(1 - beta * beta) / (8 * beta * (6 + abs(alpha)) ** 2)
    if kind == "lemma_finallem3":
        return (1 - beta * beta) ** 3 / (8 * (6 + abs(alpha)) ** 2)
    raise ValueError(f"unknown profile kind {kind!r}")


def _bump(x, beta: float, alpha: float):
    return np.exp(-((beta * np.asarray(x, dtype=float) - alpha) ** 2) / (2.0 * (1.0 - beta * beta)))


def halfspace_profile_h(t: float, kind: ProfileKind, a: float, beta: float, epsilon: float) -> float:
    """The profile ``h(t)`` of the ray ``[t, inf)``; its minimum sits at ``t = alpha``.

    ``lemma_finallem2``: ``gamma1(t) + eps (int_t^inf Phi(...) gamma1)^2 + 2(1+|alpha|)|gamma1[t,inf) - a|``.
    ``lemma_finallem3``: ``gamma1(t) + eps beta (1-beta^2)^{-3/2} int_t^inf (x - alpha beta) bump gamma1 + ...``.
    """
    if not 0.0 < beta < 1.0 or not 0.0 < a < 1.0:
        raise ValueError("need 0 < beta < 1 and 0 < a < 1")
    cap = profile_epsilon_cap(kind, a, beta)
    if not 0.0 <= epsilon <= cap:
        raise ValueError(f"epsilon must lie in [0, {cap:.6g}] for {kind}")
    alpha = alpha_of(a)
    ray = IntervalUnion.of((t, math.inf))
    vol = 2.0 * (1.0 + abs(alpha)) * abs(phi_upper(t) - a)
    if kind == "lemma_finallem2":
        m = weighted_integral(ray, lambda x: phi_weight(x, beta, alpha))
        return gamma1(t) + epsilon * m * m + vol
    m = weighted_integral(ray, lambda x: (x - alpha * beta) * _bump(x, beta, alpha))
    return gamma1(t) + epsilon * beta / (1.0 - beta * beta) ** 1.5 * m + vol


# -- perimeter gap lemmas ---------------------------------------------------------


@dataclass(frozen=True)
class PerimeterGapReport:
    gap: float
    bump_lhs: float
    bump_rhs: float
    bump_ok: bool
    moment_lhs: float | None
    moment_rhs: float | None
    moment_ok: bool | None
    moment_nonnegative: bool | None

    def to_dict(self) -> dict:
        return asdict(self)


def perimeter_gap_bounds(s: IntervalUnion, a: float, beta: float, slack: float = 1e-9) -> PerimeterGapReport:
    """Weighted-perimeter and weighted-moment bounds against the plain perimeter gap.

    Bump bound: ``|sum_{dH} w gamma1 - sum_{ds} w gamma1| <= 8 (6+|alpha|)^2/(beta(1-beta^2)) gap``.
    Moment bound (``a <= 1/2`` only): ``int_H (x-alpha beta) w gamma1 - int_s (...)``
    is nonnegative and at most ``8 e^{alpha^2/(1+beta)} (6+|alpha|)^2/(beta(1-beta^2)) gap``.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    _check_measure(s, a)
    if barycenter(s) < -1e-15:
        raise PreconditionError("perimeter bounds need a nonnegative barycenter")
    alpha = alpha_of(a)
    x, _ = _boundary(s)
    gap = float(np.sum(gamma1(x))) - gamma1(alpha)
    k = 8.0 * (6.0 + abs(alpha)) ** 2 / (beta * (1.0 - beta * beta))
    bump_lhs = abs(float(_bump(alpha, beta, alpha) * gamma1(alpha)) - float(np.sum(_bump(x, beta, alpha) * gamma1(x))))
    bump_rhs = k * gap
    m_lhs = m_rhs = m_ok = m_nonneg = None
    if a <= 0.5:
        wfun = lambda v: (v - alpha * beta) * _bump(v, beta, alpha)  # noqa: E731
        H = IntervalUnion.of((alpha, math.inf))
        m_lhs = weighted_integral(H, wfun) - weighted_integral(s, wfun)
        m_rhs = math.exp(alpha * alpha / (1.0 + beta)) * k * gap
        m_ok = bool(m_lhs <= m_rhs + slack)
        m_nonneg = bool(m_lhs >= -slack)
    return PerimeterGapReport(gap, bump_lhs, bump_rhs, bool(bump_lhs <= bump_rhs + slack), m_lhs, m_rhs, m_ok, m_nonneg)
