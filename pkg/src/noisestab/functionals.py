"""Noise stability, deficits and penalized objectives for 1-D sets.

Sets in higher dimension enter only as products ``s x R^n``; their barycenter
points along the first axis, so the unit vector ``nu(z)`` reduces to
``sign(z)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .gaussian_core import (
    ConvergenceError,
    gamma1,
    gauss_hermite_rule,
    gauss_legendre_panels,
    phi,
)
from .hermite_mehler import orthonormal_hermite
from .ou_operator import ou_value
from .sets_1d import (
    HalfSpace1D,
    IntervalUnion,
    alpha_of,
    barycenter,
    difference,
    format_set,
    halfspace_with_measure,
    measure,
)

Method = Literal["quadrature", "mehler", "monte_carlo"]
Penalty = Literal["phi_squared", "phi_squared_with_volume", "barycenter_squared", "none"]
PENALTIES: tuple[str, ...] = ("phi_squared", "phi_squared_with_volume", "barycenter_squared", "none")

MEASURE_TOL = 1e-10
MEHLER_MAX_ORDER = 2000
MC_CHUNK = 2_000_000


class AlignmentError(ValueError):
    """The barycenter vanishes, so ``nu(z)`` is undefined."""


class PreconditionError(ValueError):
    pass


class StabilityResult(NamedTuple):
    value: float
    error: float
    method: str
    seed: int | None = None


# -- penalty profile ----------------------------------------------------------


def phi_weight(x, beta: float, alpha: float, sign: float = 1.0):
    """``Phi((beta sign x - alpha)/sqrt(1-beta^2))``."""
    return phi((beta * sign * np.asarray(x, dtype=float) - alpha) / math.sqrt(1.0 - beta * beta))


def phi_weight_derivative(x, beta: float, alpha: float, sign: float = 1.0):
    """``d/dx`` of :func:`phi_weight`."""
    c = math.sqrt(1.0 - beta * beta)
    u = (beta * sign * np.asarray(x, dtype=float) - alpha) / c
    return beta * sign / c * gamma1(u)


def weighted_integral(s: IntervalUnion, weight, panel_width: float = 0.5, order: int = 24) -> float:
    """``int_s weight(x) gamma1(x) dx`` by composite Gauss-Legendre per component."""
    total = 0.0
    for lo, hi in s.intervals:
        x, w = gauss_legendre_panels(lo, hi, panel_width, order)
        if x.size:
            total += float(np.sum(w * weight(x) * gamma1(x)))
    return total


# -- noise stability ------------------------------------------------------------


def _check_rho(rho: float) -> None:
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")


def stability_quadrature(s: IntervalUnion, rho: float, order: int = 24) -> float:
    """``int_s T_rho 1_s gamma1``; one pass of composite Gauss-Legendre."""
    if s.is_empty:
        return 0.0
    if rho == 0.0:
        return measure(s) ** 2
    return weighted_integral(s, lambda x: ou_value(s, rho, x), 0.5, order)


def hermite_indicator_coefficients(s: IntervalUnion, N: int) -> np.ndarray:
    """``b_k = int 1_s e_k gamma1`` for ``k <= N``.

    For ``k >= 1``, ``e_k gamma1 = -(e_{k-1} gamma1)' / sqrt(k)``, so each
    component contributes ``(e_{k-1} gamma1)(lo) - (e_{k-1} gamma1)(hi)``
    divided by ``sqrt(k)``.
    """
    b = np.zeros(N + 1)
    b[0] = measure(s)
    if N == 0 or s.is_empty:
        return b
    pts, signs = [], []
    for lo, hi in s.intervals:
        if math.isfinite(lo):
            pts.append(lo)
            signs.append(1.0)
        if math.isfinite(hi):
            pts.append(hi)
            signs.append(-1.0)
    if not pts:
        return b
    x = np.array(pts)
    e = _orthonormal_any_order(N - 1, x)
    b[1:] = (e * gamma1(x)[None, :]) @ np.array(signs) / np.sqrt(np.arange(1, N + 1))
    return b


def _orthonormal_any_order(k_max: int, x: np.ndarray) -> np.ndarray:
    if k_max <= 400:
        return orthonormal_hermite(k_max, x)
    out = np.empty((k_max + 1, x.size))
    out[0] = 1.0
    out[1] = x
    for k in range(1, k_max):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def mehler_order(rho: float, tol: float = 1e-16) -> int:
    """Smallest order whose geometric tail ``|rho|^{N+1}/(1-|rho|)`` is below ``tol``."""
    r = abs(rho)
    if r == 0.0:
        return 0
    n = math.ceil(math.log(tol * (1.0 - r)) / math.log(r))
    return int(min(max(n, 1), MEHLER_MAX_ORDER))


def stability_mehler(s: IntervalUnion, rho: float, order: int | None = None) -> StabilityResult:
    if not -0.95 < rho < 0.95:
        raise ValueError("the Mehler evaluator needs |rho| < 0.95")
    N = mehler_order(rho) if order is None else int(order)
    b = hermite_indicator_coefficients(s, N)
    terms = rho ** np.arange(N + 1) * b**2
    value = float(np.sum(terms[::-1]))
    # |b_k| <= 1 bounds the neglected tail.
    tail = abs(rho) ** (N + 1) / (1.0 - abs(rho))
    return StabilityResult(value, tail, "mehler")


def _mc_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def stability_monte_carlo_batch(
    sets: Sequence[IntervalUnion], rho: float, samples: int = 10_000_000, seed: int = 0
) -> list[StabilityResult]:
    """Empirical ``P(X in s, Y in s)`` for many sets from one stream of correlated pairs.

    Samples are binned against all finite endpoints; a 2-D prefix sum then
    counts each rectangle ``I_i x I_j`` exactly, so every set sees the same
    draws at the cost of a single pass.
    """
    _check_rho(rho)
    edges = np.unique(np.array([p for s in sets for pair in s.intervals for p in pair if math.isfinite(p)]))
    nb = edges.size + 1
    hist = np.zeros(nb * nb, dtype=np.int64)
    rng = _mc_generator(seed)
    sigma = math.sqrt(1.0 - rho * rho)
    left = samples
    while left > 0:
        n = min(MC_CHUNK, left)
        z = rng.standard_normal((2, n))
        x = z[0]
        y = rho * z[0] + sigma * z[1]
        bx = np.searchsorted(edges, x, side="right")
        by = np.searchsorted(edges, y, side="right")
        hist += np.bincount(bx * nb + by, minlength=nb * nb)
        left -= n
    cum = np.zeros((nb + 1, nb + 1), dtype=np.int64)
    cum[1:, 1:] = hist.reshape(nb, nb).cumsum(axis=0).cumsum(axis=1)

    def bins(lo: float, hi: float) -> tuple[int, int]:
        # Bin b holds edges[b-1] <= v < edges[b].
        first = 0 if math.isinf(lo) else int(np.searchsorted(edges, lo)) + 1
        last = nb - 1 if math.isinf(hi) else int(np.searchsorted(edges, hi))
        return first, last

    out = []
    for s in sets:
        spans = [bins(lo, hi) for lo, hi in s.intervals]
        count = 0
        for p, q in spans:
            for r, t in spans:
                count += cum[q + 1, t + 1] - cum[p, t + 1] - cum[q + 1, r] + cum[p, r]
        value = count / samples
        out.append(StabilityResult(value, math.sqrt(max(value * (1.0 - value), 1e-300) / samples), "monte_carlo", seed))
    return out


def noise_stability(
    s: IntervalUnion,
    rho: float,
    method: Method = "quadrature",
    *,
    order: int | None = None,
    samples: int = 10_000_000,
    seed: int = 0,
    tol: float = 1e-11,
) -> StabilityResult:
    """``P(X in s, Y in s)`` for standard Gaussians with correlation ``rho``.

    Parameters
    ----------
    method
        ``quadrature`` integrates ``1_s T_rho 1_s`` against ``gamma1``;
        ``mehler`` sums ``rho^k b_k^2``; ``monte_carlo`` samples pairs.
    order
        Mehler truncation; chosen from ``rho`` when omitted.
    samples, seed
        Monte Carlo budget and the key of the Philox stream.
    tol
        Quadrature error budget; exceeding it raises ``ConvergenceError``.
    """
    _check_rho(rho)
    if method == "quadrature":
        value = stability_quadrature(s, rho, 24)
        err = abs(value - stability_quadrature(s, rho, 16))
        if err > tol:
            raise ConvergenceError(f"stability quadrature error {err:.2e} exceeds {tol:.1e}", value, err)
        return StabilityResult(value, err, "quadrature")
    if method == "mehler":
        return stability_mehler(s, rho, order)
    if method == "monte_carlo":
        return stability_monte_carlo_batch([s], rho, samples, seed)[0]
    raise ValueError(f"unknown method {method!r}")


def halfspace_stability(a: float, rho: float) -> float:
    return stability_quadrature(halfspace_with_measure(a).to_set(), rho)


# -- deficits -------------------------------------------------------------------


def _check_measure(s: IntervalUnion, a: float, what: str = "set") -> None:
    m = measure(s)
    if abs(m - a) > MEASURE_TOL:
        raise PreconditionError(f"{what} has measure {m!r}, expected {a!r}")


def _sign_of_barycenter(s: IntervalUnion) -> float:
    z = barycenter(s)
    if abs(z) < 1e-15:
        raise AlignmentError("barycenter is zero; nu(z) is undefined")
    return 1.0 if z > 0 else -1.0


def eta_penalty(s: IntervalUnion, h: HalfSpace1D, beta: float, a: float) -> float:
    """``int Phi((beta sign(z) x - alpha)/sqrt(1-beta^2)) (1_h - 1_s) gamma1``."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    _check_measure(s, a)
    hs = h.to_set()
    _check_measure(hs, a, "half space")
    sign = _sign_of_barycenter(s)
    if h.aligned_positive != (sign > 0):
        raise PreconditionError("half space must be aligned with the barycenter of the set")
    alpha = alpha_of(a)
    w = lambda x: phi_weight(x, beta, alpha, sign)  # noqa: E731
    return weighted_integral(difference(hs, s), w) - weighted_integral(difference(s, hs), w)


def deficit(s: IntervalUnion, rho: float, a: float) -> float:
    """Half-space stability minus the stability of ``s`` at equal measure ``a``."""
    _check_measure(s, a)
    return halfspace_stability(a, rho) - stability_quadrature(s, rho)


def _exp_product(alpha: float, factor: float) -> float:
    # alpha^2 * factor with the convention 0 * inf = 0.
    if alpha == 0.0:
        return 0.0
    return alpha * alpha * factor


def robust_lower_constant(a: float, rho: float, beta: float, z0: float) -> float:
    """``1e-7 a z0^2 e^{-alpha^2 max(1, beta/(rho-beta))} rho (1-rho)^2 beta (1-beta^2) a (1-a) / (6+|alpha|)^2``."""
    alpha = alpha_of(a)
    ratio = math.inf if beta >= rho else beta / (rho - beta)
    decay = math.exp(-_exp_product(alpha, max(1.0, ratio)))
    return (
        1e-7 * a * z0 * z0 * decay * rho * (1 - rho) ** 2 * beta * (1 - beta * beta) * a * (1 - a)
        / (6.0 + abs(alpha)) ** 2
    )


def robust_lower_constant_alt(a: float, rho: float, beta: float, z0: float) -> float:
    """Same constant with the exponent written as ``max(0, beta/(rho-beta) - 1)``."""
    alpha = alpha_of(a)
    ratio = math.inf if beta >= rho else beta / (rho - beta)
    decay = math.exp(-_exp_product(alpha, max(0.0, ratio - 1.0)))
    return (
        1e-7 * a * z0 * z0 * decay * rho * (1 - rho) ** 2 * beta * (1 - beta * beta) * a * (1 - a)
        / (6.0 + abs(alpha)) ** 2
    )


def symmetric_lower_constant(rho: float, z0: float) -> float:
    """``1e-9 rho^2 z0^2 (1-rho^2)^2``, the constant for ``a = 1/2`` and ``beta = rho``."""
    return 1e-9 * rho * rho * z0 * z0 * (1.0 - rho * rho) ** 2


@dataclass(frozen=True)
class DeficitReport:
    set: str
    delta: float
    eta_beta: float
    eta_rho: float
    a: float
    rho: float
    beta: float
    z: float
    z0: float
    lower_constant: float
    lower_constant_alt: float
    symmetric_constant: float | None
    upper_ok: bool
    lower_ok: bool
    symmetric_lower_ok: bool | None
    seed: int | None = None

    CSV_COLUMNS = (
        "set", "a", "rho", "beta", "z", "delta", "eta_beta", "eta_rho",
        "lower_constant", "lower_ok", "upper_ok", "seed",
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_row(self) -> list[str]:
        d = self.to_dict()
        return [_csv_cell(d[c]) for c in self.CSV_COLUMNS]


def _csv_cell(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def deficit_report(
    s: IntervalUnion,
    rho: float,
    beta: float,
    a: float,
    z0: float,
    tol: float = 1e-8,
    seed: int | None = None,
) -> DeficitReport:
    """Evaluate ``delta``, ``eta_beta`` and ``eta_rho`` against the robust bounds.

    ``upper_ok`` tests ``delta <= 2 eta_rho + tol``; ``lower_ok`` tests
    ``lower_constant * eta_beta <= delta + tol``. When ``a = 1/2`` and
    ``beta = rho`` the simpler constant ``1e-9 rho^2 z0^2 (1-rho^2)^2`` is
    also checked.
    """
    if not 0.0 < beta <= rho < 1.0:
        raise ValueError("need 0 < beta <= rho < 1")
    if z0 <= 0:
        raise ValueError("z0 must be positive")
    z = barycenter(s)
    if abs(z) < z0 * (1.0 - 1e-12):
        raise PreconditionError(f"|barycenter| = {abs(z)!r} is below z0 = {z0!r}")
    h = halfspace_with_measure(a, z > 0)
    delta = deficit(s, rho, a)
    eta_b = eta_penalty(s, h, beta, a)
    eta_r = eta_penalty(s, h, rho, a)
    lower = robust_lower_constant(a, rho, beta, z0)
    sym = symmetric_lower_constant(rho, z0) if (abs(a - 0.5) < 1e-15 and beta == rho) else None
    return DeficitReport(
        set=format_set(s),
        delta=delta,
        eta_beta=eta_b,
        eta_rho=eta_r,
        a=a,
        rho=rho,
        beta=beta,
        z=z,
        z0=z0,
        lower_constant=lower,
        lower_constant_alt=robust_lower_constant_alt(a, rho, beta, z0),
        symmetric_constant=sym,
        upper_ok=bool(delta <= 2.0 * eta_r + tol),
        lower_ok=bool(lower * eta_b <= delta + tol),
        symmetric_lower_ok=None if sym is None else bool(sym * eta_r <= delta + tol),
        seed=seed,
    )


def eldan_eta(s: IntervalUnion, a: float) -> float:
    """``|z_H|^2 - |z_s|^2`` for the half space ``H`` of measure ``a``."""
    _check_measure(s, a)
    return gamma1(alpha_of(a)) ** 2 - barycenter(s) ** 2


# -- objectives -------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveSpec:
    rho: float
    beta: float | None = None
    epsilon: float = 0.0
    a: float = 0.5
    penalty: str = "phi_squared_with_volume"

    def __post_init__(self) -> None:
        if self.beta is None:
            object.__setattr__(self, "beta", self.rho)
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not 0.0 < self.beta <= self.rho:
            raise ValueError("beta must lie in (0, rho]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0.0 < self.a < 1.0:
            raise ValueError("a must lie in (0, 1)")
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}")

    @property
    def alpha(self) -> float:
        return alpha_of(self.a)

    @property
    def volume_weight(self) -> float:
        return 2.0 * (1.0 + abs(self.alpha))

    def to_dict(self) -> dict:
        return asdict(self)


def a0_value(s: IntervalUnion, beta: float, a: float, sign: float) -> float:
    return weighted_integral(s, lambda x: phi_weight(x, beta, alpha_of(a), sign))


def a0_and_zeta(s: IntervalUnion, beta: float, a: float, nodes: int = 64) -> tuple[float, float]:
    """``a0`` and the perpendicular component ``zeta`` for the product set ``s x R``.

    ``zeta`` is computed as a genuine 2-D quadrature of
    ``Phi'(beta x1 - alpha) * x2 / |z|`` over ``s x R``; it vanishes by the odd
    symmetry in ``x2``.
    """
    sign = _sign_of_barycenter(s)
    alpha = alpha_of(a)
    a0 = weighted_integral(s, lambda x: phi_weight(x, beta, alpha, sign))
    y, wy = gauss_hermite_rule(nodes)
    zeta = 0.0
    absz = abs(barycenter(s))
    for lo, hi in s.intervals:
        x, wx = gauss_legendre_panels(lo, hi)
        if x.size == 0:
            continue
        fx = phi_weight_derivative(x, beta, alpha, sign) * gamma1(x) * wx
        zeta += float(np.sum(fx)) * float(np.sum(wy * y)) / absz
    return a0, zeta


def objective(s: IntervalUnion, spec: ObjectiveSpec, stability: float | None = None) -> float:
    """Noise stability minus ``epsilon`` times the selected penalty.

    ``phi_squared`` requires measure ``a``; ``phi_squared_with_volume`` adds
    ``2(1+|alpha|)|gamma(s) - a|`` instead. A vanishing barycenter is an error
    only when a phi penalty is actually active (``epsilon > 0``).
    """
    stab = stability_quadrature(s, spec.rho) if stability is None else stability
    if spec.penalty == "none":
        return stab
    if spec.penalty == "barycenter_squared":
        return stab - spec.epsilon * barycenter(s) ** 2
    if spec.penalty == "phi_squared":
        _check_measure(s, spec.a)
    value = stab
    if spec.epsilon > 0:
        sign = _sign_of_barycenter(s)
        value -= spec.epsilon * a0_value(s, spec.beta, spec.a, sign) ** 2
    if spec.penalty == "phi_squared_with_volume":
        value -= spec.volume_weight * abs(measure(s) - spec.a)
    return value


def halfspace_objective(spec: ObjectiveSpec) -> float:
    """Objective of the right ray ``[alpha, inf)`` of measure ``a``."""
    return objective(halfspace_with_measure(spec.a, True).to_set(), spec)


def epsilon_cap(rho: float, beta: float, a: float, z0: float) -> tuple[float, bool]:
    """``(1-rho)^2 z0^2 / (10 rho e^{alpha^2 max(0, beta/(rho-beta) - 1)})`` and a degeneracy flag.

    At ``beta = rho`` the exponent is infinite unless ``alpha = 0``; the
    limiting cap ``0`` is returned with the flag set.
    """
    if not 0.0 < beta <= rho < 1.0:
        raise ValueError("need 0 < beta <= rho < 1")
    if z0 <= 0:
        raise ValueError("z0 must be positive")
    alpha = alpha_of(a)
    ratio = math.inf if beta >= rho else beta / (rho - beta)
    expo = _exp_product(alpha, max(0.0, ratio - 1.0))
    degenerate = math.isinf(expo)
    cap = 0.0 if degenerate else (1.0 - rho) ** 2 * z0 * z0 / (10.0 * rho * math.exp(expo))
    return cap, degenerate
