"""Scalar Gaussian primitives and a small quadrature engine.

Everything here works on the extended real line: ``-np.inf`` and ``np.inf``
are valid endpoints, with ``gamma1(+-inf) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import ndtr, ndtri

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI

# Beyond this radius gamma1 is below 1e-31; used to truncate infinite domains.
TAIL_RADIUS = 12.0

Scheme = Literal["gauss_hermite", "tanh_sinh", "adaptive_simpson"]


class ConvergenceError(RuntimeError):
    """Raised when a numerical procedure cannot reach its tolerance.

    The best available estimate travels with the exception.
    """

    def __init__(self, message: str, estimate: float = math.nan, error: float = math.nan):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class QuadResult(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class GaussianMoment:
    measure: float
    first_moment: float


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: Scheme = "gauss_hermite"
    node_count: int = 200
    abs_tol: float = 1e-11
    rel_tol: float = 0.0

    def __post_init__(self) -> None:
        if self.scheme not in ("gauss_hermite", "tanh_sinh", "adaptive_simpson"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if int(self.node_count) != self.node_count or self.node_count < 8:
            raise ValueError("node_count must be an integer >= 8")
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise ValueError("abs_tol and rel_tol cannot both be zero")

    def tolerance(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


DEFAULT_QUADRATURE = QuadratureSpec()


def phi(t):
    """Standard normal CDF, total on the extended reals."""
    out = ndtr(t)
    return float(out) if np.ndim(out) == 0 else out


def phi_upper(t):
    """Upper tail ``gamma1[t, inf)`` without cancellation for large ``t``."""
    out = ndtr(-np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def phi_inv(p):
    """Inverse of :func:`phi` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError("phi_inv requires 0 < p < 1")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


def gamma1(x):
    """Standard normal density; zero at +-inf."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(-0.5 * x * x) * INV_SQRT_2PI
    out = np.where(np.isinf(x), 0.0, out)
    return float(out) if out.ndim == 0 else out


def interval_measure(lo, hi):
    """``gamma1`` of ``[lo, hi]``, evaluated on the tail side that avoids cancellation."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    right = lo >= 0.0
    out = np.where(right, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    return float(out) if out.ndim == 0 else out


def gaussian_moment(lo: float, hi: float) -> GaussianMoment:
    """Measure and first moment of ``[lo, hi]`` under the standard Gaussian."""
    if not lo <= hi:
        raise ValueError(f"gaussian_moment requires lo <= hi, got ({lo}, {hi})")
    return GaussianMoment(
        measure=interval_measure(lo, hi),
        first_moment=gamma1(lo) - gamma1(hi),
    )


# -- quadrature -------------------------------------------------------------


@lru_cache(maxsize=64)
def gauss_hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes with weights normalized to sum to one."""
    x, w = hermegauss(n)
    w = w / SQRT_2PI
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def gauss_legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _as_vectorized(f: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def g(x: np.ndarray) -> np.ndarray:
        try:
            y = np.asarray(f(x), dtype=float)
            if y.shape == x.shape:
                return y
            if y.ndim == 0:
                return np.full(x.shape, float(y))
        except (TypeError, ValueError):
            pass
        return np.array([float(f(float(v))) for v in x.ravel()]).reshape(x.shape)

    return g


def _gauss_hermite(f, n: int) -> QuadResult:
    x, w = gauss_hermite_rule(n)
    value = float(w @ f(x))
    # The (n+1)-point rule shares exactness up to degree 2n-1, so the gap
    # vanishes on polynomials the n-point rule integrates exactly.
    x1, w1 = gauss_hermite_rule(n + 1)
    return QuadResult(value, abs(float(w1 @ f(x1)) - value))


def _sinh_sinh_nodes(n: int, t_max: float) -> tuple[np.ndarray, np.ndarray]:
    k = n // 2
    h = t_max / k
    t = h * np.arange(-k, k + 1)
    s = 0.5 * math.pi * np.sinh(t)
    x = np.sinh(s)
    w = h * 0.5 * math.pi * np.cosh(t) * np.cosh(s)
    return x, w


def _tanh_sinh_gaussian(f, n: int) -> QuadResult:
    # |x| <= ~40 corresponds to |t| <= 1.8 under the double sinh map.
    x, w = _sinh_sinh_nodes(n, 2.0)
    vals = f(x) * gamma1(x) * w
    value = float(vals.sum())
    coarse = float(2.0 * vals[::2].sum()) if len(vals) % 4 == 1 else float(2.0 * vals[1::2].sum())
    return QuadResult(value, abs(value - coarse))


def tanh_sinh(
    f: Callable, lo: float, hi: float, node_count: int = 64, tol: float = 1e-14, max_nodes: int = 1 << 15
) -> QuadResult:
    """Double-exponential quadrature of ``f`` over ``[lo, hi]`` (infinite ends allowed).

    Uses tanh-sinh on finite intervals, exp-sinh on half lines and sinh-sinh
    on the whole line. Starting from ``node_count`` nodes the step is halved
    until two consecutive levels agree to ``tol`` (relative to the value) or
    ``max_nodes`` is reached; the last difference is the error estimate.
    """
    f = _as_vectorized(f)
    k = max(node_count // 2, 4)
    lo_inf, hi_inf = math.isinf(lo), math.isinf(hi)

    def rule(step: float, kk: int) -> float:
        t = step * np.arange(-kk, kk + 1)
        s = 0.5 * math.pi * np.sinh(t)
        if not lo_inf and not hi_inf:
            half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
            x = mid + half * np.tanh(s)
            w = half * 0.5 * math.pi * np.cosh(t) / np.cosh(s) ** 2
        elif lo_inf and hi_inf:
            x = np.sinh(s)
            w = 0.5 * math.pi * np.cosh(t) * np.cosh(s)
        else:
            e = np.exp(s)
            x = lo + e if hi_inf else hi - e
            w = 0.5 * math.pi * np.cosh(t) * e
        with np.errstate(over="ignore", invalid="ignore"):
            vals = f(x) * w
        vals = np.where(np.isfinite(vals), vals, 0.0)
        return float(step * vals.sum())

    t_max = 4.0 if (lo_inf or hi_inf) else 3.5
    h = t_max / k
    coarse, fine = rule(2 * h, k // 2), rule(h, k)
    while abs(fine - coarse) > tol * max(1.0, abs(fine)) and 4 * k <= max_nodes:
        h, k = h / 2, 2 * k
        coarse, fine = fine, rule(h, k)
    return QuadResult(fine, abs(fine - coarse))


def _adaptive_simpson(f, spec: QuadratureSpec) -> QuadResult:
    g = lambda x: f(x) * gamma1(x)  # noqa: E731
    edges = np.linspace(-TAIL_RADIUS, TAIL_RADIUS, spec.node_count + 1)
    tol = spec.abs_tol if spec.abs_tol > 0 else spec.rel_tol
    # Work queue of panels; each entry carries endpoints, f-values and the panel estimate.
    a, b = edges[:-1], edges[1:]
    m = 0.5 * (a + b)
    fa, fm, fb = g(a), g(m), g(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    panel_tol = np.full(a.shape, tol / len(a))
    total, err = 0.0, 0.0
    evaluations = 3 * len(a)
    budget = 2_000_000
    while a.size:
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = g(lm), g(rm)
        evaluations += 2 * a.size
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - whole
        done = (np.abs(delta) <= 15.0 * panel_tol) | ((b - a) < 1e-12)
        total += float(np.sum(left[done] + right[done] + delta[done] / 15.0))
        err += float(np.sum(np.abs(delta[done]) / 15.0))
        keep = ~done
        if evaluations > budget and keep.any():
            est = total + float(np.sum(left[keep] + right[keep]))
            raise ConvergenceError("adaptive Simpson exceeded its evaluation budget", est, math.inf)
        a, m, b = a[keep], m[keep], b[keep]
        fa, fm, fb = fa[keep], fm[keep], fb[keep]
        flm, frm, lm, rm = flm[keep], frm[keep], lm[keep], rm[keep]
        left, right, pt = left[keep], right[keep], panel_tol[keep] / 2.0
        a = np.concatenate([a, m])
        b, m = np.concatenate([m, b]), np.concatenate([lm, rm])
        fa, fb = np.concatenate([fa, fm]), np.concatenate([fm, fb])
        fm = np.concatenate([flm, frm])
        whole = np.concatenate([left, right])
        panel_tol = np.concatenate([pt, pt])
    return QuadResult(total, err)


def integrate_gaussian(f: Callable, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> QuadResult:
    """Integrate ``f`` against the standard Gaussian density on the whole line.

    Parameters
    ----------
    f
        Callable on reals; numpy-vectorized callables are used directly.
    spec
        Scheme, node budget and tolerances.

    Returns
    -------
    QuadResult
        ``(value, error)``.

    Raises
    ------
    ConvergenceError
        If the error estimate exceeds the tolerance in ``spec``.
    """
    fv = _as_vectorized(f)
    if spec.scheme == "gauss_hermite":
        res = _gauss_hermite(fv, spec.node_count)
    elif spec.scheme == "tanh_sinh":
        res = _tanh_sinh_gaussian(fv, spec.node_count)
    else:
        res = _adaptive_simpson(fv, spec)
    if not math.isfinite(res.value) or res.error > spec.tolerance(res.value):
        raise ConvergenceError(
            f"{spec.scheme} did not converge: error {res.error:.3e}", res.value, res.error
        )
    return res


def gauss_legendre_panels(lo: float, hi: float, panel_width: float = 1.0, order: int = 24):
    """Composite Gauss-Legendre nodes and weights on ``[lo, hi]``.

    Infinite ends are clipped to ``TAIL_RADIUS`` beyond the other end (or the
    origin), which is harmless for integrands carrying a Gaussian factor.
    """
    if math.isinf(lo) and lo < 0:
        lo = min(hi, 0.0) - TAIL_RADIUS if math.isfinite(hi) else -TAIL_RADIUS
    if math.isinf(hi) and hi > 0:
        hi = max(lo, 0.0) + TAIL_RADIUS
    if hi <= lo:
        return np.empty(0), np.empty(0)
    panels = max(1, math.ceil((hi - lo) / panel_width))
    edges = np.linspace(lo, hi, panels + 1)
    x0, w0 = gauss_legendre_rule(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w
