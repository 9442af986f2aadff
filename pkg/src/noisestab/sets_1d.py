"""Finite unions of intervals on the extended real line."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from .gaussian_core import gamma1, interval_measure, phi_inv

MAX_INTERVALS = 64
MERGE_GAP = 1e-12

INF = math.inf


class SetSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryPoint:
    location: float
    normal: int  # exterior normal: +1 at right endpoints, -1 at left endpoints


@dataclass(frozen=True)
class IntervalUnion:
    """Disjoint sorted intervals ``(lo, hi)`` with ``lo < hi``.

    Construction canonicalizes: empty pieces are dropped, overlapping pieces
    and pieces separated by a gap below ``MERGE_GAP`` are merged. Open versus
    closed ends are not tracked since they do not change any Gaussian measure.
    """

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", _canonical(self.intervals))

    # -- construction ------------------------------------------------------

    @classmethod
    def of(cls, *pairs: tuple[float, float]) -> IntervalUnion:
        return cls(tuple(pairs))

    @classmethod
    def full(cls) -> IntervalUnion:
        return cls(((-INF, INF),))

    @classmethod
    def empty(cls) -> IntervalUnion:
        return cls(())

    @classmethod
    def from_endpoints(cls, points: Sequence[float]) -> IntervalUnion:
        """Pair up a sorted even-length endpoint list ``[lo0, hi0, lo1, hi1, ...]``."""
        if len(points) % 2:
            raise ValueError("endpoint list must have even length")
        return cls(tuple((float(points[i]), float(points[i + 1])) for i in range(0, len(points), 2)))

    @classmethod
    def parse(cls, text: str) -> IntervalUnion:
        return parse_set(text)

    # -- basic queries -------------------------------------------------------

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __str__(self) -> str:
        return format_set(self)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def lows(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.intervals], dtype=float)

    @property
    def highs(self) -> np.ndarray:
        return np.array([hi for _, hi in self.intervals], dtype=float)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_empty:
            return np.zeros(x.shape, dtype=bool)
        edges = np.column_stack([self.lows, self.highs]).ravel()
        return np.searchsorted(edges, x, side="right") % 2 == 1

    def measure(self) -> float:
        return measure(self)

    def barycenter(self) -> float:
        return barycenter(self)

    def boundary(self) -> list[BoundaryPoint]:
        return boundary(self)

    def boundary_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        pts = boundary(self)
        return (
            np.array([p.location for p in pts], dtype=float),
            np.array([p.normal for p in pts], dtype=float),
        )

    def complement(self) -> IntervalUnion:
        return complement(self)

    def translate(self, s: float) -> IntervalUnion:
        return IntervalUnion(tuple((lo + s, hi + s) for lo, hi in self.intervals))


def _canonical(pairs: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    items = []
    for pair in pairs:
        lo, hi = float(pair[0]), float(pair[1])
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints cannot be NaN")
        if lo > hi:
            raise ValueError(f"interval has lo > hi: ({lo}, {hi})")
        if lo == hi or lo == INF or hi == -INF:
            continue
        items.append((lo, hi))
    items.sort()
    merged: list[list[float]] = []
    for lo, hi in items:
        if merged and lo - merged[-1][1] < MERGE_GAP:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    if len(merged) > MAX_INTERVALS:
        raise ValueError(f"at most {MAX_INTERVALS} intervals are supported, got {len(merged)}")
    return tuple((lo, hi) for lo, hi in merged)


# -- measure-theoretic operations ---------------------------------------------


def measure(s: IntervalUnion) -> float:
    if s.is_empty:
        return 0.0
    return float(np.sum(interval_measure(s.lows, s.highs)))


def barycenter(s: IntervalUnion) -> float:
    """First moment ``int_s x gamma1``; equals ``sum gamma1(lo) - gamma1(hi)``."""
    if s.is_empty:
        return 0.0
    return float(np.sum(gamma1(s.lows) - gamma1(s.highs)))


def boundary(s: IntervalUnion) -> list[BoundaryPoint]:
    pts: list[BoundaryPoint] = []
    for lo, hi in s.intervals:
        if math.isfinite(lo):
            pts.append(BoundaryPoint(lo, -1))
        if math.isfinite(hi):
            pts.append(BoundaryPoint(hi, +1))
    return pts


def complement(s: IntervalUnion) -> IntervalUnion:
    edges = [-INF]
    for lo, hi in s.intervals:
        edges.extend([lo, hi])
    edges.append(INF)
    return IntervalUnion.from_endpoints(edges)


def union(s1: IntervalUnion, s2: IntervalUnion) -> IntervalUnion:
    return IntervalUnion(s1.intervals + s2.intervals)


def intersection(s1: IntervalUnion, s2: IntervalUnion) -> IntervalUnion:
    out = []
    i = j = 0
    a, b = s1.intervals, s2.intervals
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return IntervalUnion(tuple(out))


def difference(s1: IntervalUnion, s2: IntervalUnion) -> IntervalUnion:
    return intersection(s1, complement(s2))


def symmetric_difference_measure(s1: IntervalUnion, s2: IntervalUnion) -> float:
    return measure(difference(s1, s2)) + measure(difference(s2, s1))


# -- half spaces ------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace1D:
    threshold: float
    side: Literal["right_ray", "left_ray"]

    def __post_init__(self) -> None:
        if self.side not in ("right_ray", "left_ray"):
            raise ValueError(f"side must be right_ray or left_ray, got {self.side!r}")
        if not math.isfinite(self.threshold):
            raise ValueError("half-space threshold must be finite")

    def to_set(self) -> IntervalUnion:
        if self.side == "right_ray":
            return IntervalUnion.of((self.threshold, INF))
        return IntervalUnion.of((-INF, self.threshold))

    @property
    def aligned_positive(self) -> bool:
        return self.side == "right_ray"

    def measure(self) -> float:
        return measure(self.to_set())

    def barycenter(self) -> float:
        g = gamma1(self.threshold)
        return g if self.side == "right_ray" else -g


def alpha_of(a: float) -> float:
    """``alpha = -Phi^{-1}(a)``, so that ``[alpha, inf)`` has measure ``a``."""
    return -phi_inv(a)


def halfspace_with_measure(a: float, aligned_positive: bool = True) -> HalfSpace1D:
    if not 0.0 < a < 1.0:
        raise ValueError("halfspace_with_measure requires 0 < a < 1")
    alpha = alpha_of(a)
    if aligned_positive:
        return HalfSpace1D(alpha, "right_ray")
    return HalfSpace1D(-alpha, "left_ray")


def as_halfspace(s: IntervalUnion) -> HalfSpace1D | None:
    """The half space ``s`` equals, if it is a single ray."""
    if len(s) != 1:
        return None
    lo, hi = s.intervals[0]
    if math.isinf(hi) and math.isfinite(lo):
        return HalfSpace1D(lo, "right_ray")
    if math.isinf(lo) and math.isfinite(hi):
        return HalfSpace1D(hi, "left_ray")
    return None


# -- text syntax ---------------------------------------------------------------

_NUM = r"\s*([+-]?(?:inf(?:inity)?|[0-9.]+(?:e[+-]?[0-9]+)?|\.[0-9]+(?:e[+-]?[0-9]+)?))\s*"
_PIECE = re.compile(r"^\s*[\(\[]" + _NUM + "," + _NUM + r"[\)\]]\s*$", re.IGNORECASE)


def parse_set(text: str) -> IntervalUnion:
    """Parse ``"(-inf,0];[1.25,2.5]"``; bracket shapes are ignored, ``""`` and ``"{}"`` are empty."""
    if not isinstance(text, str):
        raise SetSyntaxError("set description must be a string")
    body = text.strip()
    if body in ("", "{}", "empty"):
        return IntervalUnion.empty()
    pairs = []
    for piece in body.split(";"):
        m = _PIECE.match(piece)
        if not m:
            raise SetSyntaxError(f"cannot parse interval {piece.strip()!r}")
        try:
            lo, hi = float(m.group(1)), float(m.group(2))
        except ValueError as exc:  # pragma: no cover - regex already restricts the form
            raise SetSyntaxError(str(exc)) from exc
        if lo > hi:
            raise SetSyntaxError(f"interval {piece.strip()!r} has lo > hi")
        pairs.append((lo, hi))
    try:
        return IntervalUnion(tuple(pairs))
    except ValueError as exc:
        raise SetSyntaxError(str(exc)) from exc


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def format_set(s: IntervalUnion) -> str:
    if s.is_empty:
        return "{}"
    parts = []
    for lo, hi in s.intervals:
        left = "(" if math.isinf(lo) else "["
        right = ")" if math.isinf(hi) else "]"
        parts.append(f"{left}{_fmt(lo)},{_fmt(hi)}{right}")
    return ";".join(parts)


# -- random sets for sweeps ----------------------------------------------------


def random_interval_union(
    rng: np.random.Generator,
    max_components: int = 4,
    span: float = 4.0,
    ray_prob: float = 0.3,
    min_gap: float = 1e-3,
) -> IntervalUnion:
    """Random union of 1..max_components intervals with endpoints in ``[-span, span]``.

    Each end is replaced by a ray with probability ``ray_prob``.
    """
    while True:
        m = int(rng.integers(1, max_components + 1))
        pts = np.sort(rng.uniform(-span, span, 2 * m))
        if np.any(np.diff(pts) < min_gap):
            continue
        pts = pts.tolist()
        if rng.random() < ray_prob:
            pts[0] = -INF
        if rng.random() < ray_prob:
            pts[-1] = INF
        s = IntervalUnion.from_endpoints(pts)
        if not s.is_empty and s != IntervalUnion.full():
            return s


def random_set_with_measure(
    rng: np.random.Generator,
    a: float,
    max_components: int = 4,
    span: float = 4.0,
    ray_prob: float = 0.3,
    max_tries: int = 1000,
) -> IntervalUnion:
    """Random union whose Gaussian measure equals ``a`` to about 1e-14.

    A random union is drawn, then one finite endpoint is moved by root
    finding until the measure matches; draws where that is impossible are
    discarded.
    """
    for _ in range(max_tries):
        s = random_interval_union(rng, max_components, span, ray_prob)
        pts = [p for pair in s.intervals for p in pair]
        finite = [i for i, p in enumerate(pts) if math.isfinite(p)]
        if not finite:
            continue
        idx = int(rng.choice(finite))
        lo_lim = pts[idx - 1] if idx > 0 else -span - 2.0
        hi_lim = pts[idx + 1] if idx + 1 < len(pts) else span + 2.0
        lo_lim = max(lo_lim, -span - 2.0)
        hi_lim = min(hi_lim, span + 2.0)
        pad = 1e-6 * (hi_lim - lo_lim)

        def gap(t: float) -> float:
            q = list(pts)
            q[idx] = t
            return measure(IntervalUnion.from_endpoints(q)) - a

        g0, g1 = gap(lo_lim + pad), gap(hi_lim - pad)
        if g0 * g1 > 0:
            continue
        t = brentq(gap, lo_lim + pad, hi_lim - pad, xtol=1e-15, rtol=1e-15)
        q = list(pts)
        q[idx] = t
        out = IntervalUnion.from_endpoints(q)
        if len(out) == len(s) and abs(measure(out) - a) < 1e-12:
            return out
    raise RuntimeError(f"could not draw a set of measure {a}")
