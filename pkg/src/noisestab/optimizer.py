"""Derivative-free maximization of the penalized objectives over interval unions.

A candidate set with ``m`` components is a sorted vector of its finite
endpoints, with the leftmost and rightmost ends optionally fixed at
``-inf``/``+inf``. Nelder-Mead runs on the CDF positions ``Phi(t)`` of those
endpoints, which keeps the flat far tails short. Infeasible vertices
(unsorted endpoints, endpoints past the sentinel, an unattainable measure)
score ``+inf``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri

from .functionals import AlignmentError, ObjectiveSpec, epsilon_cap, objective
from .gaussian_core import phi
from .sets_1d import (
    IntervalUnion,
    as_halfspace,
    barycenter,
    format_set,
    halfspace_with_measure,
    measure,
    symmetric_difference_measure,
)

__all__ = [
    "InfeasibleError",
    "SearchConfig",
    "SearchResult",
    "epsilon_cap",
    "maximize",
    "prune",
]

SENTINEL = 9.0  # gamma1 beyond 9 is below 1e-18
PRUNE_MEASURE = 1e-9
HALFSPACE_TOL = 1e-4
COARSE_XATOL = 1e-5


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    objective: ObjectiveSpec
    components: int = 2
    restarts: int = 20
    max_iters: int = 4000
    step_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.components <= 4:
            raise ValueError("components must lie in 1..4")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")
        if self.step_tol <= 0:
            raise ValueError("step_tol must be positive")

    @property
    def hard_constraint(self) -> bool:
        return self.objective.penalty != "phi_squared_with_volume"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.to_dict()
        return d


@dataclass(frozen=True)
class SearchResult:
    best_set: IntervalUnion
    best_value: float
    history: tuple[tuple[int, float], ...]
    is_halfspace: bool
    converged: bool
    evaluations: int
    restart_values: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "best_set": format_set(self.best_set),
            "best_value": self.best_value,
            "is_halfspace": self.is_halfspace,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "restart_values": list(self.restart_values),
            "history": [list(h) for h in self.history],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "value"])
        for it, v in self.history:
            w.writerow([it, f"{v:.17g}"])
        return buf.getvalue()


# -- parameterization ---------------------------------------------------------


@dataclass(frozen=True)
class _Layout:
    components: int
    left_ray: bool
    right_ray: bool

    @property
    def finite_count(self) -> int:
        return 2 * self.components - int(self.left_ray) - int(self.right_ray)

    def endpoints(self, finite: np.ndarray) -> list[float]:
        pts = list(map(float, finite))
        if self.left_ray:
            pts.insert(0, -math.inf)
        if self.right_ray:
            pts.append(math.inf)
        return pts


def _solve_last(layout: _Layout, free: np.ndarray, a: float) -> float | None:
    """CDF position of the largest finite endpoint giving the set measure ``a``."""
    u = list(map(float, free))
    lows_highs = ([0.0] if layout.left_ray else []) + u
    # completed pieces before the eliminated endpoint
    k = len(lows_highs)
    done = lows_highs[: k - (k % 2)] if layout.right_ray else lows_highs[: k - 1]
    need = a - sum(done[i + 1] - done[i] for i in range(0, len(done) - 1, 2))
    prev = lows_highs[-1] if lows_highs else 0.0
    if layout.right_ray:
        last = 1.0 - need  # left end of [t, inf)
    else:
        last = prev + need  # right end of [prev, t]
    if not (need > 0 and prev < last < 1.0 and (lows_highs or last > 0.0)):
        return None
    return last


class _Problem:
    def __init__(self, config: SearchConfig, layout: _Layout):
        self.config = config
        self.spec = config.objective
        self.layout = layout
        self.evaluations = 0
        self.cache: dict[bytes, float] = {}

    @property
    def dim(self) -> int:
        return self.layout.finite_count - (1 if self.config.hard_constraint else 0)

    def build(self, params: np.ndarray) -> IntervalUnion | None:
        u = np.asarray(params, dtype=float)
        if u.size and (np.any(np.diff(u) <= 0) or u[0] <= 0.0 or u[-1] >= 1.0):
            return None
        if self.config.hard_constraint:
            last = _solve_last(self.layout, u, self.spec.a)
            if last is None:
                return None
            u = np.append(u, last)
        t = ndtri(u)
        if np.any(np.diff(t) <= 0) or np.any(np.abs(t) > SENTINEL):
            return None
        return IntervalUnion.from_endpoints(self.layout.endpoints(t))

    def value(self, params: np.ndarray) -> float:
        key = np.asarray(params, dtype=float).tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        self.evaluations += 1
        s = self.build(params)
        out = -math.inf
        if s is not None and not s.is_empty:
            try:
                out = objective(s, self.spec)
            except AlignmentError:
                out = -math.inf
        self.cache[key] = out
        return out


def _draw_layout(rng: np.random.Generator, m: int) -> _Layout:
    while True:
        lay = _Layout(m, bool(rng.random() < 0.5), bool(rng.random() < 0.5))
        if lay.finite_count >= 1:
            return lay


def _draw_start(rng: np.random.Generator, problem: _Problem, tries: int = 100) -> np.ndarray:
    for _ in range(tries):
        x = np.sort(rng.uniform(0.001, 0.999, problem.dim))
        if problem.dim > 1 and np.min(np.diff(x)) < 0.01:
            continue
        if math.isfinite(problem.value(x)):
            return x
    raise InfeasibleError("no feasible start after 100 draws")


def _initial_simplex(problem: _Problem, x0: np.ndarray) -> np.ndarray:
    pts = [x0]
    for i in range(x0.size):
        for step in (0.05, -0.05, 0.01, -0.01, 1e-3, -1e-3):
            x = x0.copy()
            x[i] += step
            if math.isfinite(problem.value(x)):
                pts.append(x)
                break
        else:
            x = x0.copy()
            x[i] += 1e-5
            pts.append(x)
    return np.array(pts)


def _nelder_mead(problem: _Problem, x0: np.ndarray, config: SearchConfig, trace: list[float], xatol: float):
    if x0.size == 0:
        return x0, problem.value(x0), True

    def f(x: np.ndarray) -> float:
        v = problem.value(x)
        return -v if math.isfinite(v) else math.inf

    def cb(xk: np.ndarray) -> None:
        trace.append(problem.value(xk))

    x, converged = x0, False
    for _ in range(3):  # restart from the incumbent to undo simplex collapse
        res = minimize(
            f,
            x,
            method="Nelder-Mead",
            callback=cb,
            options={
                "initial_simplex": _initial_simplex(problem, x),
                "xatol": xatol,
                "fatol": 1e-14,
                "maxiter": config.max_iters,
                "adaptive": x.size > 2,
            },
        )
        moved = float(np.max(np.abs(res.x - x))) if x.size else 0.0
        x = res.x
        converged = bool(res.success)
        if moved < 10 * xatol:
            break
    return x, problem.value(x), converged


def prune(s: IntervalUnion, tol: float = PRUNE_MEASURE) -> IntervalUnion:
    """Drop components and fill gaps (including the two tails) of Gaussian measure below ``tol``."""
    pieces = [p for p in s.intervals if measure(IntervalUnion.of(p)) >= tol]
    if pieces and phi(pieces[0][0]) < tol:
        pieces[0] = (-math.inf, pieces[0][1])
    if pieces and phi(-pieces[-1][1]) < tol:
        pieces[-1] = (pieces[-1][0], math.inf)
    merged: list[list[float]] = []
    for lo, hi in pieces:
        if merged and measure(IntervalUnion.of((merged[-1][1], lo))) < tol:
            merged[-1][1] = hi
        else:
            merged.append([lo, hi])
    return IntervalUnion(tuple((lo, hi) for lo, hi in merged))


def _layout_of(s: IntervalUnion) -> tuple[_Layout, np.ndarray]:
    lay = _Layout(len(s), math.isinf(s.intervals[0][0]), math.isinf(s.intervals[-1][1]))
    finite = np.array([p for pair in s.intervals for p in pair if math.isfinite(p)])
    return lay, phi(finite)


def _polish_pruned(config: SearchConfig, s: IntervalUnion, trace: list[float]) -> tuple[IntervalUnion, float, bool, int]:
    p = prune(s)
    if p.is_empty or p == IntervalUnion.full():
        return s, -math.inf, False, 0
    lay, finite = _layout_of(p)
    problem = _Problem(config, lay)
    x0 = finite[:-1] if config.hard_constraint else finite
    if not math.isfinite(problem.value(x0)):
        return s, -math.inf, False, problem.evaluations
    x, v, conv = _nelder_mead(problem, x0, config, trace, config.step_tol)
    out = problem.build(x)
    return (out if out is not None else s), v, conv, problem.evaluations


def is_matched_halfspace(s: IntervalUnion, a: float, tol: float = HALFSPACE_TOL) -> bool:
    """Single finite boundary point and close to the half space of measure ``a``."""
    if as_halfspace(s) is None:
        return False
    h = halfspace_with_measure(a, barycenter(s) > 0).to_set()
    return symmetric_difference_measure(s, h) < tol


def maximize(config: SearchConfig) -> SearchResult:
    """Multi-start Nelder-Mead over endpoint vectors.

    Each restart draws a component layout (which ends are rays) and a start
    point from its own child seed. A coarse pass is followed by pruning of
    negligible pieces and a polish at ``step_tol``; the pruned layout is kept
    when it is not worse than the coarse optimum by more than ``1e-9``.
    """
    root = np.random.SeedSequence(config.seed)
    history: list[tuple[int, float]] = []
    best_set: IntervalUnion | None = None
    best_value = -math.inf
    all_converged = True
    evaluations = 0
    restart_values = []
    iteration = 0
    for child in root.spawn(config.restarts):
        rng = np.random.default_rng(child)
        m = int(rng.integers(1, config.components + 1))
        layout = _draw_layout(rng, m)
        problem = _Problem(config, layout)
        try:
            x0 = _draw_start(rng, problem)
        except InfeasibleError:
            evaluations += problem.evaluations
            continue
        trace: list[float] = [problem.value(x0)]
        x, v, conv = _nelder_mead(problem, x0, config, trace, COARSE_XATOL)
        s = problem.build(x)
        evaluations += problem.evaluations
        ps, pv, pconv, pe = _polish_pruned(config, s, trace)
        evaluations += pe
        if math.isfinite(pv) and pv >= v - 1e-9:
            s, v, conv = ps, pv, pconv
        else:
            # pruning hurt: finish the unpruned layout at full accuracy
            x, v, conv = _nelder_mead(problem, x, config, trace, config.step_tol)
            s = problem.build(x)
            evaluations += problem.evaluations
        all_converged &= conv
        restart_values.append(v)
        better = v > best_value + 1e-12 or (
            abs(v - best_value) <= 1e-12 and best_set is not None and len(s.boundary()) < len(best_set.boundary())
        )
        if better:
            best_set, best_value = s, v
        for t in trace:
            iteration += 1
            running = max(history[-1][1], t) if history else t
            history.append((iteration, running))
        if history and history[-1][1] < best_value:
            iteration += 1
            history.append((iteration, best_value))
    if best_set is None:
        raise InfeasibleError("no feasible start after 100 draws in any restart")
    history = [(i, min(v, best_value)) for i, v in history]
    return SearchResult(
        best_set=best_set,
        best_value=best_value,
        history=tuple(history),
        is_halfspace=is_matched_halfspace(best_set, config.objective.a),
        converged=all_converged,
        evaluations=evaluations,
        restart_values=tuple(restart_values),
    )
