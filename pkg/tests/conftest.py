from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import strategies as st

from noisestab.sets_1d import IntervalUnion


@st.composite
def interval_unions(draw, max_components: int = 4, span: float = 4.0, allow_rays: bool = True):
    """Non-empty, non-full unions with well separated endpoints."""
    m = draw(st.integers(1, max_components))
    pts = draw(
        st.lists(
            st.floats(-span, span, allow_nan=False, allow_infinity=False),
            min_size=2 * m,
            max_size=2 * m,
            unique=True,
        ).map(sorted)
    )
    if min(np.diff(pts)) < 1e-3:
        pts = list(np.linspace(pts[0], pts[0] + 1e-2 * len(pts), len(pts)))
    if allow_rays and draw(st.booleans()):
        pts[0] = -math.inf
    if allow_rays and draw(st.booleans()):
        pts[-1] = math.inf
    s = IntervalUnion.from_endpoints(pts)
    if s.is_empty or s == IntervalUnion.full():
        s = IntervalUnion.of((-1.0, 0.5))
    return s


rhos = st.floats(0.05, 0.95)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
