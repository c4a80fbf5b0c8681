"""Shared fixtures and hypothesis strategies."""

from __future__ import annotations

import math

from hypothesis import strategies as st

from ambinli.dist import LabelCounts, LabelDistribution


@st.composite
def simplex_points(draw) -> LabelDistribution:
    """Random valid points on the 3-label simplex (normalized positives)."""
    raw = draw(
        st.tuples(
            st.floats(0.0, 1.0, allow_nan=False),
            st.floats(0.0, 1.0, allow_nan=False),
            st.floats(0.0, 1.0, allow_nan=False),
        ).filter(lambda t: sum(t) > 1e-6)
    )
    total = sum(raw)
    return LabelDistribution(raw[0] / total, raw[1] / total, raw[2] / total)


@st.composite
def positive_simplex_points(draw, floor: float = 1e-6) -> LabelDistribution:
    """Simplex points with every component strictly positive."""
    raw = draw(
        st.tuples(
            st.floats(floor, 1.0, allow_nan=False),
            st.floats(floor, 1.0, allow_nan=False),
            st.floats(floor, 1.0, allow_nan=False),
        )
    )
    total = sum(raw)
    return LabelDistribution(raw[0] / total, raw[1] / total, raw[2] / total)


label_counts = st.builds(
    LabelCounts,
    st.integers(0, 200),
    st.integers(0, 200),
    st.integers(0, 200),
).filter(lambda c: c.total >= 1)


def entropy_nats(d: LabelDistribution) -> float:
    """Independent oracle: Shannon entropy in nats."""
    return -sum(p * math.log(p) for p in d.as_tuple() if p > 0.0)
