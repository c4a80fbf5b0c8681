"""Probability triples over the three NLI labels and the math on them.

Conventions used throughout the package:
  * label order is (entailment, neutral, contradiction)
  * entropy and divergences use base-2 logs (values in bits, JSD bounded by 1)
  * the training loss uses natural logs
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .util import DataError


class ZeroCounts(DataError):
    """Annotation counts sum to zero, so no distribution can be formed."""


class NonpositivePrediction(DataError):
    """A predicted probability is <= 0 where the loss needs log(q)."""


class InvalidDistribution(DataError):
    """Components are not a valid point on the 3-label simplex."""


# |sum - 1| up to this is accepted verbatim
_EXACT_TOL = 1e-9
# between _EXACT_TOL and this the point is re-projected onto the simplex
_REPAIR_TOL = 1e-6


class GoldLabel(Enum):
    ENTAILMENT = "entailment"
    NEUTRAL = "neutral"
    CONTRADICTION = "contradiction"
    # the source datasets' "-1" convention for 5-way annotation ties
    NO_MAJORITY = "no_majority"


# argmax / tie-break order: entailment first, contradiction last
LABEL_ORDER = (GoldLabel.ENTAILMENT, GoldLabel.NEUTRAL, GoldLabel.CONTRADICTION)


@dataclass(frozen=True)
class LabelDistribution:
    """A point on the (entailment, neutral, contradiction) probability simplex."""

    p_e: float
    p_n: float
    p_c: float

    def __post_init__(self) -> None:
        ps = (self.p_e, self.p_n, self.p_c)
        if not all(math.isfinite(p) for p in ps):
            raise InvalidDistribution(f"non-finite component in {ps}")
        total = sum(ps)
        if abs(total - 1.0) > _REPAIR_TOL or min(ps) < -_REPAIR_TOL:
            raise InvalidDistribution(f"not a simplex point: {ps} (sum {total!r})")
        if abs(total - 1.0) > _EXACT_TOL or min(ps) < 0.0:
            # small drift: clamp negatives and rescale
            clamped = [max(p, 0.0) for p in ps]
            s = sum(clamped)
            object.__setattr__(self, "p_e", clamped[0] / s)
            object.__setattr__(self, "p_n", clamped[1] / s)
            object.__setattr__(self, "p_c", clamped[2] / s)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_e, self.p_n, self.p_c)

    def argmax(self) -> GoldLabel:
        """Label with the largest mass; ties resolved in LABEL_ORDER."""
        ps = self.as_tuple()
        best = max(range(3), key=lambda i: (ps[i], -i))
        return LABEL_ORDER[best]

    def is_one_hot(self, tol: float = 1e-12) -> bool:
        return max(self.as_tuple()) >= 1.0 - tol


UNIFORM = LabelDistribution(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

ONE_HOT = {
    GoldLabel.ENTAILMENT: LabelDistribution(1.0, 0.0, 0.0),
    GoldLabel.NEUTRAL: LabelDistribution(0.0, 1.0, 0.0),
    GoldLabel.CONTRADICTION: LabelDistribution(0.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class LabelCounts:
    """Raw annotation tallies per label."""

    n_e: int
    n_n: int
    n_c: int

    def __post_init__(self) -> None:
        for n in (self.n_e, self.n_n, self.n_c):
            if not isinstance(n, int) or n < 0:
                raise ValueError(f"counts must be non-negative integers, got {self}")

    @property
    def total(self) -> int:
        return self.n_e + self.n_n + self.n_c

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_e, self.n_n, self.n_c)


def normalize(counts: LabelCounts) -> LabelDistribution:
    """Scale annotation counts down into a probability distribution."""
    total = counts.total
    if total == 0:
        raise ZeroCounts("cannot normalize zero annotation counts")
    return LabelDistribution(counts.n_e / total, counts.n_n / total, counts.n_c / total)


def majority_label(counts: LabelCounts) -> GoldLabel:
    """Strict majority vote; a tied top count yields NO_MAJORITY."""
    if counts.total == 0:
        raise ZeroCounts("cannot take a majority of zero annotation counts")
    ns = counts.as_tuple()
    top = max(ns)
    if sum(1 for n in ns if n == top) > 1:
        return GoldLabel.NO_MAJORITY
    return LABEL_ORDER[ns.index(top)]


def entropy(d: LabelDistribution) -> float:
    """Shannon entropy in bits, with 0*log2(0) := 0. Range [0, log2 3]."""
    return -sum(p * math.log2(p) for p in d.as_tuple() if p > 0.0)


def kl(a: LabelDistribution, b: LabelDistribution) -> float:
    """KL(a || b) in bits; +inf when b lacks support where a has mass."""
    out = 0.0
    for pa, pb in zip(a.as_tuple(), b.as_tuple()):
        if pa <= 0.0:
            continue
        if pb <= 0.0:
            return math.inf
        out += pa * math.log2(pa / pb)
    return out


def jsd(a: LabelDistribution, b: LabelDistribution) -> float:
    """Jensen-Shannon divergence in bits: (KL(a||m) + KL(b||m))/2, m the midpoint.

    Base-2 logs bound the result by 1. Always finite: m >= a/2 wherever a > 0.
    """
    am = a.as_tuple()
    bm = b.as_tuple()
    mid = LabelDistribution(*((x + y) / 2.0 for x, y in zip(am, bm)))
    return 0.5 * kl(a, mid) + 0.5 * kl(b, mid)


def soft_cross_entropy(target: LabelDistribution, predicted: LabelDistribution) -> float:
    """Cross-entropy -sum t_i ln q_i in nats between a target distribution
    and a strictly positive predicted distribution."""
    out = 0.0
    for t, q in zip(target.as_tuple(), predicted.as_tuple()):
        if q <= 0.0:
            raise NonpositivePrediction(f"predicted component {q!r} is not positive")
        if t > 0.0:
            out -= t * math.log(q)
    return out
