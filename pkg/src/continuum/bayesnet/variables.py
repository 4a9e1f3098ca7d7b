"""Discrete variables and metric binning."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

ROLES = ("observation_metric", "action", "slo_indicator", "context")


@dataclass(frozen=True)
class Variable:
    """A discrete network variable.

    ``cuts`` holds the k-1 ordered cut points for metric variables; bins are
    left-closed with the boundary value belonging to the lower bin.
    """

    name: str
    card: int
    role: str = "context"
    cuts: tuple[float, ...] | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.card < 2:
            raise ValueError(f"variable {self.name!r}: cardinality must be >= 2, got {self.card}")
        if self.role not in ROLES:
            raise ValueError(f"variable {self.name!r}: unknown role {self.role!r}")
        if self.cuts is not None:
            cuts = tuple(float(c) for c in self.cuts)
            object.__setattr__(self, "cuts", cuts)
            if len(cuts) != self.card - 1:
                raise ValueError(
                    f"variable {self.name!r}: {self.card} bins need {self.card - 1} cut points, got {len(cuts)}"
                )
            if any(b <= a for a, b in zip(cuts, cuts[1:])):
                raise ValueError(f"variable {self.name!r}: cut points must be strictly increasing")
        if self.labels is not None:
            labels = tuple(self.labels)
            object.__setattr__(self, "labels", labels)
            if len(labels) != self.card:
                raise ValueError(f"variable {self.name!r}: expected {self.card} labels")

    def bin(self, value: float) -> int:
        if self.cuts is None:
            raise ValueError(f"variable {self.name!r} has no binning")
        return discretize(value, self.cuts)


def discretize(value: float, cuts) -> int:
    """Index of the first cut point >= value; +inf maps to the top bin."""
    if math.isnan(value):
        raise ValueError("cannot discretize NaN")
    if value == math.inf:
        return len(cuts)
    return bisect.bisect_left(cuts, value)


def equal_width_cuts(low: float, high: float, k: int = 4) -> tuple[float, ...]:
    if not high > low:
        raise ValueError("metric range must have high > low")
    step = (high - low) / k
    return tuple(low + step * i for i in range(1, k))
