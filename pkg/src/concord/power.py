"""Expected 95% CI half-width for an agreement proportion.

half_width = 1.96 * sqrt(p (1 - p) / n). The 1.96 is a fixed constant of
the planning formula (not a recomputed quantile) so published planning
tables reproduce digit for digit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import math

CRITICAL_VALUE = 1.96

DEFAULT_PROPORTIONS = (0.70, 0.75, 0.80)
DEFAULT_SIZES = (476, 1143, 391)


@dataclass(frozen=True)
class HalfWidth:
    proportion: float
    n: int
    halfwidth: float

    @property
    def percent(self) -> float:
        return 100.0 * self.halfwidth

    def to_dict(self) -> dict:
        return {"proportion": self.proportion, "n": self.n, "halfwidth": self.halfwidth}


def ci_halfwidth(proportion: float, n: int) -> HalfWidth:
    """Planning half-width at an assumed agreement proportion and cohort size."""
    if not 0.0 <= proportion <= 1.0:
        raise ValueError(f"proportion must lie in [0, 1], got {proportion}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    hw = CRITICAL_VALUE * math.sqrt(proportion * (1.0 - proportion) / n)
    return HalfWidth(proportion=float(proportion), n=int(n), halfwidth=hw)


def halfwidth_table(
    proportions: Sequence[float] = DEFAULT_PROPORTIONS,
    sizes: Sequence[int] = DEFAULT_SIZES,
) -> list[list[HalfWidth]]:
    """Grid of half-widths, one row per cohort size."""
    return [[ci_halfwidth(p, n) for p in proportions] for n in sizes]
