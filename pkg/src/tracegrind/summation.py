"""Order-independent exact float accumulation.

Partial aggregates computed on different partitions must merge into
bit-identical totals no matter how the input was split. Plain float sums
depend on evaluation order, so accumulators here keep the running sum as a
Shewchuk expansion (a list of non-overlapping floats whose exact real sum
is the true total) and only round when the value is read. Rounding an
exact real is order-independent, which makes merge(a, b) == whole exact
rather than tolerance-based.
"""

from __future__ import annotations

import math
from typing import Iterable, List


def grow_expansion(partials: List[float], x: float) -> None:
    """Add ``x`` into an expansion in place, keeping the sum exact.

    Classic two-sum cascade (the same scheme math.fsum uses internally):
    each partial absorbs what it can, round-off terms are re-collected.
    """
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


class ExactSum:
    """Running sum with exact merge and correctly-rounded readout."""

    __slots__ = ("partials",)

    def __init__(self, values: Iterable[float] = ()) -> None:
        self.partials: List[float] = []
        for v in values:
            grow_expansion(self.partials, v)

    def add(self, x: float) -> None:
        grow_expansion(self.partials, x)

    def merge(self, other: "ExactSum") -> None:
        for p in other.partials:
            grow_expansion(self.partials, p)

    @property
    def value(self) -> float:
        # fsum of the expansion is the correctly rounded exact total.
        return math.fsum(self.partials)

    def __repr__(self) -> str:
        return f"ExactSum({self.value!r})"
