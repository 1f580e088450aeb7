"""Exact interval arithmetic over axis-aligned boxes with open/closed bounds.

Path premises and rule premises both reduce to per-feature intervals, so
overlap questions ("can any input satisfy both?") become box intersections.
Endpoint openness matters: a path constraint ``f > b`` meeting a rule bound
``f <= b`` must come out empty, while ``f <= b`` meeting ``f >= b`` leaves
the single point ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Interval:
    """A real interval with independently open or closed endpoints.

    Infinite endpoints are always treated as open. An Interval is never
    empty by construction; operations that would produce an empty interval
    return None instead.
    """

    lo: float = -math.inf
    hi: float = math.inf
    lo_open: bool = True
    hi_open: bool = True

    def __post_init__(self):
        lo_open = self.lo_open or math.isinf(self.lo)
        hi_open = self.hi_open or math.isinf(self.hi)
        object.__setattr__(self, "lo_open", lo_open)
        object.__setattr__(self, "hi_open", hi_open)
        if self.lo > self.hi:
            raise ValueError(f"empty interval: lo={self.lo} > hi={self.hi}")
        if self.lo == self.hi and (lo_open or hi_open):
            raise ValueError(f"empty interval: degenerate open bound at {self.lo}")

    @classmethod
    def closed(cls, lo, hi):
        return cls(lo, hi, lo_open=False, hi_open=False)

    @classmethod
    def at_most(cls, b):
        """Constraint ``f <= b`` (left edge of a split)."""
        return cls(hi=b, hi_open=False)

    @classmethod
    def greater_than(cls, b):
        """Constraint ``f > b`` (right edge of a split)."""
        return cls(lo=b, lo_open=True)

    @property
    def is_point(self):
        return self.lo == self.hi

    def contains(self, v: float) -> bool:
        above = v > self.lo if self.lo_open else v >= self.lo
        below = v < self.hi if self.hi_open else v <= self.hi
        return above and below

    def intersect(self, other: "Interval") -> "Interval | None":
        """Intersection, or None when empty."""
        if self.lo > other.lo or (self.lo == other.lo and self.lo_open):
            lo, lo_open = self.lo, self.lo_open
        else:
            lo, lo_open = other.lo, other.lo_open
        if self.hi < other.hi or (self.hi == other.hi and self.hi_open):
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        if lo > hi or (lo == hi and (lo_open or hi_open)):
            return None
        return Interval(lo, hi, lo_open, hi_open)

    def pick_value(self) -> float:
        """Some value inside the interval, preferring finite bounds."""
        if self.is_point:
            return self.lo
        if math.isinf(self.lo) and math.isinf(self.hi):
            return 0.0
        if math.isinf(self.lo):
            return self.hi if not self.hi_open else self.hi - 1.0
        if math.isinf(self.hi):
            return self.lo if not self.lo_open else self.lo + 1.0
        mid = 0.5 * (self.lo + self.hi)
        # Midpoint of a non-degenerate finite interval is strictly inside,
        # except when rounding collapses it onto an open endpoint.
        if self.contains(mid):
            return mid
        return self.hi if not self.hi_open else self.lo

    def __str__(self):
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{left}{self.lo:g}, {self.hi:g}{right}"


class Box:
    """Per-feature interval map; features not mentioned span all reals.

    Empty boxes are represented by the module-level EMPTY_BOX sentinel so
    "no input can satisfy this" is an explicit value rather than an error.
    """

    __slots__ = ("intervals", "empty")

    def __init__(self, intervals=None, _empty=False):
        self.intervals: dict[int, Interval] = dict(intervals or {})
        self.empty = _empty

    @classmethod
    def universe(cls):
        return cls()

    @property
    def is_empty(self):
        return self.empty

    def get(self, feature: int) -> Interval:
        return self.intervals.get(feature, _UNIVERSE_INTERVAL)

    def features(self):
        return set(self.intervals)

    def constrain(self, feature: int, interval: Interval) -> "Box":
        """New box with one more conjunct; EMPTY_BOX on contradiction."""
        if self.empty:
            return EMPTY_BOX
        merged = self.get(feature).intersect(interval)
        if merged is None:
            return EMPTY_BOX
        out = dict(self.intervals)
        out[feature] = merged
        return Box(out)

    def intersect(self, other: "Box") -> "Box":
        if self.empty or other.empty:
            return EMPTY_BOX
        out = self
        for f, iv in other.intervals.items():
            out = out.constrain(f, iv)
            if out.is_empty:
                return EMPTY_BOX
        return out

    def contains(self, x) -> bool:
        """Whether the feature vector x satisfies every interval."""
        if self.empty:
            return False
        return all(iv.contains(x[f]) for f, iv in self.intervals.items())

    def witness(self, n_features: int, base=None):
        """A concrete input inside the box (base values where unconstrained)."""
        if self.empty:
            raise ValueError("empty box has no witness")
        import numpy as np

        x = np.zeros(n_features, dtype=float) if base is None else np.array(base, dtype=float)
        for f, iv in self.intervals.items():
            x[f] = iv.pick_value()
        return x

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        if self.empty or other.empty:
            return self.empty == other.empty
        return self.intervals == other.intervals

    def __repr__(self):
        if self.empty:
            return "Box(EMPTY)"
        parts = ", ".join(f"f{f} in {iv}" for f, iv in sorted(self.intervals.items()))
        return f"Box({parts or 'universe'})"


_UNIVERSE_INTERVAL = Interval()
EMPTY_BOX = Box(_empty=True)
