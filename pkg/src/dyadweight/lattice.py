"""Dyadic intervals on [0, 1) truncated at a finite depth.

Intervals are addressed by ``(level, position)``.  Per-interval data for all
levels ``0..N-1`` is stored in *heap order*: the interval ``(k, j)`` lives at
flat index ``2**k - 1 + j``, so level ``k`` occupies the slice
``[2**k - 1, 2**(k+1) - 1)``.

Sign convention: the Haar function of ``I`` is positive on the RIGHT half,
``h_I = (chi_{I+} - chi_{I-}) / sqrt(|I|)``.  Many references use the opposite
sign; everything in this package follows the right-positive one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

DEFAULT_DEPTH = 12


class DepthExceededError(ValueError):
    """Raised when asking for children of a finest-level interval."""


@dataclass(frozen=True, order=True)
class DyadicInterval:
    level: int
    position: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if not 0 <= self.position < (1 << self.level):
            raise ValueError(f"position {self.position} out of range at level {self.level}")

    @property
    def length(self) -> float:
        return 2.0 ** -self.level

    @property
    def left(self) -> float:
        return self.position * self.length

    @property
    def right(self) -> float:
        return (self.position + 1) * self.length

    @property
    def index(self) -> int:
        """Flat heap index."""
        return (1 << self.level) - 1 + self.position

    def contains(self, x: float) -> bool:
        return self.left <= x < self.right

    def is_ancestor_of(self, other: "DyadicInterval") -> bool:
        """True when ``other`` is a (non-strict) dyadic subinterval of self."""
        shift = other.level - self.level
        return shift >= 0 and (other.position >> shift) == self.position

    def leaf_slice(self, depth: int) -> slice:
        """Slice of finest-level leaves (at ``depth``) covered by the interval."""
        span = 1 << (depth - self.level)
        return slice(self.position * span, (self.position + 1) * span)

    def __str__(self):
        return f"[{self.left:g},{self.right:g})"


ROOT = DyadicInterval(0, 0)


@dataclass(frozen=True)
class LatticeConfig:
    max_depth: int = DEFAULT_DEPTH

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    @property
    def n_leaves(self) -> int:
        return 1 << self.max_depth

    @property
    def n_intervals(self) -> int:
        """Number of intervals carrying a Haar function (levels 0..N-1)."""
        return (1 << self.max_depth) - 1

    def children(self, interval: DyadicInterval) -> tuple[DyadicInterval, DyadicInterval]:
        return children(interval, self.max_depth)

    def descendants(self, interval: DyadicInterval = ROOT) -> list[DyadicInterval]:
        return descendants(interval, self.max_depth)

    def intervals(self) -> Iterator[DyadicInterval]:
        """All intervals of levels 0..N-1 in heap order."""
        for k in range(self.max_depth):
            for j in range(1 << k):
                yield DyadicInterval(k, j)


def children(interval: DyadicInterval, max_depth: int) -> tuple[DyadicInterval, DyadicInterval]:
    """Left and right halves ``(I-, I+)``."""
    if interval.level >= max_depth:
        raise DepthExceededError(f"{interval} is at the finest level {max_depth}")
    k, j = interval.level + 1, 2 * interval.position
    return DyadicInterval(k, j), DyadicInterval(k, j + 1)


def descendants(interval: DyadicInterval, max_depth: int) -> list[DyadicInterval]:
    """All dyadic subintervals of ``interval`` down to ``max_depth``, itself included.

    Ordered level-major, position-minor.
    """
    if interval.level > max_depth:
        raise DepthExceededError(f"{interval} is deeper than {max_depth}")
    out = []
    for m in range(max_depth - interval.level + 1):
        base = interval.position << m
        out.extend(DyadicInterval(interval.level + m, base + i) for i in range(1 << m))
    return out


def from_index(index: int) -> DyadicInterval:
    level = (index + 1).bit_length() - 1
    return DyadicInterval(level, index + 1 - (1 << level))


def level_slice(level: int) -> slice:
    return slice((1 << level) - 1, (1 << (level + 1)) - 1)


def haar_eval(interval: DyadicInterval, x):
    """Value of ``h_I`` at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    amp = interval.length ** -0.5
    mid = 0.5 * (interval.left + interval.right)
    out = np.where((x >= interval.left) & (x < mid), -amp, 0.0)
    out = np.where((x >= mid) & (x < interval.right), amp, out)
    return out if out.ndim else float(out)


def haar_on_leaves(interval: DyadicInterval, depth: int) -> np.ndarray:
    """``h_I`` sampled on the ``2**depth`` finest leaves (exact for level < depth)."""
    if interval.level >= depth:
        raise DepthExceededError(f"{interval} has no Haar function at depth {depth}")
    out = np.zeros(1 << depth)
    sl = interval.leaf_slice(depth)
    half = (sl.stop - sl.start) // 2
    amp = interval.length ** -0.5
    out[sl.start:sl.start + half] = -amp
    out[sl.start + half:sl.stop] = amp
    return out


def leaf_midpoints(depth: int) -> np.ndarray:
    n = 1 << depth
    return (np.arange(n) + 0.5) / n
