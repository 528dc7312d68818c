"""Shared domain types: dyadic grids, training sets, bin arithmetic.

Coefficient vectors are plain 1-D float arrays; the coordinate index set is
the array position. A training set stores clean and noisy vectors as two
``(m, n_coords)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GridRangeError(ValueError):
    """A value lies outside the half-open grid interval (m1, m2]."""


@dataclass(frozen=True)
class GridSpec:
    """Dyadic partition of (m1, m2] into bins of width 2**-n.

    Bin ``t`` (1-based) is ``(m1 + (t-1)/2**n, m1 + t/2**n]``. ``eps`` is the
    offset used for candidate points just inside a bin's open left end; it
    defaults to a sixteenth of the bin width.
    """

    m1: int
    m2: int
    n: int
    eps: float | None = None

    def __post_init__(self):
        if int(self.m1) != self.m1 or int(self.m2) != self.m2:
            raise ValueError("grid bounds must be integers")
        if self.m1 >= self.m2:
            raise ValueError(f"need m1 < m2, got ({self.m1}, {self.m2})")
        if self.n < 0:
            raise ValueError("dyadic level n must be non-negative")
        if self.eps is None:
            object.__setattr__(self, "eps", 2.0 ** -(self.n + 4))
        if not 0 < self.eps <= self.width:
            raise ValueError(f"eps must lie in (0, {self.width}], got {self.eps}")

    @property
    def width(self) -> float:
        return 2.0 ** -self.n

    @property
    def n_bins(self) -> int:
        return (self.m2 - self.m1) * 2 ** self.n

    def refined(self, n: int) -> "GridSpec":
        """Same interval at level ``n`` with the default eps for that level."""
        return GridSpec(self.m1, self.m2, n)

    def edges(self) -> np.ndarray:
        return self.m1 + np.arange(self.n_bins + 1) * self.width

    def contains(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return (a > self.m1) & (a <= self.m2)


def bin_index(a, grid: GridSpec, coord=None):
    """1-based index of the bin containing ``a`` (scalar or array).

    Uses ``ceil((a - m1) * 2**n)`` so that a value on a right endpoint stays
    in the bin it closes.
    """
    arr = np.asarray(a, dtype=float)
    bad = ~grid.contains(arr)
    if np.any(bad):
        where = np.flatnonzero(np.atleast_1d(bad))
        first = np.atleast_1d(arr)[where[0]]
        label = coord if coord is not None else (where[0] if arr.ndim else None)
        raise GridRangeError(
            f"value {first!r} at coordinate {label} outside grid "
            f"({grid.m1}, {grid.m2}]"
        )
    t = np.ceil((arr - grid.m1) * 2.0 ** grid.n).astype(int)
    t = np.clip(t, 1, grid.n_bins)
    return int(t) if t.ndim == 0 else t


def bin_interval(t: int, grid: GridSpec) -> tuple[float, float]:
    """Endpoints ``(lo, hi)`` of bin ``t``; the bin is open at ``lo``."""
    if not 1 <= t <= grid.n_bins:
        raise GridRangeError(f"bin {t} outside 1..{grid.n_bins}")
    return grid.m1 + (t - 1) * grid.width, grid.m1 + t * grid.width


@dataclass(frozen=True)
class TrainingSet:
    """Pairs of clean/noisy coefficient vectors sharing one index set."""

    clean: np.ndarray
    noisy: np.ndarray
    coords: tuple = field(default=None)

    def __post_init__(self):
        clean = np.atleast_2d(np.asarray(self.clean, dtype=float))
        noisy = np.atleast_2d(np.asarray(self.noisy, dtype=float))
        if clean.shape != noisy.shape:
            raise ValueError(
                f"clean/noisy shapes differ: {clean.shape} vs {noisy.shape}"
            )
        if clean.shape[0] < 1:
            raise ValueError("training set needs at least one pair")
        clean.setflags(write=False)
        noisy.setflags(write=False)
        object.__setattr__(self, "clean", clean)
        object.__setattr__(self, "noisy", noisy)
        if self.coords is None:
            object.__setattr__(self, "coords", tuple(range(clean.shape[1])))
        elif len(set(self.coords)) != len(self.coords) or len(self.coords) != clean.shape[1]:
            raise ValueError("coordinate labels must be unique, one per column")

    @classmethod
    def from_pairs(cls, pairs) -> "TrainingSet":
        pairs = list(pairs)
        lengths = {len(np.ravel(f)) for f, _ in pairs} | {len(np.ravel(g)) for _, g in pairs}
        if len(lengths) != 1:
            raise ValueError(f"pairs have mismatched lengths {sorted(lengths)}")
        return cls(np.array([np.ravel(f) for f, _ in pairs]),
                   np.array([np.ravel(g) for _, g in pairs]))

    @property
    def m(self) -> int:
        return self.clean.shape[0]

    @property
    def n_coords(self) -> int:
        return self.clean.shape[1]

    def pairs(self):
        return list(zip(self.clean, self.noisy))

    def coord_slice(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(clean values, noisy values) of every pair at coordinate ``j``."""
        return self.clean[:, j], self.noisy[:, j]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.clean[idx], self.noisy[idx], self.coords)


def validate_problem(ts, grid: GridSpec) -> list[str]:
    """Return human-readable violations; an empty list means the problem is valid.

    ``ts`` may be a :class:`TrainingSet` or a sequence of ``(clean, noisy)``
    pairs, which lets mismatched index sets be reported instead of raised.
    """
    problems = []
    pairs = ts.pairs() if isinstance(ts, TrainingSet) else list(ts)
    if not pairs:
        return ["training set is empty"]
    ref = len(np.ravel(pairs[0][0]))
    for i, (f, g) in enumerate(pairs):
        f, g = np.ravel(np.asarray(f, float)), np.ravel(np.asarray(g, float))
        if len(f) != ref or len(g) != ref:
            problems.append(
                f"pair {i}: index sets differ (clean {len(f)}, noisy {len(g)}, expected {ref})"
            )
            continue
        for name, vec in (("clean", f), ("noisy", g)):
            for j in np.flatnonzero(~grid.contains(vec)):
                problems.append(
                    f"pair {i} {name} coordinate {j}: value {vec[j]!r} outside "
                    f"({grid.m1}, {grid.m2}]"
                )
    return problems


def grid_for(values, n: int, margin: float = 0.0) -> GridSpec:
    """Smallest integer-bounded grid whose interval holds every value."""
    values = np.asarray(values, dtype=float)
    lo = math.floor(values.min() - margin)
    if lo == values.min() - margin:
        lo -= 1
    hi = math.ceil(values.max() + margin)
    if hi <= lo:
        hi = lo + 1
    return GridSpec(lo, hi, n)
