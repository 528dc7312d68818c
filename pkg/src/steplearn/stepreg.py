"""Per-coordinate quasiconvex step regularizers and the bilevel training loss.

A step regularizer assigns each coordinate a vector ``C`` of length ``B`` (one
value per grid bin). Denoising a coefficient ``b`` minimizes
``(x - b)**2 + C[bin(x)]`` over the grid; since the quadratic is monotone on
each side of ``b``, the minimum over a bin is attained at a single candidate
point (right end for bins below ``b``, ``b`` itself, ``left end + eps`` for bins
above ``b``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridSpec, TrainingSet, bin_index

# Two candidate values closer than this are treated as tied.
TIE_TOL = 1e-12


def is_quasiconvex(a, tol: float = 0.0) -> bool:
    """True iff ``a[s] <= max(a[r], a[t])`` for all ``r < s < t``.

    O(B): an interior entry violates the condition exactly when it exceeds
    both ``min(a[:s])`` and ``min(a[s+1:])``.
    """
    a = np.asarray(a, dtype=float)
    if a.size < 3:
        return True
    prefix = np.minimum.accumulate(a)[:-2]
    suffix = np.minimum.accumulate(a[::-1])[::-1][2:]
    return bool(np.all(a[1:-1] <= np.maximum(prefix, suffix) + tol))


@dataclass(frozen=True)
class StepRegularizer:
    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float)).copy()
        if c.shape[1] != self.grid.n_bins:
            raise ValueError(
                f"each coordinate needs {self.grid.n_bins} bin values, got {c.shape[1]}"
            )
        for j, row in enumerate(c):
            if not is_quasiconvex(row):
                raise ValueError(f"coefficients of coordinate {j} are not quasiconvex")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, grid: GridSpec, n_coords: int) -> "StepRegularizer":
        return cls(grid, np.zeros((n_coords, grid.n_bins)))

    @property
    def n_coords(self) -> int:
        return self.coeffs.shape[0]


def evaluate(reg: StepRegularizer, coord: int, x: float) -> float:
    return float(reg.coeffs[coord, bin_index(x, reg.grid, coord) - 1])


def _candidates(b, grid: GridSpec):
    """Vectorized candidate points, shape ``(len(b), B)``, plus data bins."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    s = np.atleast_1d(bin_index(b, grid))
    t = np.arange(1, grid.n_bins + 1)
    right = grid.m1 + t * grid.width
    left_eps = grid.m1 + (t - 1) * grid.width + grid.eps
    x = np.where(t[None, :] < s[:, None], right[None, :], left_eps[None, :])
    x = np.where(t[None, :] == s[:, None], b[:, None], x)
    return x, s


def candidate_points(g_val: float, grid: GridSpec):
    """``[(t, x_t, q_t), ...]`` for every bin ``t``; ``q_t = (x_t - g_val)**2``."""
    x, _ = _candidates(g_val, grid)
    x = x[0]
    return [(t + 1, float(x[t]), float((x[t] - g_val) ** 2)) for t in range(grid.n_bins)]


def _pick(values, s):
    """Row-wise argmin with ties to the data bin ``s`` (1-based), then lowest bin."""
    best = values.min(axis=1, keepdims=True)
    tied = values <= best + TIE_TOL
    rows = np.arange(values.shape[0])
    data_tied = tied[rows, s - 1]
    first = np.argmax(tied, axis=1)
    return np.where(data_tied, s - 1, first)


def argmin_rows(b, coeffs, grid: GridSpec, scale=1.0):
    """Minimize ``scale * (x - b_j)**2 + coeffs[j, bin(x)]`` for every row ``j``.

    Returns ``(x, value, bin)`` arrays; bins are 1-based.
    """
    x, s = _candidates(b, grid)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), s.shape)
    vals = scale[:, None] * (x - np.atleast_1d(b)[:, None]) ** 2 + np.atleast_2d(coeffs)
    idx = _pick(vals, s)
    rows = np.arange(len(s))
    return x[rows, idx], vals[rows, idx], idx + 1


def argmin_penalized(g_val: float, reg: StepRegularizer, coord: int):
    """``(x*, value)`` minimizing ``(x - g_val)**2 + psi_coord(x)`` over the grid."""
    bin_index(g_val, reg.grid, coord)
    x, v, _ = argmin_rows([g_val], reg.coeffs[coord][None, :], reg.grid)
    return float(x[0]), float(v[0])


def argmin_bin(g_val: float, reg: StepRegularizer, coord: int) -> int:
    """Bin holding the penalized minimizer (exact location of the eps-approximate x*)."""
    _, _, t = argmin_rows([g_val], reg.coeffs[coord][None, :], reg.grid)
    return int(t[0])


def denoise_with_step(g, reg: StepRegularizer) -> np.ndarray:
    """Coordinatewise penalized argmin of a whole coefficient vector."""
    g = np.asarray(g, dtype=float)
    if g.shape != (reg.n_coords,):
        raise ValueError(f"signal has {g.size} coordinates, regularizer has {reg.n_coords}")
    for j in np.flatnonzero(~reg.grid.contains(g)):
        bin_index(g[j], reg.grid, j)
    x, _, _ = argmin_rows(g, reg.coeffs, reg.grid)
    return x


def denoise_with_step_diagonal(g, k, reg: StepRegularizer) -> np.ndarray:
    """Coordinatewise minimizer of ``|k x - g|**2 + psi(x)``; requires ``k != 0``.

    ``k**2 (x - g/k)**2`` keeps the candidate-point structure, so the data
    value ``g/k`` must itself lie on the grid.
    """
    g = np.asarray(g, dtype=float)
    k = np.broadcast_to(np.asarray(k, dtype=float), g.shape)
    if np.any(k == 0):
        bad = np.flatnonzero(k == 0).tolist()
        raise ValueError(f"minimizer not unique at coordinates {bad} (k=0 with a step penalty)")
    b = g / k
    for j in np.flatnonzero(~reg.grid.contains(b)):
        bin_index(b[j], reg.grid, j)
    x, _, _ = argmin_rows(b, reg.coeffs, reg.grid, scale=k ** 2)
    return x


def denoise_all(ts_noisy, reg: StepRegularizer) -> np.ndarray:
    """Denoise every row of an ``(m, n_coords)`` array."""
    noisy = np.atleast_2d(ts_noisy)
    return np.array([denoise_with_step(g, reg) for g in noisy])


def objective_I(reg: StepRegularizer, ts: TrainingSet) -> float:
    """Training loss ``sum_i ||denoise(g_i) - f_i||**2``."""
    return float(np.sum((denoise_all(ts.noisy, reg) - ts.clean) ** 2))


def coordinate_loss(row, clean, noisy, grid: GridSpec) -> float:
    """Training loss restricted to one coordinate with bin values ``row``."""
    m = len(noisy)
    x, _, _ = argmin_rows(noisy, np.broadcast_to(row, (m, grid.n_bins)), grid)
    return float(np.sum((x - clean) ** 2))
