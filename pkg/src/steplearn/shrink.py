"""Scalar shrinkage maps and closed-form coordinatewise denoisers.

Every map here minimizes a one-dimensional strictly convex function of the form

    x**2 - 2*b*x + sum_i c_i * |x|**p_i,      c_i > 0, 1 <= p_i <= 2,

so the minimizer is characterized by first-order conditions: it is zero when
``|b| <= (sum of the p=1 coefficients) / 2`` and otherwise the unique root, on
the sign branch of ``b``, of

    x + sign(x) * (sum_{p_i=1} c_i + sum_{p_i>1} c_i p_i |x|**(p_i-1)) / 2 = b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROOT_TOL = 1e-12
MAX_ITER = 200


@dataclass(frozen=True)
class PenaltyTerm:
    c: float
    p: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"penalty coefficient must be positive, got {self.c}")
        if not 1 <= self.p <= 2:
            raise ValueError(f"exponent must lie in [1, 2], got {self.p}")


@dataclass(frozen=True)
class MultiPenalty:
    """Sum of weighted l_p penalties ``sum_i lambda_i sum_gamma w_{i,gamma} |f_gamma|**p_i``.

    In summed mode every term sees every coordinate. With ``partition`` set,
    coordinate ``gamma`` is only charged by term ``partition[gamma]``.
    """

    lambdas: tuple
    weights: np.ndarray
    exponents: tuple
    partition: np.ndarray | None = None

    def __post_init__(self):
        lam = tuple(float(v) for v in np.ravel(self.lambdas))
        exps = tuple(float(v) for v in np.ravel(self.exponents))
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if not (len(lam) == len(exps) == w.shape[0]):
            raise ValueError("lambdas, exponents and weight rows must have equal length")
        if any(v < 0 for v in lam):
            raise ValueError("lambdas must be non-negative")
        if any(not 1 <= p <= 2 for p in exps):
            raise ValueError("exponents must lie in [1, 2]")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "weights", w)
        if self.partition is not None:
            part = np.asarray(self.partition, dtype=int)
            if part.shape != (w.shape[1],) or part.min() < 0 or part.max() >= len(lam):
                raise ValueError("partition must label every coordinate with a term index")
            part.setflags(write=False)
            object.__setattr__(self, "partition", part)

    @classmethod
    def uniform(cls, lambdas, exponents, n_coords, weight=1.0, partition=None):
        lambdas = np.ravel(lambdas)
        return cls(tuple(lambdas), np.full((len(lambdas), n_coords), float(weight)),
                   tuple(np.ravel(exponents)), partition)

    @property
    def n_terms(self) -> int:
        return len(self.lambdas)

    @property
    def n_coords(self) -> int:
        return self.weights.shape[1]

    @property
    def min_weight(self) -> float:
        return float(self.weights.min())

    def coefficients(self) -> np.ndarray:
        """``(n_terms, n_coords)`` array of ``lambda_i * w_{i,gamma}``, zero where inactive."""
        c = np.asarray(self.lambdas)[:, None] * self.weights
        if self.partition is not None:
            mask = self.partition[None, :] == np.arange(self.n_terms)[:, None]
            c = np.where(mask, c, 0.0)
        return c

    def with_lambdas(self, lambdas) -> "MultiPenalty":
        return MultiPenalty(tuple(np.ravel(lambdas)), self.weights, self.exponents,
                            self.partition)

    def value(self, f) -> float:
        f = np.abs(np.asarray(f, dtype=float))
        c = self.coefficients()
        p = np.asarray(self.exponents)[:, None]
        return float(np.sum(c * f[None, :] ** p))


def f_cp(t, c, p):
    """``t + (c p / 2) sign(t) |t|**(p-1)``; the map inverted by :func:`shrink_single` for p > 1."""
    if np.any(np.asarray(p) <= 1):
        raise ValueError("f_cp needs p > 1; use shrink_single for p = 1")
    t = np.asarray(t, dtype=float)
    out = t + 0.5 * c * p * np.sign(t) * np.abs(t) ** (p - 1)
    return float(out) if out.ndim == 0 else out


def _solve_magnitude(target, c, p):
    """Solve ``u + sum_j c_j p_j u**(p_j-1) / 2 = target`` for ``u`` in [0, target].

    Vectorized over rows: ``target`` is ``(N,)``, ``c`` is ``(N, T)`` (p=1 terms
    must already be folded into ``target``), ``p`` broadcasts against ``c``.
    Bracketed Newton; bisection whenever Newton leaves the bracket.
    """
    target = np.asarray(target, dtype=float)
    lo = np.zeros_like(target)
    hi = target.copy()
    p = np.broadcast_to(np.asarray(p, dtype=float), c.shape)

    def g(u):
        return u + 0.5 * np.sum(c * p * u[:, None] ** (p - 1), axis=1) - target

    def dg(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(c > 0, c * p * (p - 1) * u[:, None] ** (p - 2), 0.0)
        return 1 + 0.5 * np.sum(terms, axis=1)

    # Linear start: exact when every term has p = 2.
    u = target / (1 + 0.5 * np.sum(c * p * (p == 2), axis=1))
    active = target > 0
    for _ in range(MAX_ITER):
        if not active.any():
            break
        gu = g(u)
        lo = np.where(active & (gu <= 0), u, lo)
        hi = np.where(active & (gu >= 0), u, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = gu / dg(u)
        newton = u - step
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        nxt = np.where(ok, newton, 0.5 * (lo + hi))
        done = (np.abs(nxt - u) <= ROOT_TOL) | (hi - lo <= ROOT_TOL) | (gu == 0)
        u = np.where(active, nxt, u)
        active &= ~done
    return u


def shrink_vec(b, coeffs, exponents):
    """Vectorized minimizer of ``x**2 - 2 b x + sum_i c_i |x|**p_i`` for each row.

    ``b``: ``(N,)``; ``coeffs``: ``(N, T)`` non-negative (zero disables a term);
    ``exponents``: ``(T,)`` or ``(N, T)``.
    """
    b = np.asarray(b, dtype=float)
    scalar = b.ndim == 0
    b = np.atleast_1d(b)
    c = np.asarray(coeffs, dtype=float).reshape(len(b), -1)
    p = np.broadcast_to(np.asarray(exponents, dtype=float), c.shape)
    is_l1 = p == 1
    thresh = 0.5 * np.sum(np.where(is_l1, c, 0.0), axis=1)
    mag = np.abs(b) - thresh
    out = np.zeros_like(b)
    live = mag > 0
    if live.any():
        c_smooth = np.where(is_l1, 0.0, c)[live]
        p_smooth = np.where(is_l1, 2.0, p)[live]
        if np.any(c_smooth > 0):
            u = _solve_magnitude(mag[live], c_smooth, p_smooth)
        else:
            u = mag[live]
        out[live] = np.sign(b[live]) * u
    return float(out[0]) if scalar else out


def shrink_single(b: float, c: float, p: float) -> float:
    """Minimizer of ``x**2 - 2 b x + c |x|**p``."""
    PenaltyTerm(c, p)
    return shrink_vec(b, [[c]], [p])


def shrink_multi(b: float, terms) -> float:
    """Minimizer of ``x**2 - 2 b x + sum_i c_i |x|**p_i`` for ``terms = [(c_i, p_i), ...]``."""
    terms = [t if isinstance(t, PenaltyTerm) else PenaltyTerm(*t) for t in terms]
    if not terms:
        raise ValueError("shrink_multi needs at least one penalty term")
    return shrink_vec(b, [[t.c for t in terms]], [t.p for t in terms])


def denoise_identity(g, pen: MultiPenalty) -> np.ndarray:
    """Exact minimizer of ``||f - g||**2 + penalty(f)``, one coordinate at a time."""
    g = np.asarray(g, dtype=float)
    if g.shape != (pen.n_coords,):
        raise ValueError(f"signal has {g.size} coordinates, penalty expects {pen.n_coords}")
    return shrink_vec(g, pen.coefficients().T, pen.exponents)


def identity_objective(f, g, pen: MultiPenalty) -> float:
    f, g = np.asarray(f, float), np.asarray(g, float)
    return float(np.sum((f - g) ** 2) + pen.value(f))


def denoise_diagonal(g, k, reg) -> np.ndarray:
    """Per-coordinate minimizer of ``|k x - g|**2 + reg_gamma(x)`` for diagonal ``k``.

    ``reg`` is a :class:`MultiPenalty` or a step regularizer. For a penalty the
    square is completed: ``k**2 (x - g/k)**2 + pen`` scales to a standard
    shrinkage with coefficients divided by ``k**2``.
    """
    g = np.asarray(g, dtype=float)
    k = np.broadcast_to(np.asarray(k, dtype=float), g.shape)
    if isinstance(reg, MultiPenalty):
        c = reg.coefficients().T
        zero_k = k == 0
        if np.any(zero_k & (c.sum(axis=1) == 0)):
            bad = np.flatnonzero(zero_k & (c.sum(axis=1) == 0))
            raise ValueError(f"minimizer not unique at coordinates {bad.tolist()} (k=0, no penalty)")
        out = np.zeros_like(g)
        nz = ~zero_k
        out[nz] = shrink_vec(g[nz] / k[nz], c[nz] / k[nz, None] ** 2, reg.exponents)
        # k = 0 with a penalty: minimizer of the penalty alone, which is 0.
        return out
    from .stepreg import denoise_with_step_diagonal

    return denoise_with_step_diagonal(g, k, reg)
