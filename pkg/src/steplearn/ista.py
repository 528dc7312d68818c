"""Thresholded Landweber iteration for ``||Kf - g||**2 + sum_gamma w_gamma |f_gamma|**p_gamma``.

One step is ``T(f) = S(f + K^T (g - K f))`` where ``S`` is the coordinatewise
shrinkage of :mod:`steplearn.shrink`. Each step exactly minimizes the
surrogate ``||Kf - g||**2 + pen(f) + ||f - a||**2 - ||K(f - a)||**2`` at the
previous iterate ``a``, which is why ``||K|| < 1`` is required.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .shrink import MultiPenalty, shrink_vec

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-10


class NormGateError(ValueError):
    """The operator norm is not below one."""


class MonotonicityError(RuntimeError):
    """The objective increased during iteration."""


@dataclass(frozen=True)
class LinearOperator:
    apply: Callable
    adjoint: Callable
    shape: tuple
    diag: np.ndarray | None = None

    @classmethod
    def from_matrix(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(lambda u: A @ u, lambda v: A.T @ v, A.shape)

    @classmethod
    def diagonal(cls, k):
        k = np.asarray(k, dtype=float).copy()
        return cls(lambda u: k * u, lambda v: k * v, (len(k), len(k)), k)

    def scaled(self, s: float) -> "LinearOperator":
        d = None if self.diag is None else self.diag / s
        return LinearOperator(lambda u: self.apply(u) / s, lambda v: self.adjoint(v) / s,
                              self.shape, d)


def norm_estimate(K: LinearOperator, iters: int = 100, rtol: float = 1e-6, seed: int = 0) -> float:
    """Power iteration on ``K^T K``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(K.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = K.adjoint(K.apply(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return float(est)


def check_norm(K: LinearOperator) -> float:
    nrm = norm_estimate(K)
    if nrm >= 1:
        raise NormGateError(f"operator norm estimate {nrm:.6g} >= 1; rescale first")
    return nrm


def rescale(K: LinearOperator, g, factor: float = 1.05):
    """``(K/s, g/s, s)`` with ``s = factor * ||K||``; the caller owns the change of problem."""
    s = factor * norm_estimate(K)
    return K.scaled(s), np.asarray(g, dtype=float) / s, s


def _shrink(v, pen: MultiPenalty):
    return shrink_vec(v, pen.coefficients().T, pen.exponents)


def objective(f, g, K: LinearOperator, pen: MultiPenalty) -> float:
    r = K.apply(f) - g
    return float(r @ r + pen.value(f))


def surrogate_value(f, a, g, K: LinearOperator, pen: MultiPenalty) -> float:
    f = np.asarray(f, dtype=float)
    d = f - np.asarray(a, dtype=float)
    Kd = K.apply(d)
    return objective(f, g, K, pen) + float(d @ d - Kd @ Kd)


def apply_T(f, g, K: LinearOperator, pen: MultiPenalty, checked: bool = False):
    if not checked:
        check_norm(K)
    f = np.asarray(f, dtype=float)
    return _shrink(f + K.adjoint(g - K.apply(f)), pen)


def iterate_bound(phi0: float, pen: MultiPenalty) -> float:
    """A-priori bound on ``||f^n||`` from ``Phi(f^0)`` and the smallest penalty weight per term."""
    c = pen.coefficients()
    total = 0.0
    for i, p in enumerate(pen.exponents):
        active = c[i] > 0
        if not active.any():
            continue
        cmin = c[i][active].min()
        total += (phi0 / cmin) ** (2 / p)
    if any(not (c[:, j] > 0).any() for j in range(c.shape[1])):
        return np.inf
    return float(np.sqrt(total))


@dataclass
class IterationState:
    iteration: int
    step_norm: float
    objective: float
    surrogate: float


@dataclass
class IstaResult:
    f: np.ndarray
    history: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.history)


def iterate(f0, g, K: LinearOperator, pen: MultiPenalty, max_iters: int = 100_000,
            step_tol: float = 1e-10, monitor: bool = True) -> IstaResult:
    """Run ``T`` until the step norm drops below ``step_tol``.

    With ``monitor`` on, the objective is checked to be non-increasing and
    the iterate norm bounded at every step.
    """
    check_norm(K)
    g = np.asarray(g, dtype=float)
    f = np.zeros(K.shape[1]) if f0 is None else np.asarray(f0, dtype=float).copy()
    phi = objective(f, g, K, pen)
    bound = iterate_bound(phi, pen) * (1 + 1e-9) + 1e-12
    hist = []
    for n in range(1, max_iters + 1):
        nxt = apply_T(f, g, K, pen, checked=True)
        step = float(np.linalg.norm(nxt - f))
        if monitor:
            sur = surrogate_value(nxt, f, g, K, pen)
            phi_new = objective(nxt, g, K, pen)
            if phi_new > phi + MONOTONE_SLACK:
                raise MonotonicityError(
                    f"objective rose from {phi!r} to {phi_new!r} at step {n}; check the operator norm")
            if np.linalg.norm(nxt) > bound:
                raise MonotonicityError(f"iterate norm exceeded the a-priori bound {bound:.6g}")
            phi = phi_new
        else:
            sur = phi = np.nan
        hist.append(IterationState(n, step, phi, sur))
        f = nxt
        if step <= step_tol:
            return IstaResult(f, hist, True)
    log.warning("thresholded Landweber stopped at max_iters=%d (last step %.3g)", max_iters, step)
    return IstaResult(f, hist, False)


def diagonal_minimizer(g, k, pen: MultiPenalty):
    """Closed-form minimizer for diagonal ``K``; null coordinates go to the penalty minimizer 0."""
    from .shrink import denoise_diagonal

    return denoise_diagonal(g, k, pen)


def alpha_identity(eps: float) -> float:
    return eps


def check_alpha_rule(rule, probes=(1e-2, 1e-4, 1e-6)) -> bool:
    """Numerical admissibility: ``alpha -> 0`` and ``eps**2 / alpha -> 0`` along ``probes``."""
    a = np.array([rule(e) for e in probes])
    r = np.array([e * e / rule(e) for e in probes])
    return bool(np.all(a > 0) and np.all(np.diff(a) < 0) and np.all(np.diff(r) < 0) and a[-1] < 1e-3)


@dataclass
class PathPoint:
    eps: float
    alpha: float
    error: float
    iterations: int


def regularization_path(f_true, k, eps_list, weights, exponents, alpha_rule=alpha_identity,
                        seed: int = 0, step_tol: float = 1e-12, max_iters: int = 100_000,
                        partition=None):
    """Reconstruction error of the penalized solution as noise and penalty shrink together.

    ``K`` is diagonal with entries ``k``. The reference solution is the
    minimal-penalty solution of ``K f = K f_true``: ``f_true`` on coordinates
    with ``k != 0`` and ``0`` on the null coordinates.
    """
    if not check_alpha_rule(alpha_rule):
        raise ValueError("alpha rule must satisfy alpha -> 0 and eps^2/alpha -> 0")
    f_true = np.asarray(f_true, dtype=float)
    k = np.asarray(k, dtype=float)
    if not (np.any(np.asarray(exponents) > 1) or np.all(k != 0)):
        raise ValueError("need a p > 1 term or an injective operator for a unique limit")
    K = LinearOperator.diagonal(k)
    f_dag = np.where(k != 0, f_true, 0.0)
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(len(k))
    direction /= np.linalg.norm(direction)
    out = []
    for eps in eps_list:
        a = alpha_rule(eps)
        g = K.apply(f_true) + eps * direction
        lam = tuple(a * np.ones(len(np.ravel(exponents))))
        pen = MultiPenalty(lam, weights, tuple(np.ravel(exponents)), partition)
        res = iterate(None, g, K, pen, max_iters=max_iters, step_tol=step_tol)
        out.append(PathPoint(eps, a, float(np.linalg.norm(res.f - f_dag)), res.n_iter))
    return out
