"""Learning the weights lambda of a weighted l_p multi-penalty from training pairs.

For the identity forward operator the denoiser is coordinatewise: the
penalized minimizer ``x`` of ``(x - y)**2 + sum_j lambda_j w_j |x|**p_j``
solves ``F(x) = y`` with

    F(x) = x + sign(x) * sum_j p_j lambda_j w_j |x|**(p_j - 1) / 2,

so the training loss is ``sum (F^{-1}(g) - f)**2`` and its gradient in
lambda follows from implicit differentiation of ``F(x) = y``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import TrainingSet
from .shrink import MultiPenalty, shrink_vec

log = logging.getLogger(__name__)


def _coeff_stack(lam, weights, exponents, partition=None):
    lam = np.asarray(lam, dtype=float).ravel()
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    c = lam[:, None] * w
    if partition is not None:
        c = np.where(np.asarray(partition)[None, :] == np.arange(len(lam))[:, None], c, 0.0)
    return c, np.asarray(exponents, dtype=float).ravel()


def f_lambda(x, lam, weights, exponents):
    """Forward map ``F``; ``weights`` is one value per term (a single coordinate)."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    p = np.asarray(exponents, dtype=float).ravel()
    ax = np.abs(x)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(ax > 0, p * lam * w * ax ** (p - 1), 0.0)
    out = x + np.sign(x) * terms.sum(axis=-1) / 2
    return float(out) if out.ndim == 0 else out


def invert_f_lambda(y, lam, weights, exponents):
    """``x`` with ``F(x) = y``; zero inside the dead zone created by p = 1 terms."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(lam, dtype=float).ravel() * np.asarray(weights, dtype=float).ravel()
    flat = np.atleast_1d(y).ravel()
    out = shrink_vec(flat, np.broadcast_to(c, (flat.size, c.size)), exponents)
    return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)


def denoise_lambda(g, lam, weights, exponents, partition=None):
    """Row-wise ``F^{-1}`` of an ``(m, N)`` array; ``weights`` is ``(n_terms, N)``."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    c, p = _coeff_stack(lam, weights, exponents, partition)
    m, N = g.shape
    coeffs = np.broadcast_to(c.T[None], (m, N, len(p))).reshape(m * N, len(p))
    return shrink_vec(g.ravel(), coeffs, p).reshape(m, N)


def objective_I_lambda(lam, ts: TrainingSet, weights, exponents, partition=None) -> float:
    """``sum_i ||F^{-1}(g_i) - f_i||**2``."""
    x = denoise_lambda(ts.noisy, lam, weights, exponents, partition)
    return float(np.sum((x - ts.clean) ** 2))


def gradient_I_lambda(lam, ts: TrainingSet, weights, exponents, partition=None):
    """``(objective, gradient)`` by implicit differentiation of ``F(x) = g``.

    ``dx/dlambda_j = -(dF/dlambda_j) / (dF/dx)``; zero where ``x = 0`` (the
    dead zone, where the minimizer is locally constant in lambda).
    """
    lam = np.asarray(lam, dtype=float).ravel()
    c, p = _coeff_stack(lam, weights, exponents, partition)
    w_eff, _ = _coeff_stack(np.ones_like(lam), weights, exponents, partition)
    x = denoise_lambda(ts.noisy, lam, weights, exponents, partition)
    resid = x - ts.clean
    ax = np.abs(x)[..., None]                       # (m, N, 1)
    nz = ax > 0
    pp = p[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dF_dlam = np.where(nz, np.sign(x)[..., None] * pp * w_eff.T[None] * ax ** (pp - 1) / 2, 0.0)
        curv = np.where(nz & (pp > 1), pp * (pp - 1) * c.T[None] * ax ** (pp - 2) / 2, 0.0)
    dF_dx = 1 + curv.sum(axis=-1, keepdims=True)
    dx = -dF_dlam / dF_dx
    grad = np.sum(2 * resid[..., None] * dx, axis=(0, 1))
    return float(np.sum(resid ** 2)), grad


@dataclass
class LambdaConfig:
    max_iters: int = 2000
    grad_tol: float = 1e-12
    armijo: float = 1e-4
    min_step: float = 1e-20
    init_step: float = 1.0


@dataclass
class LambdaResult:
    lambdas: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    converged: bool = False
    note: str = ""


def learn_lambdas(ts: TrainingSet, weights, exponents, cfg: LambdaConfig | None = None,
                  partition=None, lam0=None) -> LambdaResult:
    """Projected gradient descent on ``lambda >= 0`` with Armijo backtracking.

    Starts at ``lambda = 0`` unless ``lam0`` is given, tries step 1 first at
    every iteration (grown when the previous step was accepted in full), and
    returns the best iterate seen.
    """
    cfg = cfg or LambdaConfig()
    n = len(np.ravel(exponents))
    lam = np.zeros(n) if lam0 is None else np.maximum(np.asarray(lam0, dtype=float), 0)
    obj, grad = gradient_I_lambda(lam, ts, weights, exponents, partition)
    history = [obj]
    best, best_obj = lam.copy(), obj
    step = cfg.init_step
    converged = False
    note = ""
    for _ in range(cfg.max_iters):
        # projected gradient as stationarity measure
        pg = lam - np.maximum(lam - grad, 0)
        if np.linalg.norm(pg) <= cfg.grad_tol:
            converged = True
            break
        t = step
        while True:
            cand = np.maximum(lam - t * grad, 0)
            c_obj = objective_I_lambda(cand, ts, weights, exponents, partition)
            if c_obj <= obj - cfg.armijo * grad @ (lam - cand):
                break
            t *= 0.5
            if t < cfg.min_step:
                note = "line search failed; returning best iterate"
                log.warning(note)
                break
        if note:
            break
        if np.array_equal(cand, lam):
            converged = True
            break
        step = t * 2 if t >= step else t
        lam = cand
        obj, grad = gradient_I_lambda(lam, ts, weights, exponents, partition)
        history.append(obj)
        if obj < best_obj:
            best, best_obj = lam.copy(), obj
    return LambdaResult(best, best_obj, history, converged, note)


def penalty_from_lambdas(lam, weights, exponents, partition=None) -> MultiPenalty:
    return MultiPenalty(tuple(np.ravel(lam)), weights, tuple(np.ravel(exponents)), partition)


def interpolation_residual(lam, ts: TrainingSet, weights, exponents) -> float:
    """Diagnostic: RMS of ``F(f) - g``, zero iff the training pairs are reproduced exactly."""
    lam = np.asarray(lam, dtype=float).ravel()
    w = np.atleast_2d(weights)
    res = [f_lambda(ts.clean[i, j], lam, w[:, j], exponents) - ts.noisy[i, j]
           for i in range(ts.m) for j in range(ts.n_coords)]
    return float(np.sqrt(np.mean(np.square(res))))
