"""Learning per-coordinate quasiconvex step regularizers from training pairs.

Two routes are provided:

* :func:`learn_discrete` enumerates which bin each training pair should be
  sent to (best-first in the resulting training loss) and accepts the first
  assignment that some quasiconvex step vector actually realizes.
* :func:`learn_direct` minimizes the nonsmooth surrogate ``K_n`` (see
  :func:`build_kn`) by projected subgradient descent.

Notation per coordinate: ``f`` clean values, ``g`` noisy values, ``B`` bins,
``X[i, t]`` the candidate point of pair ``i`` in bin ``t`` and
``Q[i, t] = (X[i, t] - g_i)**2``.

Realizability of an assignment ``r`` reduces, once the position ``p`` of the
valley of the step vector is fixed, to a system of difference constraints
``C[a] - C[b] <= w``. Such systems are solved exactly by shortest paths, so
every pivot is checked with a batched Bellman-Ford relaxation.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression, minimize

from .core import GridSpec, TrainingSet, bin_index
from .stepreg import StepRegularizer, _candidates, _pick, argmin_rows, coordinate_loss, is_quasiconvex

log = logging.getLogger(__name__)

# Changes in shortest-path labels below this are treated as rounding noise.
_RELAX_TOL = 1e-12


@dataclass
class LearnConfig:
    """Solver settings shared by both learning routes."""

    prune_k: int | None = 8          # bins kept per pair in the search; None = exhaustive
    max_tries: int = 200_000         # assignments tested before falling back
    margin: float = 1e-9             # strict-win margin for non tie-preferred bins
    delta: float = 0.0               # optional strictness of the valley shape
    refine: bool = False             # minimize K_n over the chosen assignment's polytope
    restarts: int = 4                # learn_direct: random restarts besides psi = 0
    iters: int = 400                 # learn_direct: subgradient steps per restart
    step0: float = 0.5               # learn_direct: initial step size
    seed: int = 0


@dataclass
class CoordReport:
    coord: int
    loss: float
    tries: int = 0
    kn: float | None = None
    note: str = ""


@dataclass
class LearnResult:
    reg: StepRegularizer
    reports: list = field(default_factory=list)

    @property
    def loss(self) -> float:
        return float(sum(r.loss for r in self.reports))


# -- constraint system --------------------------------------------------------


def quasiconvex_constraints(B: int):
    """All triples ``(r, s, t)``, 1-based with ``r < s < t``."""
    return list(itertools.combinations(range(1, B + 1), 3))


def constraint_values(x) -> np.ndarray:
    """Smooth-form values ``|x_r - x_t| + x_r + x_t - 2 x_s`` for every triple.

    All entries are non-negative iff ``x`` is quasiconvex.
    """
    x = np.asarray(x, dtype=float)
    tri = np.array(quasiconvex_constraints(len(x)), dtype=int).reshape(-1, 3) - 1
    r, s, t = tri.T
    return np.abs(x[r] - x[t]) + x[r] + x[t] - 2 * x[s]


# -- per-coordinate problem ---------------------------------------------------


class _Slice:
    """Candidate structure of one coordinate, with pairs grouped by noisy value.

    Pairs sharing a noisy value necessarily share a denoised value, so the
    search runs over groups rather than pairs.
    """

    def __init__(self, clean, noisy, grid: GridSpec):
        clean = np.asarray(clean, dtype=float)
        noisy = np.asarray(noisy, dtype=float)
        bin_index(clean, grid)
        self.grid = grid
        self.clean, self.noisy = clean, noisy
        self.g, inv = np.unique(noisy, return_inverse=True)
        self.inv = inv.ravel()
        self.X, s = _candidates(self.g, grid)
        self.s = s - 1
        self.Q = (self.X - self.g[:, None]) ** 2
        diff = (clean[:, None] - self.X[self.inv]) ** 2
        self.L = np.zeros_like(self.X)
        np.add.at(self.L, self.inv, diff)
        self.k = len(self.g)
        self.B = grid.n_bins

    def pair_bins(self, group_bins):
        return np.asarray(group_bins)[self.inv]

    def loss(self, group_bins) -> float:
        return float(self.L[np.arange(self.k), group_bins].sum())


def _relax_chain(dist, piv, delta):
    """Enforce non-increasing on ``[0, p)`` and non-decreasing on ``[p, B)`` per row."""
    B = dist.shape[1]
    j = np.arange(B, dtype=float)
    pre = np.minimum.accumulate(dist + delta * j, axis=1) - delta * j
    suf = np.minimum.accumulate((dist - delta * j)[:, ::-1], axis=1)[:, ::-1] + delta * j
    return np.where(j[None, :] < piv[:, None], pre, suf)


def _edge_weights(sl: _Slice, r, margin):
    """Map target bin -> weight vector ``w`` meaning ``C[target] - C[t] <= w[t]``."""
    targets = {}
    t = np.arange(sl.B)
    for j in range(sl.k):
        rj = int(r[j])
        w = sl.Q[j] - sl.Q[j, rj]
        # r wins ties against t when r is the data bin, or neither is and r < t.
        preferred = (rj == sl.s[j]) | ((t != sl.s[j]) & (rj < t))
        w = np.where(preferred, w, w - margin)
        w[rj] = np.inf
        targets[rj] = np.minimum(targets[rj], w) if rj in targets else w
    return targets


def _solve_pivots(B, targets, delta, pivots=None):
    """Greatest solution ``<= 0`` for every pivot; rows with a negative cycle are NaN."""
    piv = np.arange(B) if pivots is None else np.asarray(pivots)
    dist = np.zeros((len(piv), B))
    dist = _relax_chain(dist, piv, delta)
    changed = np.ones(len(piv), dtype=bool)
    for _ in range(len(targets) + 2):
        before = dist.copy()
        for r, w in targets.items():
            dist[:, r] = np.minimum(dist[:, r], np.min(dist + w[None, :], axis=1))
        dist = _relax_chain(dist, piv, delta)
        changed = np.any(dist < before - _RELAX_TOL, axis=1)
        if not changed.any():
            break
    dist[changed] = np.nan
    return dist, piv


def _realized(sl: _Slice, C):
    return _pick(sl.Q + C[None, :], sl.s + 1)


def _feasible_point(sl: _Slice, r, margin, delta):
    targets = _edge_weights(sl, r, margin)
    dist, piv = _solve_pivots(sl.B, targets, delta)
    ok = ~np.isnan(dist[:, 0])
    if not ok.any():
        return None, None
    cand = dist[ok] - dist[ok].mean(axis=1, keepdims=True)
    order = np.argsort(np.sum(cand ** 2, axis=1), kind="stable")
    for o in order:
        C = cand[o]
        if np.array_equal(_realized(sl, C), r) and is_quasiconvex(C):
            return C, int(piv[ok][o])
    return None, None


def feasibility_solve(assignment, clean, noisy, grid: GridSpec, margin=1e-9, delta=0.0):
    """Step vector realizing ``assignment`` (1-based bin per pair), or ``None``.

    The returned vector is quasiconvex and, fed to the penalized argmin, sends
    every pair to its assigned bin (ties resolved as in :mod:`steplearn.stepreg`).
    """
    sl = _Slice(clean, noisy, grid)
    r = np.asarray(assignment, dtype=int).ravel() - 1
    if r.shape != (len(sl.inv),) or r.min() < 0 or r.max() >= sl.B:
        raise ValueError("assignment needs one bin in 1..B per pair")
    group_r = np.full(sl.k, -1)
    for i, j in enumerate(sl.inv):
        if group_r[j] not in (-1, r[i]):
            return None  # equal noisy values cannot be split across bins
        group_r[j] = r[i]
    C, _ = _feasible_point(sl, group_r, margin, delta)
    return C


# -- discrete route -----------------------------------------------------------


def _best_first(costs, lists):
    """Yield ``(cost, choice)`` over products of per-group sorted lists, cheapest first."""
    k = len(lists)
    start = (0,) * k
    heap = [(sum(costs[j][0] for j in range(k)), start, 0)]
    while heap:
        cost, idx, last = heapq.heappop(heap)
        yield cost, tuple(lists[j][idx[j]] for j in range(k))
        for j in range(last, k):
            if idx[j] + 1 < len(lists[j]):
                nxt = idx[:j] + (idx[j] + 1,) + idx[j + 1:]
                c = cost - costs[j][idx[j]] + costs[j][idx[j] + 1]
                heapq.heappush(heap, (c, nxt, j))


def _search(sl: _Slice, cfg: LearnConfig):
    lists, costs = [], []
    for j in range(sl.k):
        order = np.lexsort((np.arange(sl.B), sl.L[j]))
        if cfg.prune_k is not None:
            keep = list(order[: min(cfg.prune_k, sl.B)])
            if sl.s[j] not in keep:
                keep.append(sl.s[j])
            order = np.array(sorted(keep, key=lambda t: (sl.L[j, t], t)))
        lists.append([int(t) for t in order])
        costs.append([float(sl.L[j, t]) for t in order])
    tries = 0
    for cost, choice in _best_first(costs, lists):
        tries += 1
        r = np.array(choice)
        if np.array_equal(r, sl.s):
            return r, np.zeros(sl.B), tries
        C, _ = _feasible_point(sl, r, cfg.margin, cfg.delta)
        if C is not None:
            return r, C, tries
        if tries >= cfg.max_tries:
            warnings.warn(f"candidate search stopped after {tries} tries; using data bins")
            break
    return sl.s.copy(), np.zeros(sl.B), tries


def candidate_search(clean, noisy, grid: GridSpec, cfg: LearnConfig | None = None):
    """Cheapest realizable assignment for one coordinate.

    Returns ``(bins, loss)`` with 1-based bins per pair and the training loss
    ``sum_i (f_i - x_{r_i})**2`` it produces.
    """
    cfg = cfg or LearnConfig()
    sl = _Slice(clean, noisy, grid)
    r, _, _ = _search(sl, cfg)
    return sl.pair_bins(r) + 1, sl.loss(r)


def _refine(sl: _Slice, r, C0, cfg: LearnConfig):
    """Minimize ``K_n`` with the assignment held fixed (a convex QP), warm-started at ``C0``."""
    tb = np.asarray(bin_index(sl.clean, sl.grid)) - 1
    d = (sl.clean - sl.noisy) ** 2
    ri = r[sl.inv]
    qi = sl.Q[sl.inv, ri]
    targets = _edge_weights(sl, r, cfg.margin)
    # Recover the pivot so the polytope is a single convex piece.
    dist, piv = _solve_pivots(sl.B, targets, cfg.delta)
    ok = np.flatnonzero(~np.isnan(dist[:, 0]))
    if not len(ok):
        return C0
    p = int(piv[ok[0]])
    rows = []
    for a, w in targets.items():
        for b in np.flatnonzero(np.isfinite(w)):
            rows.append((a, b, w[b]))   # C[a] - C[b] <= w
    for j in range(sl.B - 1):
        if j + 1 < p:
            rows.append((j + 1, j, -cfg.delta))
        elif j >= p:
            rows.append((j, j + 1, -cfg.delta))
    A = np.zeros((len(rows), sl.B))
    ub = np.zeros(len(rows))
    for n, (a, b, w) in enumerate(rows):
        A[n, a] += 1
        A[n, b] -= 1
        ub[n] = w
    P = np.zeros((len(ri), sl.B))
    P[np.arange(len(ri)), ri] += 1
    P[np.arange(len(ri)), tb] -= 1
    off = qi - d

    def fun(x):
        e = P @ x + off
        return float(e @ e + 1e-12 * x @ x)

    def jac(x):
        return 2 * P.T @ (P @ x + off) + 2e-12 * x

    x0 = dist[ok[0]]
    res = minimize(fun, x0, jac=jac, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda x: ub - A @ x,
                                 "jac": lambda x: -A}],
                   options={"maxiter": 500, "ftol": 1e-14})
    C = res.x - res.x.mean()
    if np.array_equal(_realized(sl, C), r) and is_quasiconvex(C):
        return C
    return C0


def learn_coordinate_discrete(clean, noisy, grid: GridSpec, cfg: LearnConfig | None = None):
    """``(coeffs, loss, tries)`` for one coordinate."""
    cfg = cfg or LearnConfig()
    sl = _Slice(clean, noisy, grid)
    r, C, tries = _search(sl, cfg)
    if cfg.refine and np.any(C != 0):
        C = _refine(sl, r, C, cfg)
    return C, sl.loss(r), tries


def learn_discrete(ts: TrainingSet, grid: GridSpec, cfg: LearnConfig | None = None,
                   refine: bool | None = None, return_result: bool = False):
    """Step regularizer from the discrete candidate search, one coordinate at a time."""
    cfg = cfg or LearnConfig()
    if refine is not None:
        cfg = LearnConfig(**{**cfg.__dict__, "refine": refine})
    coeffs, reports = [], []
    for j in range(ts.n_coords):
        f, g = ts.coord_slice(j)
        C, loss, tries = learn_coordinate_discrete(f, g, grid, cfg)
        coeffs.append(C)
        reports.append(CoordReport(j, loss, tries))
    reg = StepRegularizer(grid, np.array(coeffs))
    return LearnResult(reg, reports) if return_result else reg


# -- direct route -------------------------------------------------------------


def build_kn(clean, noisy, grid: GridSpec):
    """Evaluator ``x -> K_n(x)`` for one coordinate.

    ``K_n(x) = sum_i | min_t (q_i(t) + x_t) - (f_i - g_i)**2 - x_{bin(f_i)} |**2``.
    The evaluator also exposes ``.subgradient(x)``.
    """
    clean = np.asarray(clean, dtype=float)
    noisy = np.asarray(noisy, dtype=float)
    X, s = _candidates(noisy, grid)
    Q = (X - noisy[:, None]) ** 2
    tb = np.asarray(bin_index(clean, grid)) - 1
    d = (clean - noisy) ** 2
    rows = np.arange(len(noisy))

    def residual(x):
        vals = Q + x[None, :]
        t = _pick(vals, s)
        return vals[rows, t] - d - x[tb], t

    def kn(x):
        e, _ = residual(np.asarray(x, dtype=float))
        return float(e @ e)

    def subgradient(x):
        x = np.asarray(x, dtype=float)
        e, t = residual(x)
        gvec = np.zeros_like(x)
        np.add.at(gvec, t, 2 * e)
        np.add.at(gvec, tb, -2 * e)
        return gvec

    kn.subgradient = subgradient
    return kn


def project_quasiconvex(y) -> np.ndarray:
    """Euclidean projection onto valley-shaped (quasiconvex) vectors.

    The set is a union over pivots ``p`` of {non-increasing on ``[0, p)``,
    non-decreasing on ``[p, B)``}; each piece is a product of two monotone
    cones, projected exactly by isotonic regression.
    """
    y = np.asarray(y, dtype=float)
    B = len(y)
    best, best_err = y, np.inf
    for p in range(B):
        left = isotonic_regression(y[:p], increasing=False).x if p else np.empty(0)
        right = isotonic_regression(y[p:], increasing=True).x
        z = np.concatenate([left, right])
        err = float(np.sum((z - y) ** 2))
        if err < best_err:
            best, best_err = z, err
    return best


def learn_coordinate_direct(clean, noisy, grid: GridSpec, cfg: LearnConfig | None = None):
    """``(coeffs, loss, kn)``: projected subgradient on ``K_n`` with restarts.

    Iterates are scored by the true training loss; the zero vector is always
    among the scored points, so the result never does worse than no penalty.
    """
    cfg = cfg or LearnConfig()
    kn = build_kn(clean, noisy, grid)
    B = grid.n_bins
    rng = np.random.default_rng(cfg.seed)
    scale = float(np.max((np.asarray(clean) - np.asarray(noisy)) ** 2, initial=0.0)) or grid.width ** 2
    best = np.zeros(B)
    best_loss = coordinate_loss(best, clean, noisy, grid)
    best_kn = kn(best)
    starts = [np.zeros(B)] + [project_quasiconvex(rng.normal(scale=scale, size=B))
                              for _ in range(cfg.restarts)]
    for x in starts:
        for it in range(cfg.iters):
            if best_loss == 0.0:
                break
            gvec = kn.subgradient(x)
            gn = np.linalg.norm(gvec)
            if gn == 0:
                break
            x = project_quasiconvex(x - cfg.step0 * scale / np.sqrt(it + 1) * gvec / gn)
            x = x - x.mean()
            loss = coordinate_loss(x, clean, noisy, grid)
            if loss < best_loss - 1e-15:
                best, best_loss, best_kn = x.copy(), loss, kn(x)
    return best, best_loss, best_kn


def learn_direct(ts: TrainingSet, grid: GridSpec, cfg: LearnConfig | None = None,
                 return_result: bool = False):
    cfg = cfg or LearnConfig()
    coeffs, reports = [], []
    for j in range(ts.n_coords):
        f, g = ts.coord_slice(j)
        C, loss, kv = learn_coordinate_direct(f, g, grid, cfg)
        coeffs.append(C)
        reports.append(CoordReport(j, loss, kn=kv))
    reg = StepRegularizer(grid, np.array(coeffs))
    return LearnResult(reg, reports) if return_result else reg


# -- resolution sweep ---------------------------------------------------------


def lift(reg: StepRegularizer, n: int) -> StepRegularizer:
    """Re-express ``reg`` on the level-``n`` refinement of its grid (same step function)."""
    if n < reg.grid.n:
        raise ValueError("can only lift to a finer level")
    rep = 2 ** (n - reg.grid.n)
    return StepRegularizer(reg.grid.refined(n), np.repeat(reg.coeffs, rep, axis=1))


def resolution_sweep(ts: TrainingSet, grid: GridSpec, levels, cfg: LearnConfig | None = None,
                     route: str = "discrete"):
    """Learn at each dyadic level; returns ``[(n, objective, regularizer), ...]``.

    At each level the coarser solution, lifted, is scored alongside the fresh
    one per coordinate and the better is kept, so the trajectory is
    non-increasing whenever the lifted step function denoises identically.
    """
    from .stepreg import objective_I

    learner = {"discrete": learn_discrete, "direct": learn_direct}[route]
    out = []
    prev = None
    for n in levels:
        g_n = grid.refined(n)
        reg = learner(ts, g_n, cfg)
        if prev is not None and prev.grid.n <= n:
            lifted = lift(prev, n)
            rows = []
            for j in range(ts.n_coords):
                f, g = ts.coord_slice(j)
                a = coordinate_loss(reg.coeffs[j], f, g, g_n)
                b = coordinate_loss(lifted.coeffs[j], f, g, g_n)
                rows.append(lifted.coeffs[j] if b < a else reg.coeffs[j])
            reg = StepRegularizer(g_n, np.array(rows))
        obj = objective_I(reg, ts)
        out.append((n, obj, reg))
        prev = reg
    return out
