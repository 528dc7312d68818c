"""Orthonormal two-channel pyramid built from scaling taps, QMF checks, cascade.

A scaling filter is ``{p_k}`` with ``phi(x) = sum_k p_k phi(2x - k)`` and
symbol ``P(z) = (1/2) sum_k p_k z**k``. The discrete transform uses
``h_k = p_k / sqrt(2)`` for the lowpass channel and
``g_{1-k} = (-1)**(1-k) h_k`` for the highpass channel, both applied with
periodic wrap-around, so the transform is an exact orthogonal matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .core import GridSpec, TrainingSet

log = logging.getLogger(__name__)

N_CIRCLE = 4096


@dataclass(frozen=True)
class ScalingFilter:
    taps: tuple
    offsets: tuple | None = None
    label: str = ""

    def __post_init__(self):
        taps = tuple(float(v) for v in np.ravel(self.taps))
        if not taps:
            raise ValueError("filter needs at least one tap")
        offs = tuple(range(len(taps))) if self.offsets is None else tuple(int(k) for k in self.offsets)
        if len(offs) != len(taps) or len(set(offs)) != len(offs):
            raise ValueError("need one distinct offset per tap")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "offsets", offs)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.taps)

    @property
    def k(self) -> np.ndarray:
        return np.array(self.offsets)

    def symbol(self, z):
        z = np.asarray(z, dtype=complex)
        return 0.5 * np.sum(self.p[:, None] * z[None, :] ** self.k[:, None], axis=0)


def haar() -> ScalingFilter:
    return ScalingFilter((1.0, 1.0), (0, 1), "haar")


def db4() -> ScalingFilter:
    r3 = np.sqrt(3.0)
    return ScalingFilter(((1 + r3) / 4, (3 + r3) / 4, (3 - r3) / 4, (1 - r3) / 4), (0, 1, 2, 3), "db4")


def lattice_filter(theta: float) -> ScalingFilter:
    """One-angle family of length-4 orthonormal scaling filters on offsets 0..3.

    ``theta = 0`` gives the shifted box filter (0, 1, 1, 0), ``theta = pi/3``
    the four-tap Daubechies filter.
    """
    c, s = np.cos(theta), np.sin(theta)
    taps = ((1 - c + s) / 2, (1 + c + s) / 2, (1 + c - s) / 2, (1 - c - s) / 2)
    return ScalingFilter(taps, (0, 1, 2, 3), f"lattice({theta:.17g})")


@dataclass
class QMFReport:
    ok: bool
    violations: dict
    failed: list = field(default_factory=list)


def check_qmf(filt: ScalingFilter, tol: float = 1e-10, nz_tol: float = 1e-6) -> QMFReport:
    """Evaluate the three scaling-filter conditions on ``N_CIRCLE`` unit-circle samples.

    ``violations`` maps ``sum``, ``power`` and ``nonvanishing`` to the measured
    defect: ``|sum(p)/2 - 1|``, ``max ||P(z)|^2 + |P(-z)|^2 - 1|`` and
    ``min |P(e^{it})|`` over ``|t| <= pi/2`` (this one must stay above ``nz_tol``).
    """
    t = np.linspace(-np.pi, np.pi, N_CIRCLE, endpoint=False)
    z = np.exp(1j * t)
    v_sum = abs(sum(filt.taps) / 2 - 1)
    pw = np.abs(filt.symbol(z)) ** 2 + np.abs(filt.symbol(-z)) ** 2
    v_pow = float(np.max(np.abs(pw - 1)))
    half = np.abs(t) <= np.pi / 2 + 1e-15
    mags = np.abs(filt.symbol(z[half]))
    # Zeros can fall between samples; polish the sampled minimum locally.
    t0 = t[half][np.argmin(mags)]
    h = 2 * np.pi / N_CIRCLE
    res = minimize_scalar(lambda u: abs(filt.symbol(np.exp(1j * np.array([u])))[0]),
                          bounds=(max(t0 - h, -np.pi / 2), min(t0 + h, np.pi / 2)),
                          method="bounded", options={"xatol": 1e-14})
    v_nz = float(min(mags.min(), res.fun))
    failed = []
    if v_sum > tol:
        failed.append("sum")
    if v_pow > tol:
        failed.append("power")
    if v_nz <= nz_tol:
        failed.append("nonvanishing")
    return QMFReport(not failed, {"sum": v_sum, "power": v_pow, "nonvanishing": v_nz}, failed)


# -- pyramid ------------------------------------------------------------------


def _banks(filt: ScalingFilter):
    h = filt.p / np.sqrt(2)
    hk = filt.k
    gk = 1 - hk
    g = (-1.0) ** gk * h
    return (hk, h), (gk, g)


def _idx(N, offs):
    return (2 * np.arange(N // 2)[:, None] + offs[None, :]) % N


def analysis_step(a, filt: ScalingFilter):
    a = np.asarray(a, dtype=float)
    N = len(a)
    if N % 2:
        raise ValueError("analysis step needs an even-length array")
    (hk, h), (gk, g) = _banks(filt)
    return a[_idx(N, hk)] @ h, a[_idx(N, gk)] @ g


def synthesis_step(approx, detail, filt: ScalingFilter):
    approx = np.asarray(approx, dtype=float)
    detail = np.asarray(detail, dtype=float)
    if approx.shape != detail.shape:
        raise ValueError(f"approx/detail shapes differ: {approx.shape} vs {detail.shape}")
    N = 2 * len(approx)
    (hk, h), (gk, g) = _banks(filt)
    out = np.zeros(N)
    np.add.at(out, _idx(N, hk), approx[:, None] * h[None, :])
    np.add.at(out, _idx(N, gk), detail[:, None] * g[None, :])
    return out


def project_samples(samples) -> np.ndarray:
    """Samples at the finest rate are used directly as approximation coefficients."""
    return np.array(samples, dtype=float)


def decompose_tree(approx, filt: ScalingFilter, levels: int):
    """``(coarsest approx, [detail_level_1, ..., detail_level_L])`` (finest first)."""
    a = np.asarray(approx, dtype=float)
    N = len(a)
    if levels < 0 or (levels and (N % (2 ** levels) or 2 ** levels > N)):
        raise ValueError(f"cannot take {levels} levels of a length-{N} array")
    details = []
    for _ in range(levels):
        a, d = analysis_step(a, filt)
        details.append(d)
    return a, details


def flatten_tree(approx, details) -> np.ndarray:
    """Layout ``[a_L, d_L, ..., d_1]``."""
    return np.concatenate([approx] + details[::-1])


def unflatten(vec, levels: int):
    vec = np.asarray(vec, dtype=float)
    N = len(vec)
    if levels < 0 or (levels and N % (2 ** levels)):
        raise ValueError(f"length {N} is not a {levels}-level pyramid")
    n0 = N >> levels
    approx = vec[:n0]
    details = []
    pos = n0
    for lev in range(levels, 0, -1):
        size = N >> lev
        details.append(vec[pos:pos + size])
        pos += size
    return approx, details[::-1]


def decompose(approx, filt: ScalingFilter, levels: int) -> np.ndarray:
    return flatten_tree(*decompose_tree(approx, filt, levels))


def reconstruct_tree(approx, details, filt: ScalingFilter) -> np.ndarray:
    a = np.asarray(approx, dtype=float)
    for d in details[::-1]:
        a = synthesis_step(a, d, filt)
    return a


def reconstruct(vec, filt: ScalingFilter, levels: int) -> np.ndarray:
    return reconstruct_tree(*unflatten(vec, levels), filt)


# -- cascade ------------------------------------------------------------------


@dataclass
class CascadeResult:
    x: np.ndarray
    phi: np.ndarray
    sup_diffs: list

    @property
    def integral(self) -> float:
        return float(np.sum(self.phi) * (self.x[1] - self.x[0]))


def cascade_phi(filt: ScalingFilter, iters: int, resolution: int | None = None) -> CascadeResult:
    """Iterate ``phi_n(x) = sum_k p_k phi_{n-1}(2x - k)`` from the unit box.

    Values live on the fixed dyadic grid ``lo + j 2**-L`` with
    ``L = resolution`` (default ``iters + 2``) covering the filter support.
    ``sup_diffs[n-1]`` is ``max |phi_n - phi_{n-1}|``.
    """
    L = iters + 2 if resolution is None else resolution
    lo = min(min(filt.offsets), 0)
    hi = max(max(filt.offsets), 1)
    scale = 2 ** L
    n_pts = (hi - lo) * scale
    x = lo + np.arange(n_pts) / scale
    phi = ((x >= 0) & (x < 1)).astype(float)
    j = np.arange(n_pts)
    sup = []
    for _ in range(iters):
        new = np.zeros(n_pts)
        for pk, k in zip(filt.taps, filt.offsets):
            src = 2 * j + (lo - k) * scale      # grid index of 2x - k
            ok = (src >= 0) & (src < n_pts)
            new[ok] += pk * phi[src[ok]]
        sup.append(float(np.max(np.abs(new - phi))))
        phi = new
    return CascadeResult(x, phi, sup)


# -- joint learning -----------------------------------------------------------


def lattice_space(n_theta: int, include=()):
    """Uniform theta grid on [0, 2pi) as a list of filters."""
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    return [lattice_filter(t) for t in thetas] + list(include)


def transform_set(ts: TrainingSet, filt: ScalingFilter, levels: int) -> TrainingSet:
    """Pyramid coefficients of every clean and noisy signal."""
    clean = np.array([decompose(project_samples(f), filt, levels) for f in ts.clean])
    noisy = np.array([decompose(project_samples(g), filt, levels) for g in ts.noisy])
    return TrainingSet(clean, noisy)


@dataclass
class JointResult:
    filter: ScalingFilter | None
    reg: object
    objective: float
    trajectory: list          # (label, objective or None, note) per space member
    index: int = -1


def learn_joint(ts_samples: TrainingSet, space, grid: GridSpec, levels: int, cfg=None,
                qmf_tol: float = 1e-10) -> JointResult:
    """Search a finite filter space; for each member learn a step regularizer in its
    coefficient domain and keep the member with the lowest training loss."""
    from .learn import learn_discrete
    from .stepreg import objective_I

    best = JointResult(None, None, np.inf, [])
    for i, filt in enumerate(space):
        rep = check_qmf(filt, qmf_tol)
        if not rep.ok:
            best.trajectory.append((filt.label, None, f"fails {','.join(rep.failed)}"))
            continue
        tset = transform_set(ts_samples, filt, levels)
        outside = ~(grid.contains(tset.clean) & grid.contains(tset.noisy))
        if outside.any():
            best.trajectory.append((filt.label, None, f"{int(outside.sum())} coefficients off grid"))
            continue
        reg = learn_discrete(tset, grid, cfg)
        obj = objective_I(reg, tset)
        best.trajectory.append((filt.label, obj, ""))
        if obj < best.objective:
            best.filter, best.reg, best.objective, best.index = filt, reg, obj, i
    if best.filter is None:
        raise ValueError("no member of the filter space is usable on this grid")
    return best
