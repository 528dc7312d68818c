import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import bilevel_optimum, realizable
from steplearn.core import GridSpec, TrainingSet
from steplearn.learn import (LearnConfig, build_kn, candidate_search, constraint_values, feasibility_solve, lift,
                             learn_direct, learn_discrete, project_quasiconvex, quasiconvex_constraints,
                             resolution_sweep)
from steplearn.stepreg import StepRegularizer, argmin_bin, is_quasiconvex, objective_I

EXHAUSTIVE = LearnConfig(prune_k=None)
TOY = GridSpec(0, 1, 1)
TOY_TS = TrainingSet([[0.25]], [[0.75]])


def test_constraint_set_b4():
    assert quasiconvex_constraints(4) == [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)]


@given(st.lists(st.integers(-4, 4), min_size=3, max_size=7))
def test_smooth_form_matches_scan(a):
    assert (constraint_values(a) >= 0).all() == is_quasiconvex(a)


def test_kn_basic():
    kn = build_kn([0.3, 0.6], [0.3, 0.6], GridSpec(0, 1, 2))
    assert kn(np.zeros(4)) == 0.0
    kn = build_kn([0.25, 0.9], [0.75, 0.4], GridSpec(0, 1, 2))
    x = np.array([0.3, -0.2, 0.1, 0.5])
    for c in (-3.0, 0.5, 7.25):
        assert kn(x + c) == pytest.approx(kn(x), abs=1e-12)


def test_kn_subgradient_is_gradient_on_smooth_region(rng):
    kn = build_kn([0.25, 0.9, 0.5], [0.75, 0.4, 0.55], GridSpec(0, 1, 2))
    for _ in range(20):
        x = rng.normal(scale=0.2, size=4)
        g = kn.subgradient(x)
        h = 1e-7
        fd = np.array([(kn(x + h * e) - kn(x - h * e)) / (2 * h) for e in np.eye(4)])
        # valid where the inner min is unique (almost surely at random points)
        assert np.allclose(g, fd, atol=1e-5)


def test_toy_example_discrete_and_direct():
    reg = learn_discrete(TOY_TS, TOY)
    C = reg.coeffs[0]
    assert C[1] - C[0] >= 0.0625
    assert objective_I(reg, TOY_TS) == pytest.approx(0.0625, abs=1e-15)
    assert candidate_search([0.25], [0.75], TOY)[0].tolist() == [1]
    regd = learn_direct(TOY_TS, TOY)
    assert objective_I(regd, TOY_TS) == pytest.approx(0.0625, abs=1e-15)
    # refinement does not change the realized assignment
    regr = learn_discrete(TOY_TS, TOY, refine=True)
    assert objective_I(regr, TOY_TS) == pytest.approx(0.0625, abs=1e-15)


def test_feasibility_examples():
    assert np.array_equal(feasibility_solve([2], [0.25], [0.75], TOY), np.zeros(2))
    C = feasibility_solve([1], [0.25], [0.75], TOY)
    assert C is not None and argmin_bin(0.75, StepRegularizer(TOY, [C]), 0) == 1
    # (0, 0.0625) ties exactly; the tie goes to the data bin, so a margin is required
    assert argmin_bin(0.75, StepRegularizer(TOY, [[0.0, 0.0625]]), 0) == 2
    # equal noisy values cannot be split across bins
    assert feasibility_solve([1, 2], [0.25, 0.75], [0.75, 0.75], TOY) is None


def test_feasibility_matches_lp_oracle(rng):
    g = GridSpec(0, 1, 2)
    vals = np.array([0.125, 0.3, 0.5, 0.75, 1.0])
    for _ in range(25):
        gs = rng.choice(vals, 2)
        for assign in itertools.product(range(1, 5), repeat=2):
            ours = feasibility_solve(list(assign), [0.5, 0.5], gs, g) is not None
            assert ours == realizable(assign, gs, g.m1, g.n, g.n_bins, g.eps), (gs, assign)


def test_conflicting_pairs_compromise():
    g = GridSpec(0, 1, 2)
    f, gv = [0.1, 0.9], [0.6, 0.6]
    bins, L = candidate_search(f, gv, g, EXHAUSTIVE)
    ref, _ = bilevel_optimum(f, gv, g.m1, g.n, g.n_bins, g.eps)
    assert L == pytest.approx(ref, abs=1e-12)
    assert bins[0] == bins[1]


def test_random_small_instances_match_oracle(rng):
    for _ in range(15):
        B_n = int(rng.integers(0, 3))
        g = GridSpec(0, 2, B_n) if B_n < 2 else GridSpec(0, 1, 3)
        lattice = g.m1 + (g.m2 - g.m1) * np.arange(1, 6) / 5
        m = int(rng.integers(1, 4))
        f, gv = rng.choice(lattice, m), rng.choice(lattice, m)
        ts = TrainingSet(f[:, None], gv[:, None])
        reg = learn_discrete(ts, g, EXHAUSTIVE)
        ref, _ = bilevel_optimum(f, gv, g.m1, g.n, g.n_bins, g.eps)
        assert objective_I(reg, ts) == pytest.approx(ref, abs=1e-9)


@given(st.lists(st.tuples(st.integers(1, 16), st.integers(1, 16)), min_size=1, max_size=4))
def test_never_worse_than_zero(pairs):
    g = GridSpec(0, 1, 2)
    ts = TrainingSet([[a / 16] for a, _ in pairs], [[b / 16] for _, b in pairs])
    base = objective_I(StepRegularizer.zero(g, 1), ts)
    for reg in (learn_discrete(ts, g), learn_direct(ts, g, LearnConfig(restarts=1, iters=50))):
        assert objective_I(reg, ts) <= base + 1e-12
        assert all(is_quasiconvex(r) for r in reg.coeffs)


def test_zero_noise_gives_zero():
    ts = TrainingSet([[0.2, 0.7], [0.4, 0.9]], [[0.2, 0.7], [0.4, 0.9]])
    for reg in (learn_discrete(ts, TOY), learn_direct(ts, TOY)):
        assert objective_I(reg, ts) == 0.0


def test_permutation_equivariance(rng):
    g = GridSpec(0, 1, 2)
    clean = rng.choice(np.arange(1, 9) / 8, (3, 4))
    noisy = rng.choice(np.arange(1, 9) / 8, (3, 4))
    perm = np.array([2, 0, 3, 1])
    a = learn_discrete(TrainingSet(clean, noisy), g)
    b = learn_discrete(TrainingSet(clean[:, perm], noisy[:, perm]), g)
    assert np.array_equal(a.coeffs[perm], b.coeffs)


def test_refine_lowers_kn():
    g = GridSpec(0, 1, 2)
    f, gv = [0.25, 0.5, 0.4], [0.75, 0.9, 0.6]
    ts = TrainingSet(np.array(f)[:, None], np.array(gv)[:, None])
    kn = build_kn(f, gv, g)
    plain = learn_discrete(ts, g)
    ref = learn_discrete(ts, g, refine=True)
    assert objective_I(ref, ts) == pytest.approx(objective_I(plain, ts), abs=1e-12)
    assert kn(ref.coeffs[0]) <= kn(plain.coeffs[0]) + 1e-9


def test_projection_is_quasiconvex_and_idempotent(rng):
    for _ in range(30):
        y = rng.normal(size=int(rng.integers(1, 9)))
        z = project_quasiconvex(y)
        assert is_quasiconvex(z, tol=1e-12)
        assert np.allclose(project_quasiconvex(z), z)
        # no valley-shaped vector among random ones is closer
        for _ in range(20):
            w = project_quasiconvex(rng.normal(size=len(y)))
            assert np.sum((z - y) ** 2) <= np.sum((w - y) ** 2) + 1e-12


def test_lift_preserves_step_function():
    reg = StepRegularizer(TOY, [[0.0, 0.5]])
    up = lift(reg, 3)
    assert up.coeffs.shape == (1, 8)
    assert np.array_equal(up.coeffs[0], [0, 0, 0, 0, 0.5, 0.5, 0.5, 0.5])


def test_sweep_toy_example():
    traj = [obj for _, obj, _ in resolution_sweep(TOY_TS, TOY, [1, 2, 3])]
    assert traj[0] == pytest.approx(0.0625)
    assert traj[1] <= 0.015625 and traj[2] <= 0.00390625


def test_sweep_zero_noise_flat():
    ts = TrainingSet([[0.3, 0.8]], [[0.3, 0.8]])
    assert [o for _, o, _ in resolution_sweep(ts, TOY, [1, 2, 3])] == [0.0, 0.0, 0.0]
