import math

import numpy as np
import pytest

from halfline_hjb.diffusion import DiffusionSpec
from halfline_hjb.fixedpoint import (
    frozen_source,
    SemilinearProblem,
    apply_T,
    choose_kappa,
    estimate_contraction,
    initial_guess,
    picard_solve,
    random_bumps,
    verify_residual,
)
from halfline_hjb.grid import Grid2D, GridFunction, weighted_norm
from halfline_hjb.hamiltonian import ControlSet, HJBCoefficients
from halfline_hjb.linear_pde import LinearProblem, evaluate_feynman_kac, solve_fd

UNIT = DiffusionSpec(sigma=1.0)
GRID = Grid2D(6.0, 120, 1.0, 100)


def _zero(p, u, x, t):
    return 0.0 * p


def test_apply_T_of_zero_hamiltonian_is_boundary_solve():
    beta = lambda x, t: x + 0 * t
    prob = SemilinearProblem(UNIT, _zero, boundary=beta)
    u = GridFunction.from_function(GRID, lambda x, t: np.sin(3 * x) * t)
    X, _ = GRID.mesh()
    np.testing.assert_allclose(apply_T(prob, u).values, X, atol=1e-9)


def test_apply_T_freezes_hamiltonian_along_u():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: u)
    u = GridFunction.from_function(GRID, lambda x, t: np.exp(-x) * (1 + t))
    want = solve_fd(LinearProblem(UNIT, source=u.values), GRID)
    np.testing.assert_array_equal(apply_T(prob, u).values, want.values)
    with pytest.raises(ValueError):
        apply_T(prob, u, grid=Grid2D(6.0, 60, 1.0, 100))


def test_picard_zero_hamiltonian_one_sweep():
    prob = SemilinearProblem(UNIT, _zero)
    u, policy, rep = picard_solve(prob, GRID, kappa=4.0)
    assert rep.iterations == 1 and rep.converged
    assert np.all(u.values == 0.0)
    assert policy is None


def test_picard_u_independent_hamiltonian_two_sweeps():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: np.cos(x) + 0 * p)
    u, _, rep = picard_solve(prob, GRID, kappa=4.0)
    assert rep.converged and rep.iterations <= 2
    direct = solve_fd(LinearProblem(UNIT, source=lambda x, t: np.cos(x) + 0 * t), GRID)
    np.testing.assert_allclose(u.values, direct.values, atol=1e-12)


def test_fixed_point_is_consistent():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: 0.5 * np.sin(p) - 0.2 * u + 1.0)
    tol = 1e-9
    u, _, rep = picard_solve(prob, GRID, kappa=8.0, tol=tol)
    assert rep.converged
    # one more sweep barely moves a converged iterate
    assert weighted_norm(apply_T(prob, u) - u, 8.0) <= 2 * tol
    assert all(r < 0.5 for r in rep.contraction_ratios)


def test_boundary_data_reproduced_exactly():
    beta = lambda x, t: 1.0 + 0.5 * x * (1 - t) + 0 * t
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: np.tanh(p) + 0.1 * u, boundary=beta)
    u, _, _ = picard_solve(prob, GRID, kappa=8.0)
    np.testing.assert_array_equal(u.values[0, :], beta(0.0 * GRID.t, GRID.t))
    np.testing.assert_array_equal(u.values[:, -1], beta(GRID.x, 1.0))


def test_policy_from_control_hamiltonian():
    coeffs = HJBCoefficients(i=lambda x, t, d: d, h=0.0, f=lambda x, t, d: -0.5 * d**2, control_set=ControlSet.interval(-1, 1))
    prob = SemilinearProblem(UNIT, coeffs, boundary=lambda x, t: 0.3 * x + 0 * t)
    u, policy, _ = picard_solve(prob, Grid2D(4.0, 60, 1.0, 60), kappa=8.0)
    # with u_x near 0.3 everywhere the maximizer of d p - d^2/2 is p itself
    assert policy is not None
    assert policy.lookup(2.0, 0.5) == pytest.approx(0.3, abs=1e-3)


def test_max_iter_reports_non_convergence():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: 0.5 * np.sin(p) + 1.0)
    _, _, rep = picard_solve(prob, GRID, kappa=4.0, max_iter=2, tol=1e-14)
    assert not rep.converged and rep.iterations == 2
    with pytest.raises(ValueError):
        picard_solve(prob, GRID, tol=0.0)


def test_choose_kappa_floor_and_ratio():
    prob = SemilinearProblem(UNIT, _zero)
    kappa, ratio, history = choose_kappa(prob, GRID, full_output=True)
    assert kappa == 4.0 and ratio == 0.0
    assert history == [(4.0, 0.0)]
    prob2 = SemilinearProblem(UNIT, lambda p, u, x, t: p)
    kappa2, ratio2, _ = choose_kappa(prob2, GRID, full_output=True)
    assert kappa2 >= 4.0 and ratio2 < 0.5


def test_estimate_contraction_examples():
    assert estimate_contraction(SemilinearProblem(UNIT, _zero), GRID, 4.0, n_pairs=3) == 0.0
    # H = c u: T is linear, and the ratio stays below c / kappa times a slack
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: 2.0 * u)
    r = estimate_contraction(prob, GRID, 20.0, n_pairs=3)
    assert 0.0 < r < 1.0
    with pytest.raises(ValueError):
        estimate_contraction(prob, GRID, 4.0, n_pairs=0)


def test_random_bumps_vanish_on_boundary():
    b = random_bumps(GRID, np.random.default_rng(0), amplitude=2.0)
    assert np.max(np.abs(b)) == pytest.approx(2.0)
    assert np.all(b[0, :] == 0.0) and np.all(np.abs(b[:, -1]) < 1e-12)


def test_initial_guess_uses_zero_arguments():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: 1.0 + p + u)
    want = solve_fd(LinearProblem(UNIT, source=1.0), GRID)
    np.testing.assert_allclose(initial_guess(prob, GRID).values, want.values, atol=1e-14)


def test_verify_residual_examples():
    prob = SemilinearProblem(UNIT, _zero)
    assert verify_residual(GridFunction.zeros(GRID), prob) == 0.0
    # a linear function solves the heat equation exactly
    lin = GridFunction.from_function(GRID, lambda x, t: 2 * x + 0 * t)
    assert verify_residual(lin, prob) < 1e-10
    # a wrong candidate is flagged
    wrong = GridFunction.from_function(GRID, lambda x, t: x**2 + 0 * t)
    assert verify_residual(wrong, prob) == pytest.approx(1.0, abs=1e-9)


def test_verify_residual_converges_at_second_order():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: -0.1 * u + 1.0)
    res = []
    for n in (50, 100, 200):
        u, _, _ = picard_solve(prob, Grid2D(8.0, n, 1.0, n), kappa=4.0, compute_residual=False)
        res.append(verify_residual(u, prob))
    orders = [math.log2(res[i] / res[i + 1]) for i in range(2)]
    assert min(orders) > 1.7


def test_apply_T_agrees_with_feynman_kac_of_frozen_source():
    beta = lambda x, t: 0.2 * x + 0 * t
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: 0.3 * p - 0.2 * u + 1.0, boundary=beta)
    u = GridFunction.from_function(GRID, lambda x, t: x * np.exp(-x) * (1 + t))
    Tu = apply_T(prob, u)
    src, _ = frozen_source(prob, u)
    table = GridFunction(GRID, src)
    # paths that leave the grid see the source held at its x_max value
    frozen = LinearProblem(UNIT, source=lambda x, t: table.interpolate(np.minimum(x, GRID.x_max), t), boundary=beta)
    for k, x in enumerate((0.3, 0.8, 1.5, 2.5, 4.0)):
        mean, err = evaluate_feynman_kac(frozen, x, 0.0, 1.0, 1e-2, 20_000, seed=20 + k)
        want = Tu.interpolate(x, 0.0)
        assert abs(mean - want) < max(3 * err, 0.01 * abs(want))


def test_choose_kappa_with_only_boundary_data():
    prob = SemilinearProblem(UNIT, _zero, boundary=lambda x, t: x + 0 * t)
    assert choose_kappa(prob, GRID) == 4.0


def test_measured_ratios_below_one_at_chosen_kappa():
    prob = SemilinearProblem(UNIT, lambda p, u, x, t: 0.5 * np.sin(p) - 0.3 * u)
    kappa = choose_kappa(prob, GRID)
    ratio = estimate_contraction(prob, GRID, kappa, n_pairs=8, seed=5)
    assert ratio < 1.0
