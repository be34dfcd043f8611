import numpy as np
import pytest

from halfline_hjb.diffusion import DiffusionSpec, bm_stopped_time_analytic, expected_stopped_time_mc
from halfline_hjb.dividend import (
    DividendModel,
    build_hjb,
    constant_policy,
    default_grid,
    demo_model,
    simulate_policy,
    solve,
)
from halfline_hjb.grid import Grid2D

GRID = Grid2D(6.0, 120, 1.0, 100)


def test_model_validation():
    with pytest.raises(ValueError):
        DividendModel(m1=-1.0)
    with pytest.raises(ValueError):
        DividendModel(m1=2.0, m2=1.0)
    with pytest.raises(ValueError):
        DividendModel(r=-0.1)
    with pytest.raises(ValueError):
        solve(demo_model(), Grid2D(6.0, 20, 2.0, 20))


def test_zero_utility_zero_value():
    model = DividendModel(utility=lambda c, x: 0.0 * c, payoff=0.0)
    u, policy, rep = solve(model, GRID, kappa=6.0)
    assert rep.converged
    assert np.all(u.values == 0.0)
    # every control ties, so the smallest one is reported
    assert np.all(policy.controls == model.m1)


def test_forced_rate_matches_stopped_time():
    # c is pinned to 1 and cancels g, leaving a driftless unit diffusion
    model = DividendModel(g=1.0, r=0.0, m1=1.0, m2=1.0)
    u, _, _ = solve(model, Grid2D(8.0, 400, 1.0, 400), kappa=4.0)
    want = bm_stopped_time_analytic(1.0, 0.0, 1.0)
    assert u.interpolate(1.0, 0.0) == pytest.approx(want, abs=3e-4)
    mean, err = simulate_policy(model, constant_policy(GRID, 1.0), 1.0, 0.0, 1e-2, 20_000, seed=2)
    assert abs(mean - want) < 3 * err


def test_linear_utility_is_bang_bang():
    model = DividendModel(utility=lambda c, x: c, g=0.2, m1=0.0, m2=1.0)
    _, policy, _ = solve(model, GRID, kappa=6.0)
    c = policy.controls[1:-1, :-1]
    at_ends = np.isclose(c, 0.0, atol=1e-8) | np.isclose(c, 1.0, atol=1e-8)
    assert at_ends.mean() > 0.999


def test_wider_control_set_is_worth_more():
    small, _, _ = solve(DividendModel(m2=1.0), GRID, kappa=6.0)
    big, _, _ = solve(DividendModel(m2=2.0), GRID, kappa=6.0)
    assert np.all(big.values >= small.values - 1e-9)
    assert big.interpolate(3.0, 0.0) > small.interpolate(3.0, 0.0)


def test_heavier_discount_is_worth_less():
    low, _, _ = solve(DividendModel(r=0.01), GRID, kappa=6.0)
    high, _, _ = solve(DividendModel(r=0.2), GRID, kappa=6.0)
    assert np.all(high.values <= low.values + 1e-9)


def test_payoff_is_reproduced_on_the_boundary():
    model = DividendModel(payoff=lambda x: 0.1 * x)
    u, _, _ = solve(model, GRID, kappa=6.0)
    np.testing.assert_allclose(u.values[:, -1], 0.1 * GRID.x, atol=1e-15)
    assert np.all(u.values[0, :] == 0.0)


def test_default_grid_covers_the_query_point():
    g = default_grid(demo_model(), x_query=3.0)
    assert g.x_max > 3.0 + 4.0
    assert g.t_horizon == 1.0


def test_hamiltonian_maximizer_is_interior_for_sqrt_utility():
    ham = build_hjb(demo_model()).hamiltonian
    # max_c -c p + sqrt(c) sits at c = 1 / (4 p^2)
    _, c = ham.evaluate(np.array([0.5, 1.0]), 0.0, 1.0, 0.0)
    np.testing.assert_allclose(c, [1.0, 0.25], atol=1e-8)


def test_simulation_is_worker_independent():
    model = demo_model()
    pol = constant_policy(GRID, 0.7)
    a = simulate_policy(model, pol, 1.0, 0.0, 1e-2, 9000, seed=3, n_workers=1)
    b = simulate_policy(model, pol, 1.0, 0.0, 1e-2, 9000, seed=3, n_workers=3)
    assert a == b


def test_forced_linear_payout_is_rate_times_stopped_time():
    # U(c) = c with c pinned at 1 pays the expected life of a surplus drifting at g - 1
    model = DividendModel(utility=lambda c, x: c, g=0.5, r=0.0, m1=1.0, m2=1.0)
    u, _, _ = solve(model, Grid2D(8.0, 400, 1.0, 400), kappa=4.0)
    mean, err = expected_stopped_time_mc(DiffusionSpec(sigma=1.0, drift=-0.5), 1.0, 0.0, 1.0, 1e-2, 40_000, seed=4)
    want = u.interpolate(1.0, 0.0)
    assert abs(mean - want) < max(3 * err, 0.01 * want)


def test_linear_utility_hamiltonian_picks_an_end():
    ham = build_hjb(DividendModel(utility=lambda c, x: c, g=0.0, r=0.0, m1=0.0, m2=1.0)).hamiltonian
    _, c = ham.evaluate(np.array([0.5, 2.0]), 0.0, 1.0, 0.0)
    np.testing.assert_allclose(c, [1.0, 0.0], atol=1e-8)


def test_discount_alone_is_nonincreasing_in_rate():
    values = []
    for r in (0.0, 0.05, 0.2, 1.0):
        model = DividendModel(utility=lambda c, x: 0.0 * c, payoff=1.0, r=r)
        u, policy, _ = solve(model, GRID, kappa=6.0)
        values.append(u.values)
        assert np.all((policy.controls >= model.m1) & (policy.controls <= model.m2))
    np.testing.assert_allclose(values[0][1:, :], 1.0, atol=1e-9)
    for lo, hi in zip(values[1:], values[:-1]):
        assert np.all(lo <= hi + 1e-9)
    assert values[-1][GRID.nearest_index(1.0, 0.0)] < values[0][GRID.nearest_index(1.0, 0.0)]
