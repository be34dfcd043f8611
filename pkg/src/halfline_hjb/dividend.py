"""Restricted dividend optimization for a diffusive surplus.

The surplus follows ``dX = (g(X) - c) dt + sigma dW`` until ruin at 0, and
the dividend rate ``c`` is confined to ``[m1, m2]``. The value is discounted
from the current time, so it solves

    u_t + 1/2 sigma^2 u_xx + max_c [(g(x) - c) u_x + U(c, x)] - r u = 0

with ``u = payoff`` at ruin and at the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diffusion import DiffusionSpec, _check_sim_args, _stderr, absorbed_euler_chunk, as_coefficient, run_chunked
from .fixedpoint import PolicyGrid, SemilinearProblem, picard_solve
from .grid import Grid2D
from .hamiltonian import ControlSet, HJBCoefficients


def _sqrt_utility(c, x):
    return np.sqrt(c)


def _of_x(value) -> Callable:
    if callable(value):
        return value
    c = float(value)
    return lambda x, _c=c: np.full(np.shape(x), _c)


@dataclass(frozen=True)
class DividendModel:
    g: Callable | float = 0.5
    sigma: Callable | float = 1.0
    r: float = 0.05
    utility: Callable = _sqrt_utility
    payoff: Callable | float = 0.0
    m1: float = 0.0
    m2: float = 2.0
    T: float = 1.0

    def __post_init__(self):
        if self.m1 < 0:
            raise ValueError(f"m1 must be >= 0, got {self.m1}")
        if self.m2 < self.m1:
            raise ValueError(f"need m1 <= m2, got [{self.m1}, {self.m2}]")
        if self.r < 0:
            raise ValueError("discount rate must be >= 0")
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "g", _of_x(self.g))
        object.__setattr__(self, "payoff", _of_x(self.payoff))
        object.__setattr__(self, "sigma", as_coefficient(self.sigma))

    @property
    def control_set(self) -> ControlSet:
        return ControlSet.interval(self.m1, self.m2)

    def running(self, c, x):
        return self.utility(c, x)

    def diffusion(self) -> DiffusionSpec:
        return DiffusionSpec(sigma=self.sigma)


def demo_model() -> DividendModel:
    """g = 0.5, sigma = 1, r = 0.05, U(c) = sqrt(c), c in [0, 2], zero payoff, T = 1."""
    return DividendModel(g=0.5, sigma=1.0, r=0.05, utility=_sqrt_utility, payoff=0.0, m1=0.0, m2=2.0, T=1.0)


def build_hjb(model: DividendModel) -> SemilinearProblem:
    coeffs = HJBCoefficients(
        i=lambda x, t, c: model.g(x) - c,
        h=-float(model.r),
        f=lambda x, t, c: np.broadcast_to(model.running(c, x), np.broadcast(x, t, c).shape),
        control_set=model.control_set,
    )
    return SemilinearProblem(
        spec=model.diffusion(),
        hamiltonian=coeffs,
        boundary=lambda x, t: np.broadcast_to(model.payoff(np.asarray(x, dtype=float)), np.broadcast(x, t).shape),
    )


def default_grid(model: DividendModel, x_query: float = 3.0, n_x: int = 200, n_t: int = 200) -> Grid2D:
    from .linear_pde import default_x_max

    _, cap = model.diffusion().probe(x_query + 10.0, model.T)
    drift_cap = float(np.max(np.abs(model.g(np.linspace(0, x_query + 10.0, 201))))) + model.m2
    return Grid2D(default_x_max(x_query, cap, model.T, drift_cap), n_x, model.T, n_t)


def solve(model: DividendModel, grid: Grid2D, kappa="auto", tol: float = 1e-8, max_iter: int = 200, theta: float = 0.5):
    """``(value, policy, report)`` from the Picard solver."""
    if abs(grid.t_horizon - model.T) > 1e-12:
        raise ValueError("grid horizon does not match the model horizon")
    return picard_solve(build_hjb(model), grid, kappa=kappa, tol=tol, max_iter=max_iter, theta=theta)


def constant_policy(grid: Grid2D, c: float) -> PolicyGrid:
    return PolicyGrid(grid, np.full(grid.shape, float(c)))


def simulate_policy(
    model: DividendModel,
    policy: PolicyGrid,
    x: float,
    t: float,
    dt: float,
    n_paths: int,
    seed: int,
    n_workers: int = 1,
    bridge: bool = True,
) -> tuple[float, float]:
    """Monte Carlo value of a feedback dividend policy, discounted from ``t``."""
    T = model.T
    _check_sim_args(x, t, T, dt, n_paths)
    r = float(model.r)

    def control(xs, s):
        return policy.lookup(xs, s)

    def drift(xs, s):
        return model.g(xs) - control(xs, s)

    def running(xs, s):
        return math.exp(-r * (s - t)) * model.running(control(xs, s), xs)

    def task(rng, n):
        tau, xT, acc, _ = absorbed_euler_chunk(rng, n, x, t, T, dt, model.sigma, drift, running, bridge)
        return acc + np.exp(-r * (tau - t)) * model.payoff(xT)

    sample = np.concatenate(run_chunked(task, n_paths, seed, n_workers))
    return float(np.mean(sample)), _stderr(sample)
