"""Linear Cauchy-Dirichlet problems on the half-line.

Solves ``u_t + 1/2 sigma^2 u_xx + b u_x + f = 0`` on ``(0, x_max) x [0, T)``
with ``u = beta`` on ``{x = 0}`` and ``{t = T}``, marching backward in time
with a theta scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from .diffusion import DiffusionSpec, _stderr, as_coefficient, simulate_paths
from .grid import Grid2D, GridFunction

PECLET_LIMIT = 2.0


@dataclass(frozen=True)
class LinearProblem:
    """Data of a linear problem.

    ``source`` is a callable ``f(x, t)``, a number, or an array/GridFunction
    on the solve grid. ``farfield`` is ``"linear"`` (zero second difference
    next to ``x_max``) or a callable ``g(t)`` giving Dirichlet values there.
    """

    spec: DiffusionSpec
    source: Callable | float | np.ndarray | GridFunction = 0.0
    boundary: Callable | float = 0.0
    farfield: str | Callable = "linear"

    def __post_init__(self):
        if not isinstance(self.source, (np.ndarray, GridFunction)):
            object.__setattr__(self, "source", as_coefficient(self.source))
        object.__setattr__(self, "boundary", as_coefficient(self.boundary))
        if not (self.farfield == "linear" or callable(self.farfield)):
            raise ValueError(f"farfield must be 'linear' or a callable, got {self.farfield!r}")

    def source_on(self, grid: Grid2D) -> np.ndarray:
        src = self.source
        if isinstance(src, GridFunction):
            if src.grid != grid:
                raise ValueError("source grid does not match the solve grid")
            return src.values
        if isinstance(src, np.ndarray):
            if src.shape != grid.shape:
                raise ValueError(f"source shape {src.shape} does not match grid {grid.shape}")
            return src
        X, T = grid.mesh()
        return np.broadcast_to(src(X, T), grid.shape)

    def source_callable(self) -> Callable:
        src = self.source
        if isinstance(src, GridFunction):
            return src.interpolate
        if isinstance(src, np.ndarray):
            raise ValueError("an array source needs its grid; wrap it in a GridFunction")
        return src


def truncation_probability(x_query: float, x_max: float, sigma_cap: float, t_span: float, drift_cap: float = 0.0) -> float:
    """Gaussian tail bound for a path from ``x_query`` to reach ``x_max`` before the horizon."""
    gap = x_max - x_query - abs(drift_cap) * t_span
    if gap <= 0:
        return 1.0
    return float(min(1.0, 2.0 * norm.sf(gap / (sigma_cap * math.sqrt(t_span)))))


def default_x_max(x_query: float, sigma_cap: float, t_span: float, drift_cap: float = 0.0, prob: float = 1e-6) -> float:
    """Smallest truncation level whose tail bound is below ``prob``."""
    z = norm.isf(prob / 2.0)
    return float(x_query + abs(drift_cap) * t_span + z * sigma_cap * math.sqrt(t_span))


def _operator_bands(D, b, dx):
    """Sub, main and super diagonals of ``D u_xx + b u_x`` at interior nodes."""
    lo = D / dx**2
    di = -2.0 * D / dx**2
    up = D / dx**2.0
    if b is None:
        return lo, di, up
    with np.errstate(divide="ignore", invalid="ignore"):
        peclet = np.where(D > 0, np.abs(b) * dx / D, np.inf)
    central = peclet <= PECLET_LIMIT
    pos = (~central) & (b > 0)
    neg = (~central) & (b < 0)
    lo = lo + np.where(central, -b / (2 * dx), 0.0) + np.where(neg, -b / dx, 0.0)
    up = up + np.where(central, b / (2 * dx), 0.0) + np.where(pos, b / dx, 0.0)
    di = di + np.where(pos, -b / dx, 0.0) + np.where(neg, b / dx, 0.0)
    return lo, di, up


def solve_fd(problem: LinearProblem, grid: Grid2D, theta: float = 0.5, rannacher: bool = True) -> GridFunction:
    """Theta-scheme solve marching backward from ``t = T``.

    ``theta = 0.5`` is Crank-Nicolson; with ``rannacher`` the first two steps
    are fully implicit to damp the corner mismatch between the two pieces of
    boundary data.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    spec = problem.spec
    x, t = grid.x, grid.t
    dx, h = grid.dx, grid.dt
    N = grid.n_x
    xi = x[1:-1]
    src = problem.source_on(grid)
    beta = problem.boundary
    has_drift = spec.has_drift

    def bands(tj):
        sig = np.broadcast_to(spec.sigma(xi, tj), xi.shape)
        D = 0.5 * sig**2
        b = np.broadcast_to(spec.drift(xi, tj), xi.shape) if has_drift else None
        return D, _operator_bands(D, b, dx)

    if theta < 0.5:
        D_max = max(float(np.max(bands(tj)[0])) for tj in t)
        if (1.0 - 2.0 * theta) * D_max * h / dx**2 > 0.5:
            raise ValueError(
                f"explicit-leaning theta={theta} is unstable on this grid: "
                f"(1 - 2 theta) D dt / dx^2 = {(1 - 2 * theta) * D_max * h / dx**2:.3g} > 0.5"
            )

    u = np.empty(grid.shape)
    u[:, -1] = np.broadcast_to(beta(x, t[-1]), x.shape)
    u[0, :] = np.broadcast_to(beta(0.0 * t, t), t.shape)
    dirichlet_far = callable(problem.farfield)
    if dirichlet_far:
        u[N, :-1] = [problem.farfield(tj) for tj in t[:-1]]

    _, (lo1, di1, up1) = bands(t[-1])
    for j in range(grid.n_t - 1, -1, -1):
        th = 1.0 if (rannacher and theta == 0.5 and j >= grid.n_t - 2) else theta
        _, (lo0, di0, up0) = bands(t[j])
        old = u[:, j + 1]
        rhs = old[1:-1] + h * (th * src[1:-1, j] + (1.0 - th) * src[1:-1, j + 1])
        if th < 1.0:
            rhs += (1.0 - th) * h * (lo1 * old[:-2] + di1 * old[1:-1] + up1 * old[2:])
        a_lo = -th * h * lo0
        a_di = 1.0 - th * h * di0
        a_up = -th * h * up0
        rhs[0] -= a_lo[0] * u[0, j]
        if dirichlet_far:
            rhs[-1] -= a_up[-1] * u[N, j]
        else:
            # u_N = 2 u_{N-1} - u_{N-2}
            a_lo[-1] -= a_up[-1]
            a_di[-1] += 2.0 * a_up[-1]
        if th >= 0.5 and np.any(np.abs(a_di[1:-1]) < np.abs(a_lo[1:-1]) + np.abs(a_up[1:-1]) - 1e-12):
            raise ArithmeticError(f"tridiagonal system lost diagonal dominance at step {j}")
        ab = np.zeros((3, N - 1))
        ab[0, 1:] = a_up[:-1]
        ab[1] = a_di
        ab[2, :-1] = a_lo[1:]
        u[1:-1, j] = solve_banded((1, 1), ab, rhs)
        if not dirichlet_far:
            u[N, j] = 2.0 * u[N - 1, j] - u[N - 2, j]
        lo1, di1, up1 = lo0, di0, up0
    if not np.all(np.isfinite(u)):
        raise ArithmeticError("linear solve produced non-finite values")
    return GridFunction(grid, u)


def evaluate_feynman_kac(
    problem: LinearProblem,
    x: float,
    t: float,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    bridge: bool = True,
    n_workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``E[beta(X_{T^tau}, T^tau) + int_t^{T^tau} f(X_s, s) ds]``."""
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if not t < T:
        raise ValueError(f"need t < T, got t={t}, T={T}")
    f = problem.source_callable()
    batch = simulate_paths(problem.spec, x, t, T, dt, n_paths, seed, bridge=bridge, running=f, n_workers=n_workers)
    payoff = np.broadcast_to(problem.boundary(batch.terminal_states, batch.absorption_times), (n_paths,))
    sample = payoff + batch.running
    return float(np.mean(sample)), _stderr(sample)
