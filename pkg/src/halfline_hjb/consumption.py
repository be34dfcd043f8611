"""Consumption and investment until a factor process hits a barrier.

With power utility ``x^gamma / gamma`` the value factorizes as
``V(x, y, t) = x^gamma / gamma * F(y, t)``, and ``F = G^delta`` removes the
quadratic gradient term. ``G`` solves a semilinear equation whose
nonlinearity is the maximum of ``-theta alpha c G + theta c^alpha`` over
consumption rates ``c``. The rate is first truncated to ``[m1, m2]``, and the
bounds are widened until the unconstrained maximizer lies inside them.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .diffusion import DiffusionSpec, _stderr, bridge_step, run_chunked, step_times
from .fixedpoint import ConvergenceError, SemilinearProblem, picard_solve
from .grid import Grid2D, GridFunction, fd_derivative_x

logger = logging.getLogger(__name__)


def _of_y(value) -> Callable:
    if callable(value):
        return value
    c = float(value)
    return lambda y, _c=c: np.full(np.shape(y), _c)


@dataclass(frozen=True)
class TransformConstants:
    gamma: float
    rho: float
    delta: float
    e: float
    alpha: float
    theta: float

    @classmethod
    def from_params(cls, gamma: float, rho: float) -> TransformConstants:
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        if not rho**2 < 1.0:
            raise ValueError(f"need rho^2 < 1, got rho={rho}")
        delta = (1.0 - gamma) / (gamma * rho**2 + 1.0 - gamma)
        e = 1.0 - delta / (1.0 - gamma)
        alpha = e / (e - 1.0)
        theta = (1.0 - gamma) / (delta * (1.0 - alpha))
        return cls(gamma, rho, delta, e, alpha, theta)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("gamma", "rho", "delta", "e", "alpha", "theta")}


@dataclass(frozen=True)
class MarketModel:
    """Bank rate ``r``, stock excess return ``b`` and volatility ``sigma_s``,
    factor volatility ``a`` and drift ``g_y``, all functions of the factor ``y``.
    """

    r: Callable | float = 0.03
    b: Callable | float = 0.05
    sigma_s: Callable | float = 0.2
    a: Callable | float = 0.3
    g_y: Callable | float = 0.0
    rho: float = 0.0
    y0: float = 0.0
    gamma: float = 0.5
    w: float = 0.05
    T: float = 1.0

    def __post_init__(self):
        for name in ("r", "b", "sigma_s", "a", "g_y"):
            object.__setattr__(self, name, _of_y(getattr(self, name)))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.rho**2 < 1.0:
            raise ValueError(f"need rho^2 < 1, got rho={self.rho}")
        if self.w < 0:
            raise ValueError("impatience rate w must be >= 0")
        if self.T <= 0:
            raise ValueError("horizon must be positive")

    @property
    def rho_bar(self) -> float:
        return math.sqrt(1.0 - self.rho**2)

    @property
    def constants(self) -> TransformConstants:
        return TransformConstants.from_params(self.gamma, self.rho)

    def lam(self, y):
        """Market price of risk ``b / sigma_s``."""
        return self.b(y) / self.sigma_s(y)

    def drift_coef(self, y):
        return self.g_y(y) + (self.gamma * self.rho / (1.0 - self.gamma)) * self.a(y) * self.lam(y)

    def linear_coef(self, y):
        c = self.constants
        g, d = self.gamma, c.delta
        return (g / (2.0 * d * (1.0 - g))) * self.lam(y) ** 2 + (g / d) * self.r(y) - self.w / d

    def validate(self, y_max: float, n: int = 201) -> None:
        y = np.linspace(self.y0, y_max, n)
        for name in ("sigma_s", "a"):
            vals = np.broadcast_to(getattr(self, name)(y), y.shape)
            if not np.all(np.isfinite(vals)) or np.min(vals) <= 0:
                raise ValueError(f"{name} must be positive and finite on [{self.y0}, {y_max}]")


def truncated_max(G, m1: float, m2: float, const: TransformConstants):
    """``max_{m1 <= c <= m2} (-theta alpha c G + theta c^alpha)`` and its maximizer.

    For ``G > 0`` the objective is concave with stationary point
    ``G^{1/(alpha - 1)}``; for ``G <= 0`` it increases in ``c``.
    """
    G = np.asarray(G, dtype=float)
    th, al = const.theta, const.alpha
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        free = np.where(G > 0, np.power(np.where(G > 0, G, 1.0), 1.0 / (al - 1.0)), np.inf)
    c = np.clip(free, m1, m2)
    value = -th * al * c * G + th * np.power(c, al)
    return value, c


class TruncatedPowerHamiltonian:
    """``H(p, G, z, t) = i(y) p + h(y) G + truncated_max(G)`` with ``y = z + y0``."""

    def __init__(self, model: MarketModel, m1: float, m2: float):
        if not 0 <= m1 <= m2:
            raise ValueError(f"invalid consumption bounds [{m1}, {m2}]")
        self.model = model
        self.m1, self.m2 = float(m1), float(m2)
        self.const = model.constants

    def evaluate(self, p, u, x, t):
        y = np.asarray(x, dtype=float) + self.model.y0
        extra, c = truncated_max(u, self.m1, self.m2, self.const)
        value = self.model.drift_coef(y) * p + self.model.linear_coef(y) * u + extra
        return value, np.broadcast_to(c, np.shape(value))

    def __call__(self, p, u, x, t):
        return self.evaluate(p, u, x, t)[0]


def build_g_problem(model: MarketModel, bounds=(0.5, 2.0), farfield="linear") -> SemilinearProblem:
    """Truncated G-equation on the shifted half-line ``z = y - y0 >= 0``, with ``G = 1`` on the boundary."""
    m1, m2 = bounds
    spec = DiffusionSpec(sigma=lambda z, t: model.a(np.asarray(z, dtype=float) + model.y0) + 0.0 * np.asarray(t))
    return SemilinearProblem(
        spec=spec,
        hamiltonian=TruncatedPowerHamiltonian(model, m1, m2),
        boundary=1.0,
        farfield=farfield,
    )


def frozen_ode(model: MarketModel, y: float, bounds=None):
    """Solve ``G' + h(y) G + N(G) = 0``, ``G(T) = 1`` with the coefficients frozen at ``y``.

    ``N`` is the truncated maximum when ``bounds`` is given and
    ``((1 - gamma) / delta) G^e`` otherwise. Returns a callable of ``t``.
    """
    const = model.constants
    h = float(model.linear_coef(np.asarray(y, dtype=float)))

    def rhs(t, G):
        if bounds is None:
            nl = ((1.0 - const.gamma) / const.delta) * np.power(G, const.e)
        else:
            nl = truncated_max(G, bounds[0], bounds[1], const)[0]
        return -(h * G + nl)

    sol = solve_ivp(rhs, (model.T, 0.0), [1.0], method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
    if not sol.success:
        raise ArithmeticError(f"far-field ODE failed: {sol.message}")
    return lambda t: float(sol.sol(t)[0])


def solve_G(
    model: MarketModel,
    grid: Grid2D,
    bounds=(0.5, 2.0),
    kappa="auto",
    tol: float = 1e-9,
    max_iter: int = 200,
    max_widenings: int = 8,
    farfield: str = "ode",
    theta: float = 0.5,
):
    """Solve the truncated G-equation, widening the bounds until they are self-consistent.

    Returns ``(G, bounds_used, report)``. ``farfield="ode"`` pins ``G`` at
    ``z = x_max`` to the frozen-coefficient ODE solution.
    """
    if abs(grid.t_horizon - model.T) > 1e-12:
        raise ValueError("grid horizon does not match the model horizon")
    model.validate(model.y0 + grid.x_max)
    const = model.constants
    m1, m2 = map(float, bounds)
    for attempt in range(max_widenings + 1):
        ff = "linear"
        if farfield == "ode":
            ff = frozen_ode(model, model.y0 + grid.x_max, bounds=(m1, m2))
        problem = build_g_problem(model, (m1, m2), farfield=ff)
        G, policy, report = picard_solve(problem, grid, kappa=kappa, tol=tol, max_iter=max_iter, theta=theta)
        if np.any(G.values <= 0):
            raise ArithmeticError(f"G lost positivity (min {np.min(G.values):.3g})")
        free = np.power(G.values, 1.0 / (const.alpha - 1.0))
        lo, hi = float(np.min(free)), float(np.max(free))
        logger.info("bounds [%g, %g]: free maximizer range [%g, %g]", m1, m2, lo, hi)
        if m1 <= lo and hi <= m2:
            report.extra.update(bounds_used=[m1, m2], widenings=attempt, free_range=[lo, hi])
            return G, (m1, m2), report
        if attempt == max_widenings:
            break
        if lo < m1:
            m1 /= 4.0
        if hi > m2:
            m2 *= 4.0
    raise ConvergenceError(
        f"consumption bounds not self-consistent after {max_widenings} widenings: "
        f"free maximizer in [{lo:.6g}, {hi:.6g}], bounds [{m1:.6g}, {m2:.6g}]"
    )


def extract_policy(model: MarketModel, G: GridFunction):
    """Portfolio fraction and consumption rate grids from ``F = G^delta``."""
    if np.any(G.values <= 0):
        raise ValueError("G must be positive to form F = G^delta")
    const = model.constants
    gam = model.gamma
    F = GridFunction(G.grid, np.power(G.values, const.delta))
    Fy = fd_derivative_x(F).values
    X, _ = G.grid.mesh()
    y = X + model.y0
    sig = np.broadcast_to(model.sigma_s(y), y.shape)
    a = np.broadcast_to(model.a(y), y.shape)
    pi = model.rho * a * Fy / ((1.0 - gam) * sig * F.values) + model.lam(y) / ((1.0 - gam) * sig)
    c = np.power(F.values, 1.0 / (gam - 1.0))
    return GridFunction(G.grid, pi), GridFunction(G.grid, c)


def _interp_G(G: GridFunction, z, t):
    z = np.asarray(z, dtype=float)
    if np.any(z < -1e-12) or np.any(z > G.grid.x_max + 1e-12):
        raise ValueError("factor value lies outside the solved range")
    return G.interpolate(np.clip(z, 0.0, G.grid.x_max), t)


def value_function(model: MarketModel, G: GridFunction, x, y, t):
    """``x^gamma / gamma * G(y, t)^delta``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("wealth must be positive")
    Gv = _interp_G(G, np.asarray(y, dtype=float) - model.y0, t)
    out = x**model.gamma / model.gamma * np.power(Gv, model.constants.delta)
    return float(out) if np.ndim(out) == 0 else out


def simulate_consumption(
    model: MarketModel,
    pi_star: GridFunction,
    c_star: GridFunction,
    x: float,
    y: float,
    t: float,
    dt: float,
    n_paths: int,
    seed: int,
    n_workers: int = 1,
    bridge: bool = True,
    c_scale: float = 1.0,
) -> tuple[float, float]:
    """Monte Carlo objective of the feedback policy ``(pi_star, c_star)``.

    Wealth moves in log space, so it stays positive; the factor is stopped at
    ``y0`` with the bridge correction. Running utility of the consumption
    flow ``c X`` and terminal utility are discounted from ``t`` at rate ``w``.
    ``c_scale`` multiplies the consumption policy.
    """
    if x <= 0:
        raise ValueError("wealth must be positive")
    gam, T, w = model.gamma, model.T, model.w
    terminal = x**gam / gam
    if t >= T or y <= model.y0:
        return float(terminal), 0.0
    if not dt > 0 or dt >= T - t:
        raise ValueError(f"dt={dt} must lie in (0, T - t)")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    grid = pi_star.grid
    if y - model.y0 > grid.x_max:
        raise ValueError("starting factor lies outside the policy grid")
    rho, rho_bar, y0 = model.rho, model.rho_bar, model.y0
    times = step_times(t, T, dt)
    underflows = [0]

    def task(rng, n):
        z = np.full(n, y - y0)
        logx = np.full(n, math.log(x))
        alive = np.ones(n, dtype=bool)
        acc = np.zeros(n)
        tau = np.full(n, T)
        for s, s_next in zip(times[:-1], times[1:]):
            h = s_next - s
            z1 = rng.standard_normal(n)
            z2 = rng.standard_normal(n)
            u = rng.random(n)
            if not alive.any():
                continue
            idx = np.flatnonzero(alive)
            za = z[idx]
            ya = za + y0
            i, j = grid.nearest_index(za, s)
            pi = pi_star.values[i, j]
            c = c_scale * c_star.values[i, j]
            sig = np.broadcast_to(model.sigma_s(ya), za.shape)
            a = np.broadcast_to(model.a(ya), za.shape)
            zb = za + model.g_y(ya) * h + a * math.sqrt(h) * (rho * z1[idx] + rho_bar * z2[idx])
            crossed, frac = bridge_step(za, zb, a, h, u[idx], bridge)
            hit = s + h * frac
            seg = np.where(crossed, hit - s, h)
            xa = np.exp(logx[idx])
            acc[idx] += math.exp(-w * (s - t)) * (c * xa) ** gam / gam * seg
            dlog = (model.r(ya) + pi * model.b(ya) - c - 0.5 * (pi * sig) ** 2) * h + pi * sig * math.sqrt(h) * z1[idx]
            logx[idx] = np.where(crossed, logx[idx], logx[idx] + dlog)
            z[idx] = np.where(crossed, 0.0, zb)
            tau[idx[crossed]] = hit[crossed]
            alive[idx[crossed]] = False
        if np.any(logx < -700):
            underflows[0] += int(np.sum(logx < -700))
        return acc + np.exp(-w * (tau - t)) * np.exp(gam * logx) / gam

    sample = np.concatenate(run_chunked(task, n_paths, seed, n_workers))
    if underflows[0]:
        warnings.warn(f"{underflows[0]} simulated wealth paths underflowed", RuntimeWarning)
    return float(np.mean(sample)), _stderr(sample)
