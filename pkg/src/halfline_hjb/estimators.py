"""Estimator-style wrappers.

Each class keeps its constructor arguments verbatim (so ``get_params`` and
``clone`` work), does the solve in ``fit`` and answers point queries in
``predict``. Query arrays have one row per point: ``(x, t)`` columns, or
``(x, y, t)`` for the consumption model.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import consumption, dividend
from .diffusion import DiffusionSpec
from .fixedpoint import SemilinearProblem, picard_solve
from .grid import Grid2D
from .linear_pde import LinearProblem, default_x_max, solve_fd


def check_points(X, n_columns: int, grid: Grid2D | None = None) -> np.ndarray:
    """Validate a query array of shape ``(n, n_columns)``; the last column is time.

    With ``grid`` the spatial column must lie in ``[0, x_max]`` and time in
    ``[0, T]``.
    """
    X = check_array(X, dtype=float, ensure_2d=True)
    if X.shape[1] != n_columns:
        raise ValueError(f"expected {n_columns} columns, got {X.shape[1]}")
    if grid is not None:
        if np.any(X[:, -1] < 0) or np.any(X[:, -1] > grid.t_horizon):
            raise ValueError(f"query times must lie in [0, {grid.t_horizon}]")
    return X


def _check_space(z, grid: Grid2D, name="x"):
    if np.any(z < 0) or np.any(z > grid.x_max):
        raise ValueError(f"query {name} must lie in [0, {grid.x_max}]")


class LinearCauchyDirichletSolver(BaseEstimator):
    """Solve ``u_t + 1/2 sigma^2 u_xx + b u_x + f = 0`` with ``u = boundary`` at x = 0 and t = T.

    >>> est = LinearCauchyDirichletSolver(source=1.0, n_x=100, n_t=100).fit()
    >>> round(float(est.predict([[1.0, 0.0]])[0]), 2)
    0.85
    """

    def __init__(self, sigma=1.0, drift=None, source=0.0, boundary=0.0, horizon=1.0, x_max=8.0, n_x=200, n_t=200, theta=0.5):
        self.sigma = sigma
        self.drift = drift
        self.source = source
        self.boundary = boundary
        self.horizon = horizon
        self.x_max = x_max
        self.n_x = n_x
        self.n_t = n_t
        self.theta = theta

    def fit(self, X=None, y=None):
        spec = DiffusionSpec(sigma=self.sigma, drift=self.drift)
        self.grid_ = Grid2D(self.x_max, self.n_x, self.horizon, self.n_t)
        spec.validate(self.grid_.x_max, self.horizon)
        self.value_ = solve_fd(LinearProblem(spec, self.source, self.boundary), self.grid_, theta=self.theta)
        return self

    def predict(self, X):
        check_is_fitted(self, "value_")
        X = check_points(X, 2, self.grid_)
        _check_space(X[:, 0], self.grid_)
        return np.asarray(self.value_.interpolate(X[:, 0], X[:, 1]), dtype=float)


class HalfLineHJBSolver(BaseEstimator):
    """Picard solve of ``u_t + 1/2 sigma^2 u_xx + H(u_x, u, x, t) = 0``.

    ``hamiltonian`` is an :class:`~halfline_hjb.hamiltonian.HJBCoefficients`
    or a callable ``H(p, u, x, t)``.
    """

    def __init__(
        self,
        hamiltonian=None,
        sigma=1.0,
        drift=None,
        boundary=0.0,
        horizon=1.0,
        x_max=8.0,
        n_x=200,
        n_t=200,
        kappa="auto",
        tol=1e-9,
        max_iter=200,
        theta=0.5,
    ):
        self.hamiltonian = hamiltonian
        self.sigma = sigma
        self.drift = drift
        self.boundary = boundary
        self.horizon = horizon
        self.x_max = x_max
        self.n_x = n_x
        self.n_t = n_t
        self.kappa = kappa
        self.tol = tol
        self.max_iter = max_iter
        self.theta = theta

    def fit(self, X=None, y=None):
        if self.hamiltonian is None:
            raise ValueError("a hamiltonian is required")
        spec = DiffusionSpec(sigma=self.sigma, drift=self.drift)
        self.grid_ = Grid2D(self.x_max, self.n_x, self.horizon, self.n_t)
        spec.validate(self.grid_.x_max, self.horizon)
        problem = SemilinearProblem(spec, self.hamiltonian, boundary=self.boundary)
        self.value_, self.policy_, self.report_ = picard_solve(
            problem, self.grid_, kappa=self.kappa, tol=self.tol, max_iter=self.max_iter, theta=self.theta
        )
        self.kappa_ = self.report_.kappa
        return self

    def predict(self, X):
        check_is_fitted(self, "value_")
        X = check_points(X, 2, self.grid_)
        _check_space(X[:, 0], self.grid_)
        return np.asarray(self.value_.interpolate(X[:, 0], X[:, 1]), dtype=float)

    def predict_policy(self, X):
        check_is_fitted(self, "value_")
        if self.policy_ is None:
            raise ValueError("the Hamiltonian does not report maximizers")
        X = check_points(X, 2, self.grid_)
        _check_space(X[:, 0], self.grid_)
        return np.asarray(self.policy_.lookup(X[:, 0], X[:, 1]), dtype=float)


class DividendOptimizer(BaseEstimator):
    """Optimal restricted dividend rate; parameters mirror :class:`~halfline_hjb.dividend.DividendModel`.

    ``x_max=None`` picks the truncation level from a tail bound.
    """

    def __init__(
        self,
        g=0.5,
        sigma=1.0,
        r=0.05,
        utility=None,
        payoff=0.0,
        m1=0.0,
        m2=2.0,
        horizon=1.0,
        x_max=None,
        n_x=200,
        n_t=200,
        kappa="auto",
        tol=1e-8,
        max_iter=200,
    ):
        self.g = g
        self.sigma = sigma
        self.r = r
        self.utility = utility
        self.payoff = payoff
        self.m1 = m1
        self.m2 = m2
        self.horizon = horizon
        self.x_max = x_max
        self.n_x = n_x
        self.n_t = n_t
        self.kappa = kappa
        self.tol = tol
        self.max_iter = max_iter

    def _model(self):
        kw = {} if self.utility is None else {"utility": self.utility}
        return dividend.DividendModel(
            g=self.g, sigma=self.sigma, r=self.r, payoff=self.payoff, m1=self.m1, m2=self.m2, T=self.horizon, **kw
        )

    def fit(self, X=None, y=None):
        self.model_ = self._model()
        if self.x_max is None:
            self.grid_ = dividend.default_grid(self.model_, n_x=self.n_x, n_t=self.n_t)
        else:
            self.grid_ = Grid2D(self.x_max, self.n_x, self.horizon, self.n_t)
        self.value_, self.policy_, self.report_ = dividend.solve(
            self.model_, self.grid_, kappa=self.kappa, tol=self.tol, max_iter=self.max_iter
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "value_")
        X = check_points(X, 2, self.grid_)
        _check_space(X[:, 0], self.grid_)
        return np.asarray(self.value_.interpolate(X[:, 0], X[:, 1]), dtype=float)

    def predict_policy(self, X):
        check_is_fitted(self, "policy_")
        X = check_points(X, 2, self.grid_)
        _check_space(X[:, 0], self.grid_)
        return np.asarray(self.policy_.lookup(X[:, 0], X[:, 1]), dtype=float)

    def simulate(self, x, t=0.0, dt=1e-3, n_paths=20000, seed=0, n_workers=1):
        """``(mean, stderr)`` of the fitted policy's payoff by Monte Carlo."""
        check_is_fitted(self, "policy_")
        return dividend.simulate_policy(self.model_, self.policy_, x, t, dt, n_paths, seed, n_workers)


class ConsumptionOptimizer(BaseEstimator):
    """Consumption and investment with a stopped factor; see :class:`~halfline_hjb.consumption.MarketModel`.

    ``y_span`` is the width of the solved factor range above ``y0``.
    """

    def __init__(
        self,
        r=0.03,
        b=0.05,
        sigma_s=0.2,
        a=0.3,
        g_y=0.0,
        rho=0.0,
        y0=0.0,
        gamma=0.5,
        w=0.05,
        horizon=1.0,
        y_span=4.0,
        n_y=200,
        n_t=200,
        bounds=(0.5, 2.0),
        kappa="auto",
        tol=1e-9,
        max_iter=200,
    ):
        self.r = r
        self.b = b
        self.sigma_s = sigma_s
        self.a = a
        self.g_y = g_y
        self.rho = rho
        self.y0 = y0
        self.gamma = gamma
        self.w = w
        self.horizon = horizon
        self.y_span = y_span
        self.n_y = n_y
        self.n_t = n_t
        self.bounds = bounds
        self.kappa = kappa
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X=None, y=None):
        self.model_ = consumption.MarketModel(
            r=self.r, b=self.b, sigma_s=self.sigma_s, a=self.a, g_y=self.g_y,
            rho=self.rho, y0=self.y0, gamma=self.gamma, w=self.w, T=self.horizon,
        )
        self.grid_ = Grid2D(self.y_span, self.n_y, self.horizon, self.n_t)
        self.G_, self.bounds_, self.report_ = consumption.solve_G(
            self.model_, self.grid_, bounds=self.bounds, kappa=self.kappa, tol=self.tol, max_iter=self.max_iter
        )
        self.pi_, self.c_ = consumption.extract_policy(self.model_, self.G_)
        return self

    def predict(self, X):
        """Value at rows ``(x, y, t)``."""
        check_is_fitted(self, "G_")
        X = check_points(X, 3, self.grid_)
        return np.atleast_1d(consumption.value_function(self.model_, self.G_, X[:, 0], X[:, 1], X[:, 2]))

    def predict_policy(self, X):
        """``(pi, c)`` at rows ``(y, t)``."""
        check_is_fitted(self, "G_")
        X = check_points(X, 2, self.grid_)
        z = X[:, 0] - self.y0
        _check_space(z, self.grid_, "y - y0")
        return (
            np.asarray(self.pi_.interpolate(z, X[:, 1]), dtype=float),
            np.asarray(self.c_.interpolate(z, X[:, 1]), dtype=float),
        )

    def simulate(self, x, y, t=0.0, dt=1e-3, n_paths=20000, seed=0, n_workers=1, c_scale=1.0):
        check_is_fitted(self, "G_")
        return consumption.simulate_consumption(
            self.model_, self.pi_, self.c_, x, y, t, dt, n_paths, seed, n_workers, c_scale=c_scale
        )
