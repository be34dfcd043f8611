"""Uniform space-time grids, grid functions and the exponentially weighted norm."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Rectangular grid on [0, x_max] x [0, t_horizon].

    Nodes are ``x_i = i * x_max / n_x`` and ``t_j = j * t_horizon / n_t``.
    """

    x_max: float
    n_x: int
    t_horizon: float
    n_t: int

    def __post_init__(self):
        if not (np.isfinite(self.x_max) and self.x_max > 0):
            raise ValueError(f"x_max must be positive and finite, got {self.x_max}")
        if not (np.isfinite(self.t_horizon) and self.t_horizon > 0):
            raise ValueError(f"t_horizon must be positive and finite, got {self.t_horizon}")
        if int(self.n_x) != self.n_x or self.n_x < 2:
            raise ValueError(f"n_x must be an integer >= 2, got {self.n_x}")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ValueError(f"n_t must be an integer >= 1, got {self.n_t}")
        object.__setattr__(self, "n_x", int(self.n_x))
        object.__setattr__(self, "n_t", int(self.n_t))

    @property
    def dx(self) -> float:
        return self.x_max / self.n_x

    @property
    def dt(self) -> float:
        return self.t_horizon / self.n_t

    @property
    def x(self) -> np.ndarray:
        return _nodes(self.x_max, self.n_x)

    @property
    def t(self) -> np.ndarray:
        return _nodes(self.t_horizon, self.n_t)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x + 1, self.n_t + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, T)`` arrays of shape ``(n_x + 1, n_t + 1)``."""
        return np.meshgrid(self.x, self.t, indexing="ij")

    def nearest_index(self, x, t) -> tuple[np.ndarray, np.ndarray]:
        i = np.clip(np.rint(np.asarray(x, dtype=float) / self.dx), 0, self.n_x).astype(int)
        j = np.clip(np.rint(np.asarray(t, dtype=float) / self.dt), 0, self.n_t).astype(int)
        return i, j

    def to_dict(self) -> dict:
        return {"x_max": self.x_max, "n_x": self.n_x, "t_horizon": self.t_horizon, "n_t": self.n_t}


@dataclass(frozen=True)
class GridFunction:
    """Values ``u(x_i, t_j)`` stored as an ``(n_x + 1, n_t + 1)`` array."""

    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values have shape {values.shape}, grid expects {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> GridFunction:
        X, T = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, T), grid.shape))

    @classmethod
    def zeros(cls, grid: Grid2D) -> GridFunction:
        return cls(grid, np.zeros(grid.shape))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def interpolate(self, x, t) -> np.ndarray:
        """Bilinear interpolation at arbitrary ``(x, t)`` points inside the grid."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((self.grid.x, self.grid.t), self.values)
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        pts = np.stack([x.ravel(), t.ravel()], axis=-1)
        return interp(pts).reshape(x.shape)

    def to_csv(self, path=None, precision: int = 12) -> str:
        """Serialize as ``x,t,u`` rows, looping over t then x."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "t", "u"])
        fmt = f"{{:.{precision}g}}"
        xs, ts = self.grid.x, self.grid.t
        for j, t in enumerate(ts):
            for i, x in enumerate(xs):
                writer.writerow([fmt.format(x), fmt.format(t), fmt.format(self.values[i, j])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, grid: Grid2D | None = None) -> GridFunction:
        """Read a grid function written by :meth:`to_csv`.

        ``source`` is a path or the CSV text itself. When ``grid`` is omitted
        it is reconstructed from the node coordinates.
        """
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["x", "t", "u"]:
            raise ValueError(f"unexpected CSV header {rows[0]}")
        data = np.array(rows[1:], dtype=float)
        xs = np.unique(data[:, 0])
        ts = np.unique(data[:, 1])
        if grid is None:
            grid = Grid2D(float(xs[-1]), len(xs) - 1, float(ts[-1]), len(ts) - 1)
        values = data[:, 2].reshape(grid.n_t + 1, grid.n_x + 1).T
        return cls(grid, values)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def fd_derivative_x(u: GridFunction) -> GridFunction:
    """Second-order finite-difference derivative in x.

    Central differences in the interior and three-point one-sided stencils at
    ``x = 0`` and ``x = x_max``; both are exact for quadratics.
    """
    v = u.values
    h = u.grid.dx
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    d[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    d[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return GridFunction(u.grid, d)


def _nodes(end: float, n: int) -> np.ndarray:
    # i * end / n can round the last node off end by an ulp, so pin it
    out = np.arange(n + 1) * end / n
    out[-1] = end
    return out


def _time_weights(grid: Grid2D, kappa: float) -> np.ndarray:
    if not np.isfinite(kappa):
        raise ValueError(f"kappa must be finite, got {kappa}")
    return np.exp(-kappa * (grid.t_horizon - grid.t))


def sup_norm(u: GridFunction) -> float:
    return float(np.max(np.abs(u.values)))


def weighted_sup_norm(u: GridFunction, kappa: float) -> float:
    """``max e^{-kappa (T - t_j)} |u(x_i, t_j)|`` over the grid."""
    w = _time_weights(u.grid, kappa)
    return float(np.max(np.abs(u.values) * w[None, :]))


def weighted_norm(u: GridFunction, kappa: float) -> float:
    """Weighted sup of ``|u|`` plus weighted sup of ``|D_x u|``.

    Both suprema use the weight ``e^{-kappa (T - t)}``, so large ``kappa``
    discounts discrepancies far from the terminal time.
    """
    w = _time_weights(u.grid, kappa)
    du = fd_derivative_x(u).values
    return float(np.max(np.abs(u.values) * w) + np.max(np.abs(du) * w))
