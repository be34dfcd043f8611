"""Hamiltonians of the form ``max_delta (i p + h u + f)`` over a scalar control set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

SCAN_POINTS = 65
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BLOCK = 16_384
REL_TOL = 1e-10
# golden steps to shrink a two-cell bracket to REL_TOL of the interval width
GOLDEN_STEPS = int(math.ceil(math.log(REL_TOL * (SCAN_POINTS - 1) / 2.0) / math.log(GOLDEN))) + 1


class CoefficientError(ValueError):
    """A coefficient returned a non-finite value."""


@dataclass(frozen=True)
class ControlSet:
    """Either an interval ``[lower, upper]`` or a finite sorted list of points."""

    lower: float
    upper: float
    points: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.points is not None:
            pts = tuple(sorted(float(p) for p in self.points))
            if not pts:
                raise ValueError("finite control set is empty")
            if not all(np.isfinite(pts)):
                raise ValueError("control points must be finite")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "lower", pts[0])
            object.__setattr__(self, "upper", pts[-1])
        elif not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("interval bounds must be finite")
        elif self.lower > self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @classmethod
    def interval(cls, lower: float, upper: float) -> ControlSet:
        return cls(float(lower), float(upper))

    @classmethod
    def finite(cls, points: Sequence[float]) -> ControlSet:
        return cls(0.0, 0.0, tuple(points))

    @property
    def is_finite(self) -> bool:
        return self.points is not None

    def contains(self, delta, atol: float = 1e-12) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        if self.is_finite:
            pts = np.asarray(self.points)
            return np.any(np.abs(delta[..., None] - pts) <= atol, axis=-1)
        return (delta >= self.lower - atol) & (delta <= self.upper + atol)


def _coef(value) -> Callable:
    if callable(value):
        return value
    c = float(value)
    return lambda x, t, d, _c=c: np.full(np.broadcast(np.asarray(x), np.asarray(t), np.asarray(d)).shape, _c)


@dataclass(frozen=True)
class HJBCoefficients:
    """Coefficients ``i, h, f`` of ``(x, t, delta)`` and the control set.

    The callables must broadcast over numpy arrays.
    """

    i: Callable | float
    h: Callable | float
    f: Callable | float
    control_set: ControlSet

    def __post_init__(self):
        for name in ("i", "h", "f"):
            object.__setattr__(self, name, _coef(getattr(self, name)))

    def objective(self, p, u, x, t, delta):
        return self.i(x, t, delta) * p + self.h(x, t, delta) * u + self.f(x, t, delta)

    def evaluate(self, p, u, x, t):
        return maximize(self, p, u, x, t)

    def __call__(self, p, u, x, t):
        return maximize(self, p, u, x, t)[0]


def _checked(coeffs, p, u, x, t, delta):
    val = coeffs.objective(p, u, x, t, delta)
    val = np.broadcast_to(val, np.broadcast(p, u, x, t, delta).shape)
    if not np.all(np.isfinite(val)):
        bad = np.argwhere(~np.isfinite(val))[0]
        X, Tt, D = (np.broadcast_to(a, val.shape)[tuple(bad)] for a in (x, t, delta))
        raise CoefficientError(f"non-finite Hamiltonian term at x={X:.6g}, t={Tt:.6g}, delta={D:.6g}")
    return val


def _maximize_block(coeffs, p, u, x, t):
    cs = coeffs.control_set
    if cs.is_finite:
        grid = np.asarray(cs.points)
    elif cs.lower == cs.upper:
        grid = np.array([cs.lower])
    else:
        grid = cs.lower + (cs.upper - cs.lower) * np.arange(SCAN_POINTS) / (SCAN_POINTS - 1)
    P, U, X, T = (a[:, None] for a in (p, u, x, t))
    vals = _checked(coeffs, P, U, X, T, grid[None, :])
    k = np.argmax(vals, axis=1)
    rows = np.arange(p.size)
    best_d = grid[k]
    best_v = vals[rows, k]
    if cs.is_finite or grid.size == 1:
        return best_v, best_d

    F = lambda d: _checked(coeffs, p, u, x, t, d)
    a = grid[np.maximum(k - 1, 0)]
    b = grid[np.minimum(k + 1, grid.size - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = F(c), F(d)
    for _ in range(GOLDEN_STEPS):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - GOLDEN * (b - a)
        new_d = a + GOLDEN * (b - a)
        probe = np.where(left, new_c, new_d)
        fp = F(probe)
        c, d = np.where(left, new_c, d), np.where(left, c, new_d)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
    mid = 0.5 * (a + b)
    fm = F(mid)
    better = fm > best_v + 1e-15 * np.maximum(1.0, np.abs(best_v))
    return np.where(better, fm, best_v), np.where(better, mid, best_d)


def maximize(coeffs: HJBCoefficients, p, u, x, t):
    """Value and maximizer of ``delta -> i p + h u + f`` at each point.

    Finite sets are scanned fully. Intervals get a 65-point scan and a
    golden-section refinement on the bracket around the best scan point, down
    to ``1e-10 * (upper - lower)``. Ties go to the smallest control.
    """
    shape = np.broadcast(np.asarray(p), np.asarray(u), np.asarray(x), np.asarray(t)).shape
    p, u, x, t = (np.broadcast_to(np.asarray(a, dtype=float), shape).ravel() for a in (p, u, x, t))
    value = np.empty(p.size)
    arg = np.empty(p.size)
    for s in range(0, p.size, BLOCK):
        sl = slice(s, s + BLOCK)
        value[sl], arg[sl] = _maximize_block(coeffs, p[sl], u[sl], x[sl], t[sl])
    value, arg = value.reshape(shape), arg.reshape(shape)
    if not shape:
        return float(value), float(arg)
    return value, arg


def ham_value(coeffs: HJBCoefficients, p, u, x, t):
    """``(H(p, u, x, t), argmax)``; see :func:`maximize`."""
    return maximize(coeffs, p, u, x, t)


def evaluate_hamiltonian(ham, p, u, x, t):
    """Evaluate either an object with ``evaluate`` or a plain callable ``H(p, u, x, t)``."""
    if hasattr(ham, "evaluate"):
        return ham.evaluate(p, u, x, t)
    shape = np.broadcast(np.asarray(p), np.asarray(u), np.asarray(x), np.asarray(t)).shape
    return np.broadcast_to(np.asarray(ham(p, u, x, t), dtype=float), shape), None


def probe_growth(
    ham,
    sample_count: int = 2000,
    seed: int = 0,
    p_range: float = 10.0,
    u_range: float = 10.0,
    x_range: tuple[float, float] = (0.0, 10.0),
    t_range: tuple[float, float] = (0.0, 1.0),
) -> float:
    """Empirical growth/Lipschitz constant ``K`` of a Hamiltonian.

    Returns the largest of ``|H| / (1 + |u| + |p|)`` and the difference
    quotients in ``p`` and in ``u`` over random samples.
    """
    rng = np.random.default_rng(seed)
    n = int(sample_count)
    p = rng.uniform(-p_range, p_range, n)
    u = rng.uniform(-u_range, u_range, n)
    p2 = rng.uniform(-p_range, p_range, n)
    u2 = rng.uniform(-u_range, u_range, n)
    x = rng.uniform(*x_range, n)
    t = rng.uniform(*t_range, n)
    H = lambda pp, uu: np.asarray(evaluate_hamiltonian(ham, pp, uu, x, t)[0], dtype=float)
    h0 = H(p, u)
    growth = np.abs(h0) / (1.0 + np.abs(u) + np.abs(p))
    lip_p = np.abs(H(p2, u) - h0) / np.abs(p2 - p)
    lip_u = np.abs(H(p, u2) - h0) / np.abs(u2 - u)
    return float(max(np.max(growth), np.max(lip_p), np.max(lip_u)))
