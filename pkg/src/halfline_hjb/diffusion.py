"""One-dimensional diffusions absorbed at 0.

Paths are advanced with Euler-Maruyama steps. A Brownian-bridge test catches
barrier crossings that happen between grid times, which otherwise bias
hitting times by O(sqrt(dt)). The hit time inside a crossing step is drawn
from its exact conditional law given the two endpoints.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline
from scipy.special import erf, log_ndtr, ndtr

CHUNK_SIZE = 4096
# bisection steps for the in-step hit time, resolves 2^-48 of a step
HIT_BISECT_STEPS = 48


def as_coefficient(value) -> Callable:
    """Wrap a scalar as a vectorized ``f(x, t)``; pass callables through."""
    if callable(value):
        return value
    c = float(value)

    def const(x, t, _c=c):
        return np.full(np.broadcast(np.asarray(x), np.asarray(t)).shape, _c)

    const.constant = c
    return const


def _is_constant(func) -> bool:
    return hasattr(func, "constant")


@dataclass(frozen=True)
class DiffusionSpec:
    """``dX = drift(X, t) dt + sigma(X, t) dW`` absorbed at 0.

    ``sigma`` and ``drift`` may be numbers or vectorized callables of
    ``(x, t)``. ``sigma_floor`` and ``sigma_cap`` default to values probed
    on demand by :meth:`bounds`.
    """

    sigma: Callable | float = 1.0
    drift: Callable | float | None = None
    sigma_floor: float | None = None
    sigma_cap: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "sigma", as_coefficient(self.sigma))
        if self.drift is not None:
            object.__setattr__(self, "drift", as_coefficient(self.drift))
        if self.sigma_floor is not None and self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        if self.sigma_cap is not None and not np.isfinite(self.sigma_cap):
            raise ValueError("sigma_cap must be finite")

    @property
    def has_drift(self) -> bool:
        return self.drift is not None and not (_is_constant(self.drift) and self.drift.constant == 0.0)

    def drift_at(self, x, t):
        if self.drift is None:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
        return self.drift(x, t)

    def probe(self, x_max: float, t_horizon: float, n: int = 201) -> tuple[float, float]:
        """Min and max of sigma on a uniform probe lattice."""
        X, T = np.meshgrid(np.linspace(0, x_max, n), np.linspace(0, t_horizon, 21), indexing="ij")
        s = np.broadcast_to(self.sigma(X, T), X.shape)
        return float(np.min(s)), float(np.max(s))

    def bounds(self, x_max: float, t_horizon: float) -> tuple[float, float]:
        lo, hi = self.probe(x_max, t_horizon)
        floor = self.sigma_floor if self.sigma_floor is not None else lo
        cap = self.sigma_cap if self.sigma_cap is not None else hi
        return floor, cap

    def validate(self, x_max: float, t_horizon: float) -> None:
        lo, hi = self.probe(x_max, t_horizon)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("sigma is not finite on the probe lattice")
        floor, cap = self.bounds(x_max, t_horizon)
        if lo <= 0 or lo < floor:
            raise ValueError(f"sigma drops to {lo:.6g}, below the floor {floor:.6g}")
        if hi > cap:
            raise ValueError(f"sigma reaches {hi:.6g}, above the cap {cap:.6g}")

    def is_time_homogeneous(self, x_max: float = 10.0, t_horizon: float = 1.0) -> bool:
        if _is_constant(self.sigma):
            return True
        x = np.linspace(0, x_max, 101)
        ref = np.broadcast_to(self.sigma(x, 0.0), x.shape)
        for t in np.linspace(0, t_horizon, 7)[1:]:
            if not np.allclose(np.broadcast_to(self.sigma(x, t), x.shape), ref, rtol=0, atol=1e-14):
                return False
        return True


@dataclass
class PathBatch:
    n_paths: int
    dt: float
    t0: float
    t_horizon: float
    absorption_times: np.ndarray
    terminal_states: np.ndarray
    running: np.ndarray | None = None
    trajectories: np.ndarray | None = None

    @property
    def absorbed(self) -> np.ndarray:
        return self.absorption_times < self.t_horizon

    def summary(self) -> dict:
        tau = self.absorption_times
        return {
            "n_paths": int(self.n_paths),
            "dt": float(self.dt),
            "mean_tau": float(np.mean(tau)),
            "stderr_tau": _stderr(tau),
            "absorbed_fraction": float(np.mean(self.absorbed)),
            "mean_terminal": float(np.mean(self.terminal_states)),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _stderr(sample) -> float:
    sample = np.asarray(sample, dtype=float)
    if sample.size < 2:
        return 0.0
    return float(np.std(sample, ddof=1) / math.sqrt(sample.size))


def chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    """Counter-based stream for one block of ``CHUNK_SIZE`` paths."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk_index)])))


def _chunks(n_paths: int):
    for k, start in enumerate(range(0, n_paths, CHUNK_SIZE)):
        yield k, start, min(CHUNK_SIZE, n_paths - start)


def run_chunked(task, n_paths: int, seed: int, n_workers: int = 1) -> list:
    """Run ``task(rng, n)`` over fixed-size path blocks, results in block order.

    Block boundaries depend only on ``n_paths``, so the output does not
    depend on ``n_workers``.
    """
    jobs = list(_chunks(n_paths))

    def one(job):
        k, _, n = job
        return task(chunk_generator(seed, k), n)

    if n_workers <= 1 or len(jobs) == 1:
        return [one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(one, jobs))


def _check_sim_args(x0, t0, T, dt, n_paths):
    if not T > t0:
        raise ValueError(f"need t0 < T, got t0={t0}, T={T}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt >= T - t0:
        raise ValueError(f"dt={dt} must be smaller than the horizon T - t0 = {T - t0}")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if np.any(np.asarray(x0) < 0):
        raise ValueError(f"starting state must be >= 0, got {x0}")


def step_times(t0: float, T: float, dt: float) -> np.ndarray:
    """Step start times; the last step is shortened to land on T."""
    n = int(math.ceil((T - t0) / dt - 1e-12))
    times = t0 + dt * np.arange(n + 1)
    times[-1] = T
    return times


def _bridge_hit_fraction(xa, xb, sig, h, crossed, u):
    """Sample where in a step a crossing bridge first touches 0, as a fraction of ``h``.

    Given a crossing from ``xa`` to ``xb``, ``w = s / (h - s)`` is inverse
    Gaussian with mean ``xa / |xb|`` and shape ``xa^2 / (sig^2 h)``. The draw
    inverts that law at level ``u`` by bisection.
    """
    frac = np.full(xa.shape, 0.5)
    k = crossed & (xa > 0)
    frac[crossed & (xa <= 0)] = 0.0
    if not k.any():
        return frac
    a = xa[k]
    b = np.abs(xb[k])
    lam = a * a / (np.broadcast_to(sig, xa.shape)[k] ** 2 * h)
    target = u[k]
    lo = np.zeros_like(a)
    hi = np.ones_like(a)
    for _ in range(HIT_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        below = _hit_cdf(mid, a, b, lam) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    frac[k] = 0.5 * (lo + hi)
    return frac


def _hit_cdf(f, a, b, lam):
    # inverse Gaussian cdf at w = f / (1 - f), mean a / b, shape lam; written
    # with b / a so b = 0 (hit exactly at the step end) needs no special case
    with np.errstate(divide="ignore", invalid="ignore"):
        w = f / (1.0 - f)
        r = np.sqrt(lam / w)
        q = w * b / a
        first = ndtr(r * (q - 1.0))
        second = np.exp(2.0 * lam * b / a + log_ndtr(-r * (q + 1.0)))
        out = first + second
    out = np.where(f <= 0.0, 0.0, out)
    return np.where(f >= 1.0, 1.0, np.nan_to_num(out, nan=1.0))


def bridge_step(xa, xb, sig, h, u, bridge=True):
    """Decide absorption over one Euler step and place the hit inside it.

    One uniform per lane drives both choices: a lane crosses when ``u`` is
    below the bridge crossing probability ``p`` and then hits at the
    conditional quantile ``u / p``. This is the quantile of the unconditional
    hit time, so paths sharing ``u`` keep their absorption times ordered.
    Returns the crossing mask and the hit fraction of ``h``.
    """
    crossed = xb <= 0
    level = np.array(u, dtype=float, copy=True)
    if bridge:
        pos = ~crossed
        with np.errstate(over="ignore", divide="ignore"):
            p = np.exp(-2.0 * xa[pos] * xb[pos] / (sig[pos] ** 2 * h))
        up = level[pos]
        hit = up < p
        crossed[pos] = hit
        level[pos] = np.where(hit, up / np.where(hit, p, 1.0), up)
    return crossed, _bridge_hit_fraction(xa, xb, sig, h, crossed, level)


def absorbed_euler_chunk(
    rng,
    n,
    x0,
    t0,
    T,
    dt,
    sigma,
    drift=None,
    running=None,
    bridge=True,
    record=False,
):
    """Simulate ``n`` absorbed Euler paths with a single generator.

    ``drift`` and ``running`` are callables of ``(x, s)``; ``running`` is a
    rate integrated with the left-point rule over the surviving part of each
    step. Normals and uniforms are drawn for every lane at every step so that
    paths started from different points see common random numbers.
    """
    times = step_times(t0, T, dt)
    x = np.full(n, float(x0))
    alive = x > 0
    tau = np.where(alive, T, t0).astype(float)
    acc = np.zeros(n) if running is not None else None
    traj = [x.copy()] if record else None
    for s, s_next in zip(times[:-1], times[1:]):
        h = s_next - s
        z = rng.standard_normal(n)
        u = rng.random(n)
        if not alive.any():
            if record:
                traj.append(x.copy())
            continue
        idx = np.flatnonzero(alive)
        xa = x[idx]
        sig = np.broadcast_to(sigma(xa, s), xa.shape)
        mu = np.broadcast_to(drift(xa, s), xa.shape) if drift is not None else 0.0
        xb = xa + mu * h + sig * math.sqrt(h) * z[idx]
        crossed, frac = bridge_step(xa, xb, sig, h, u[idx], bridge)
        hit_time = s + h * frac
        if acc is not None:
            rate = np.broadcast_to(running(xa, s), xa.shape)
            seg = np.where(crossed, hit_time - s, h)
            acc[idx] += rate * seg
        xb = np.where(crossed, 0.0, xb)
        x[idx] = xb
        tau[idx[crossed]] = hit_time[crossed]
        alive[idx[crossed]] = False
        if record:
            traj.append(x.copy())
    return tau, x, acc, (np.array(traj) if record else None)


def simulate_paths(
    spec: DiffusionSpec,
    x0: float,
    t0: float,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    bridge: bool = True,
    running: Callable | None = None,
    record: bool = False,
    n_workers: int = 1,
) -> PathBatch:
    """Euler-Maruyama paths of ``spec`` started at ``(x0, t0)``, stopped at 0 or T.

    With ``bridge=True`` a step from ``x_a`` to ``x_b > 0`` is also absorbed
    with probability ``exp(-2 x_a x_b / (sigma^2 dt))``.
    """
    _check_sim_args(x0, t0, T, dt, n_paths)
    drift = spec.drift if spec.has_drift else None

    def task(rng, n):
        return absorbed_euler_chunk(rng, n, x0, t0, T, dt, spec.sigma, drift, running, bridge, record)

    parts = run_chunked(task, n_paths, seed, n_workers)
    tau = np.concatenate([p[0] for p in parts])
    xt = np.concatenate([p[1] for p in parts])
    acc = np.concatenate([p[2] for p in parts]) if running is not None else None
    traj = np.concatenate([p[3] for p in parts], axis=1) if record else None
    return PathBatch(n_paths, dt, t0, T, tau, xt, acc, traj)


def bm_stopped_time_analytic(x: float, t: float, T: float) -> float:
    """``E[tau ^ T]`` for standard Brownian motion started at ``x`` at time ``t``.

    Integrates the survival probability ``1 - 2 Phi(-x / sqrt(s - t))``.
    """
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if t > T:
        raise ValueError(f"need t <= T, got t={t}, T={T}")
    if x == 0 or t == T:
        return float(t)

    def survival(u):
        return erf(x / math.sqrt(2.0 * u)) if u > 0 else 1.0

    val, _ = integrate.quad(survival, 0.0, T - t, epsabs=1e-10, epsrel=1e-12, limit=200)
    return float(t + val)


def expected_stopped_time_mc(
    spec: DiffusionSpec,
    x: float,
    t: float,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    bridge: bool = True,
    n_workers: int = 1,
) -> tuple[float, float]:
    """Sample mean and standard error of ``tau ^ T``."""
    batch = simulate_paths(spec, x, t, T, dt, n_paths, seed, bridge=bridge, n_workers=n_workers)
    return float(np.mean(batch.absorption_times)), _stderr(batch.absorption_times)


def stopped_time_lipschitz_bound(t: float, T: float) -> float:
    """Upper bound on ``d/dx E[tau ^ T]`` for unit Brownian motion.

    The x-derivative of the survival probability is the reflected Gaussian
    density ``2 phi(x / sqrt(u)) / sqrt(u) <= 2 / sqrt(2 pi u)``; its time
    integral is evaluated by quadrature.
    """
    if T <= t:
        return 0.0
    val, _ = integrate.quad(lambda u: 2.0 / math.sqrt(2.0 * math.pi * u), 0.0, T - t)
    return float(val)


def hitting_lipschitz_probe(
    spec: DiffusionSpec,
    x_values,
    t: float,
    T: float,
    dt: float = 1e-3,
    n_paths: int = 20_000,
    seed: int = 0,
    bridge: bool = True,
    n_workers: int = 1,
    full_output: bool = False,
):
    """Largest difference quotient of ``E[tau ^ T]`` over adjacent probe points.

    Every probe point reuses ``seed`` so the estimates share random numbers,
    which keeps the differences far less noisy than the means.
    """
    xs = np.asarray(x_values, dtype=float)
    if xs.size < 2:
        raise ValueError("need at least two probe points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("probe points must be strictly increasing (sorted, no duplicates)")
    taus = [
        simulate_paths(spec, x, t, T, dt, n_paths, seed, bridge=bridge, n_workers=n_workers).absorption_times
        for x in xs
    ]
    quotients, q_err = [], []
    for k in range(xs.size - 1):
        diff = (taus[k + 1] - taus[k]) / (xs[k + 1] - xs[k])
        quotients.append(abs(float(np.mean(diff))))
        q_err.append(_stderr(diff))
    probe = max(quotients)
    if not full_output:
        return probe
    return {
        "probe": probe,
        "quotients": quotients,
        "quotient_stderr": q_err,
        "means": [float(np.mean(s)) for s in taus],
        "stderr": [_stderr(s) for s in taus],
    }


class LampertiTransform(NamedTuple):
    unit_spec: DiffusionSpec
    zeta: Callable
    zeta_inv: Callable


class _MonotoneTable:
    """Cubic Hermite table with exact slopes, linear outside the nodes."""

    def __init__(self, nodes, values, slopes):
        self._spline = CubicHermiteSpline(nodes, values, slopes)
        self._lo, self._hi = nodes[0], nodes[-1]
        self._ends = (values[0], slopes[0], values[-1], slopes[-1])

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = self._spline(np.clip(z, self._lo, self._hi))
        v0, s0, v1, s1 = self._ends
        out = np.where(z < self._lo, v0 + s0 * (z - self._lo), out)
        out = np.where(z > self._hi, v1 + s1 * (z - self._hi), out)
        return out if out.ndim else float(out)


def lamperti_transform(spec: DiffusionSpec, x_max: float = 10.0, n_cells: int = 4000) -> LampertiTransform:
    """Map ``dX = sigma(X) dW`` to a unit-diffusion process ``Y = zeta(X)``.

    ``zeta(x) = int_0^x dz / sigma(z)`` so the barrier stays at 0, and Ito's
    formula gives ``dY = -1/2 sigma'(zeta^{-1}(Y)) dt + dW``. Both maps are
    tabulated on ``[0, 1.5 x_max]``.
    """
    if not spec.is_time_homogeneous(x_max):
        raise ValueError("the Lamperti transform needs a time-independent sigma")
    if spec.has_drift:
        raise ValueError("the Lamperti transform here covers drift-free diffusions only")

    def sig(x):
        return np.broadcast_to(spec.sigma(np.asarray(x, dtype=float), 0.0), np.shape(x)).astype(float)

    upper = 1.5 * x_max
    nodes = np.linspace(0.0, upper, n_cells + 1)
    gx, gw = np.polynomial.legendre.leggauss(5)
    h = nodes[1] - nodes[0]
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    pts = mids[:, None] + 0.5 * h * gx[None, :]
    cell = 0.5 * h * np.sum(gw[None, :] / sig(pts), axis=1)
    zeta_nodes = np.concatenate([[0.0], np.cumsum(cell)])
    s_nodes = sig(nodes)
    if np.any(s_nodes <= 0):
        raise ValueError("sigma must be positive on the tabulation range")

    zeta = _MonotoneTable(nodes, zeta_nodes, 1.0 / s_nodes)
    zeta_inv = _MonotoneTable(zeta_nodes, nodes, s_nodes)
    eps = 1e-6

    def sigma_prime(x):
        return (sig(x + eps) - sig(x - eps)) / (2 * eps)

    def drift(y, t):
        return -0.5 * sigma_prime(np.asarray(zeta_inv(y), dtype=float))

    if _is_constant(spec.sigma):
        unit = DiffusionSpec(sigma=1.0)
    else:
        unit = DiffusionSpec(sigma=1.0, drift=drift)
    return LampertiTransform(unit, zeta, zeta_inv)
