"""Command-line front end.

Usage::

    halfline-hjb <subcommand> --config run.json [--out DIR] [--seed N] [--workers N]

The config is one JSON document. Coefficients are numbers or expression
strings (see :mod:`halfline_hjb.expr`). Every run writes ``summary.json`` and
``resolved_config.json``; grid solves also write ``value.csv`` and, when a
control is optimized, ``policy.csv``. Exit status is 0 on success, 2 when an
iteration did not converge and 1 on input errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
from typing import Callable

import numpy as np

from . import consumption, dividend
from .diffusion import (
    DiffusionSpec,
    bm_stopped_time_analytic,
    hitting_lipschitz_probe,
    simulate_paths,
    stopped_time_lipschitz_bound,
)
from .expr import CoeffExpr, ExprError
from .fixedpoint import ConvergenceError, SemilinearProblem, picard_solve
from .grid import Grid2D, GridFunction
from .hamiltonian import ControlSet, HJBCoefficients
from .linear_pde import LinearProblem, default_x_max, evaluate_feynman_kac, solve_fd, truncation_probability

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("hitting-time", "solve-linear", "solve-hjb", "dividend", "consumption", "validate-assumptions")
EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


# --- config helpers -------------------------------------------------------

MC_DEFAULTS = {"dt": 1e-3, "n_paths": 20000, "seed": 0, "bridge": True}
SOLVER_DEFAULTS = {"kappa": "auto", "tol": 1e-8, "max_iter": 200, "theta_scheme": 0.5}

DEFAULTS = {
    "hitting-time": {"sigma": "1", "drift": None, "x": 1.0, "t": 0.0, "T": 1.0, "mc": MC_DEFAULTS},
    "solve-linear": {
        "sigma": "1",
        "drift": None,
        "source": "0",
        "boundary": "0",
        "farfield": "linear",
        "T": 1.0,
        "grid": {"x_max": None, "n_x": 200, "n_t": 200},
        "theta_scheme": 0.5,
        "probes": [[1.0, 0.0]],
        "mc": None,
    },
    "solve-hjb": {
        "sigma": "1",
        "drift": None,
        "boundary": "0",
        "T": 1.0,
        "hamiltonian": {"i": "0", "h": "0", "f": "0", "controls": {"interval": [0.0, 1.0]}},
        "grid": {"x_max": None, "n_x": 200, "n_t": 200},
        "solver": SOLVER_DEFAULTS,
        "probes": [[1.0, 0.0]],
    },
    "dividend": {
        "g": "0.5",
        "sigma": "1",
        "r": 0.05,
        "utility": "sqrt(c)",
        "payoff": "0",
        "m1": 0.0,
        "m2": 2.0,
        "T": 1.0,
        "grid": {"x_max": None, "n_x": 200, "n_t": 200},
        "solver": SOLVER_DEFAULTS,
        "probes": [[0.5, 0.0], [1.0, 0.0], [2.0, 0.0]],
        "mc": {"dt": 1e-3, "n_paths": 20000, "seed": 0, "bridge": True},
    },
    "consumption": {
        "r": "0.03",
        "b": "0.06",
        "sigma_s": "0.2",
        "a": "0.4",
        "g_y": "0",
        "rho": -0.5,
        "y0": 0.0,
        "gamma": 0.5,
        "w": 0.05,
        "T": 1.0,
        "bounds": [0.5, 2.0],
        "max_widenings": 8,
        "grid": {"y_span": 3.0, "n_y": 150, "n_t": 200},
        "solver": {"kappa": "auto", "tol": 1e-9, "max_iter": 200, "theta_scheme": 0.5},
        "probes": [[1.0, 0.2, 0.0], [1.0, 0.5, 0.0]],
        "mc": {"dt": 1e-3, "n_paths": 20000, "seed": 0, "bridge": True},
    },
    "validate-assumptions": {
        "sigma": "1",
        "drift": None,
        "boundary": None,
        "hamiltonian": None,
        "T": 1.0,
        "x_max": 10.0,
        "scan_points": 10001,
        "time_points": 5,
        "sigma_floor": 1e-8,
        "probe_x": [0.0, 0.5, 1.0, 2.0, 4.0],
        "mc": {"dt": 1e-2, "n_paths": 5000, "seed": 0, "bridge": True},
    },
}


def _merge(defaults, given, where):
    """Fill ``given`` from ``defaults``; unknown keys are input errors."""
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    out = {}
    for key, dval in defaults.items():
        if key in given:
            gval = given[key]
            if isinstance(dval, dict) and key not in ("controls",):
                out[key] = _merge(dval, gval, f"{where}.{key}" if where else key)
            else:
                out[key] = copy.deepcopy(gval)
        else:
            out[key] = copy.deepcopy(dval)
    return out


def resolve_config(kind: str, raw: dict, seed: int | None = None) -> dict:
    if kind not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {kind!r}")
    raw = dict(raw)
    given_kind = raw.pop("kind", kind)
    if given_kind != kind:
        raise ConfigError(f"config is for {given_kind!r}, not {kind!r}")
    raw.pop("resolved", None)
    defaults = DEFAULTS[kind]
    if kind == "solve-linear" and raw.get("mc") is not None:
        defaults = dict(defaults, mc=MC_DEFAULTS)
    cfg = _merge(defaults, raw, "")
    if seed is not None and cfg.get("mc") is not None:
        cfg["mc"]["seed"] = int(seed)
    return {"kind": kind, **cfg}


def _number(value, name, lo=-math.inf, hi=math.inf, strict_lo=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    v = int(value) if integer else float(value)
    if integer and v != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not math.isfinite(v) or v < lo or v > hi or (strict_lo and v == lo):
        bound = f"> {lo}" if strict_lo else f">= {lo}"
        raise ConfigError(f"{name}={value!r} is out of range (need {bound}" + (f" and <= {hi})" if hi < math.inf else ")"))
    return v


def _coeff(value, name, args) -> Callable:
    """Expression string or number as a vectorized function of ``args``."""
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{name} must be a number or an expression string")
    if isinstance(value, (int, float)):
        value = repr(float(value))
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a number or an expression string")
    try:
        expr = CoeffExpr(value, args)
    except ExprError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if expr.is_constant:
        const = float(expr())
        if len(args) == 2:
            # as_coefficient recognizes plain floats as constants
            return const
    return expr


def _coeff_xt(value, name):
    return _coeff(value, name, ("x", "t"))


def _spec(cfg) -> DiffusionSpec:
    sigma = _coeff_xt(cfg["sigma"], "sigma")
    drift = None if cfg.get("drift") is None else _coeff_xt(cfg["drift"], "drift")
    try:
        return DiffusionSpec(sigma=sigma, drift=drift)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _mc(cfg):
    mc = cfg["mc"]
    return {
        "dt": _number(mc["dt"], "mc.dt", 0.0, strict_lo=True),
        "n_paths": _number(mc["n_paths"], "mc.n_paths", 1, integer=True),
        "seed": _number(mc["seed"], "mc.seed", 0, integer=True),
        "bridge": bool(mc["bridge"]),
    }


def _probes(cfg, width):
    probes = cfg["probes"]
    if not isinstance(probes, list) or not all(isinstance(p, list) and len(p) == width for p in probes):
        raise ConfigError(f"probes must be a list of {width}-element lists")
    return [[_number(v, "probe coordinate") for v in p] for p in probes]


def _grid(cfg, T, x_query, sigma_cap, drift_cap=0.0):
    g = cfg["grid"]
    n_x = _number(g["n_x"], "grid.n_x", 3, integer=True)
    n_t = _number(g["n_t"], "grid.n_t", 1, integer=True)
    if g["x_max"] is None:
        g["x_max"] = default_x_max(x_query, sigma_cap, T, drift_cap)
    x_max = _number(g["x_max"], "grid.x_max", 0.0, strict_lo=True)
    return Grid2D(x_max, n_x, T, n_t)


def _solver(cfg):
    s = cfg["solver"]
    kappa = s["kappa"]
    if kappa != "auto":
        kappa = _number(kappa, "solver.kappa", 0.0, strict_lo=True)
    return {
        "kappa": kappa,
        "tol": _number(s["tol"], "solver.tol", 0.0, strict_lo=True),
        "max_iter": _number(s["max_iter"], "solver.max_iter", 1, integer=True),
        "theta": _number(s["theta_scheme"], "solver.theta_scheme", 0.0, 1.0),
    }


def _controls(spec) -> ControlSet:
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError('controls must be {"interval": [lo, hi]} or {"points": [...]}')
    ((kind, val),) = spec.items()
    try:
        if kind == "interval":
            if not isinstance(val, list) or len(val) != 2:
                raise ConfigError("controls.interval must be [lo, hi]")
            return ControlSet.interval(_number(val[0], "interval lo"), _number(val[1], "interval hi"))
        if kind == "points":
            if not isinstance(val, list) or not val:
                raise ConfigError("controls.points must be a nonempty list")
            return ControlSet.finite([_number(v, "control point") for v in val])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown control set kind {kind!r}")


def _ham_coeffs(ham_cfg) -> HJBCoefficients:
    if not isinstance(ham_cfg, dict):
        raise ConfigError("hamiltonian must be an object with i, h, f, controls")
    unknown = sorted(set(ham_cfg) - {"i", "h", "f", "controls"})
    if unknown:
        raise ConfigError(f"unknown key(s) in hamiltonian: {', '.join(unknown)}")
    parts = {}
    for k in ("i", "h", "f"):
        c = _coeff(ham_cfg.get(k, "0"), f"hamiltonian.{k}", ("x", "t", "delta"))
        parts[k] = float(c()) if isinstance(c, CoeffExpr) and c.is_constant else c
    return HJBCoefficients(control_set=_controls(ham_cfg.get("controls", {"interval": [0.0, 1.0]})), **parts)


def _sup_on(func, x_max, T, n=201):
    x = np.linspace(0.0, x_max, n)
    t = np.linspace(0.0, T, 11)
    X, Tt = np.meshgrid(x, t, indexing="ij")
    if callable(func):
        return float(np.max(np.abs(np.broadcast_to(func(X, Tt), X.shape))))
    return abs(float(func))


# --- subcommands ----------------------------------------------------------


def _run_hitting_time(cfg, workers):
    spec = _spec(cfg)
    T = _number(cfg["T"], "T", 0.0, strict_lo=True)
    x = _number(cfg["x"], "x", 0.0)
    t = _number(cfg["t"], "t", 0.0, T)
    mc = _mc(cfg)
    summary = {"x": x, "t": t, "T": T}
    if x == 0.0 or t == T:
        # already on the parabolic boundary: tau ^ T = t with no randomness
        summary.update(n_paths=mc["n_paths"], dt=mc["dt"], mean_tau=t, stderr_tau=0.0, absorbed_fraction=1.0, mean_terminal=x)
    else:
        try:
            batch = simulate_paths(spec, x, t, T, mc["dt"], mc["n_paths"], mc["seed"], bridge=mc["bridge"], n_workers=workers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        summary.update(batch.summary())
    if cfg["sigma"] in ("1", 1, 1.0) and cfg["drift"] is None:
        summary["analytic_unit_bm"] = bm_stopped_time_analytic(x, t, T)
    return EXIT_OK, summary, {}, {}


def _run_solve_linear(cfg, workers):
    spec = _spec(cfg)
    T = _number(cfg["T"], "T", 0.0, strict_lo=True)
    probes = _probes(cfg, 2)
    xq = max([p[0] for p in probes] + [1.0])
    cap = _sup_on(spec.sigma, xq + 10.0, T)
    drift_cap = _sup_on(spec.drift, xq + 10.0, T) if spec.has_drift else 0.0
    grid = _grid(cfg, T, xq, cap, drift_cap)
    theta = _number(cfg["theta_scheme"], "theta_scheme", 0.0, 1.0)
    if cfg["farfield"] != "linear":
        raise ConfigError("farfield must be 'linear' for solve-linear")
    problem = LinearProblem(spec, _coeff_xt(cfg["source"], "source"), _coeff_xt(cfg["boundary"], "boundary"))
    try:
        spec.validate(grid.x_max, T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    u = solve_fd(problem, grid, theta=theta)
    trunc = truncation_probability(xq, grid.x_max, cap, T, drift_cap)
    summary = {
        "value_at_probes": [{"x": x, "t": t, "value": float(u.interpolate(x, t))} for x, t in probes],
        "grid": grid.to_dict(),
        "truncation_bound": trunc,
    }
    if cfg.get("mc") is not None:
        mc = _mc(cfg)
        rows = []
        for x, t in probes:
            if t >= T or x == 0.0:
                rows.append({"x": x, "t": t, "mean": float(u.interpolate(x, t)), "stderr": 0.0})
                continue
            m, s = evaluate_feynman_kac(problem, x, t, T, mc["dt"], mc["n_paths"], mc["seed"], mc["bridge"], workers)
            rows.append({"x": x, "t": t, "mean": m, "stderr": s})
        summary["mc"] = rows
    return EXIT_OK, summary, {"value.csv": u}, {"truncation_bound": trunc}


def _report_dict(report):
    d = report.to_dict()
    d.pop("grid", None)
    return d


def _run_solve_hjb(cfg, workers):
    spec = _spec(cfg)
    T = _number(cfg["T"], "T", 0.0, strict_lo=True)
    probes = _probes(cfg, 2)
    xq = max([p[0] for p in probes] + [1.0])
    cap = _sup_on(spec.sigma, xq + 10.0, T)
    drift_cap = _sup_on(spec.drift, xq + 10.0, T) if spec.has_drift else 0.0
    grid = _grid(cfg, T, xq, cap, drift_cap)
    solver = _solver(cfg)
    coeffs = _ham_coeffs(cfg["hamiltonian"])
    try:
        spec.validate(grid.x_max, T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    problem = SemilinearProblem(spec, coeffs, boundary=_coeff_xt(cfg["boundary"], "boundary"))
    u, policy, report = picard_solve(
        problem, grid, kappa=solver["kappa"], tol=solver["tol"], max_iter=solver["max_iter"], theta=solver["theta"], x_query=xq
    )
    summary = {
        "value_at_probes": [{"x": x, "t": t, "value": float(u.interpolate(x, t))} for x, t in probes],
        "grid": grid.to_dict(),
        "report": _report_dict(report),
    }
    files = {"value.csv": u}
    if policy is not None:
        files["policy.csv"] = policy.as_grid_function()
    status = EXIT_OK if report.converged else EXIT_NONCONVERGED
    return status, summary, files, {"kappa": report.kappa, "truncation_bound": report.truncation_bound}


def _dividend_model(cfg):
    try:
        g = _coeff(cfg["g"], "g", ("x",))
        sigma = _coeff_xt(cfg["sigma"], "sigma")
        util = _coeff(cfg["utility"], "utility", ("c", "x"))
        payoff = _coeff(cfg["payoff"], "payoff", ("x",))
        return dividend.DividendModel(
            g=g,
            sigma=sigma,
            r=_number(cfg["r"], "r", 0.0),
            utility=util if callable(util) else (lambda c, x, _v=util: np.full(np.broadcast(c, x).shape, _v)),
            payoff=payoff,
            m1=_number(cfg["m1"], "m1", 0.0),
            m2=_number(cfg["m2"], "m2", 0.0),
            T=_number(cfg["T"], "T", 0.0, strict_lo=True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _run_dividend(cfg, workers):
    model = _dividend_model(cfg)
    probes = _probes(cfg, 2)
    xq = max([p[0] for p in probes] + [1.0])
    spec = model.diffusion()
    cap = _sup_on(spec.sigma, xq + 10.0, model.T)
    drift_cap = float(np.max(np.abs(model.g(np.linspace(0.0, xq + 10.0, 201))))) + model.m2
    grid = _grid(cfg, model.T, xq, cap, drift_cap)
    solver = _solver(cfg)
    u, policy, report = dividend.solve(
        model, grid, kappa=solver["kappa"], tol=solver["tol"], max_iter=solver["max_iter"], theta=solver["theta"]
    )
    report.truncation_bound = truncation_probability(xq, grid.x_max, cap, model.T, drift_cap)
    mc = _mc(cfg)
    values, means, errs = [], [], []
    for x, t in probes:
        values.append({"x": x, "t": t, "value": float(u.interpolate(x, t))})
        if t >= model.T or x == 0.0:
            means.append(values[-1]["value"])
            errs.append(0.0)
            continue
        m, s = dividend.simulate_policy(model, policy, x, t, mc["dt"], mc["n_paths"], mc["seed"], workers, mc["bridge"])
        means.append(m)
        errs.append(s)
    summary = {
        "value_at_probes": values,
        "mc_value": means,
        "stderr": errs,
        "grid": grid.to_dict(),
        "report": _report_dict(report),
    }
    status = EXIT_OK if report.converged else EXIT_NONCONVERGED
    files = {"value.csv": u, "policy.csv": policy.as_grid_function()}
    return status, summary, files, {"kappa": report.kappa, "truncation_bound": report.truncation_bound}


def _run_consumption(cfg, workers):
    try:
        coeffs = {k: _coeff(cfg[k], k, ("y",)) for k in ("r", "b", "sigma_s", "a", "g_y")}
        model = consumption.MarketModel(
            **coeffs,
            rho=_number(cfg["rho"], "rho", -1.0, 1.0),
            y0=_number(cfg["y0"], "y0"),
            gamma=_number(cfg["gamma"], "gamma", 0.0, 1.0),
            w=_number(cfg["w"], "w", 0.0),
            T=_number(cfg["T"], "T", 0.0, strict_lo=True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    g = cfg["grid"]
    grid = Grid2D(
        _number(g["y_span"], "grid.y_span", 0.0, strict_lo=True),
        _number(g["n_y"], "grid.n_y", 3, integer=True),
        model.T,
        _number(g["n_t"], "grid.n_t", 1, integer=True),
    )
    bounds = cfg["bounds"]
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise ConfigError("bounds must be [m1, m2]")
    m1 = _number(bounds[0], "bounds[0]", 0.0, strict_lo=True)
    m2 = _number(bounds[1], "bounds[1]", m1)
    solver = _solver(cfg)
    probes = _probes(cfg, 3)
    try:
        G, used, report = consumption.solve_G(
            model,
            grid,
            bounds=(m1, m2),
            kappa=solver["kappa"],
            tol=solver["tol"],
            max_iter=solver["max_iter"],
            max_widenings=_number(cfg["max_widenings"], "max_widenings", 0, integer=True),
            theta=solver["theta"],
        )
    except ConvergenceError as exc:
        return EXIT_NONCONVERGED, {"status": "not converged", "error": str(exc)}, {}, {}
    pi, c = consumption.extract_policy(model, G)
    F = GridFunction(G.grid, np.power(G.values, model.constants.delta))
    mc = _mc(cfg)
    values, means, errs = [], [], []
    for x, y, t in probes:
        try:
            v = consumption.value_function(model, G, x, y, t)
        except ValueError as exc:
            raise ConfigError(f"probe ({x}, {y}, {t}): {exc}") from None
        values.append({"x": x, "y": y, "t": t, "value": v})
        m, s = consumption.simulate_consumption(
            model, pi, c, x, y, t, mc["dt"], mc["n_paths"], mc["seed"], workers, mc["bridge"]
        )
        means.append(m)
        errs.append(s)
    summary = {
        "value_probes": values,
        "mc_value": means,
        "stderr": errs,
        "transform_constants": model.constants.to_dict(),
        "bounds_used": list(used),
        "grid": grid.to_dict(),
        "report": _report_dict(report),
    }
    status = EXIT_OK if report.converged else EXIT_NONCONVERGED
    # value.csv and policy.csv hold F and c*, the same grids as F.csv and c.csv
    files = {"value.csv": F, "policy.csv": c, "G.csv": G, "F.csv": F, "pi.csv": pi, "c.csv": c}
    return status, summary, files, {"kappa": report.kappa, "bounds_used": list(used)}


def _lipschitz_scan(func, x_max, T, n_x, n_t):
    """Largest difference quotient in x of ``func`` on a dense grid, and its bounds."""
    x = np.linspace(0.0, x_max, n_x)
    lo, hi, lip = math.inf, -math.inf, 0.0
    for t in np.linspace(0.0, T, n_t):
        v = np.broadcast_to(np.asarray(func(x, np.full_like(x, t)), dtype=float), x.shape)
        if not np.all(np.isfinite(v)):
            raise ConfigError(f"coefficient is not finite on [0, {x_max}] at t={t:g}")
        lo, hi = min(lo, float(v.min())), max(hi, float(v.max()))
        lip = max(lip, float(np.max(np.abs(np.diff(v)) / np.diff(x))))
    return lo, hi, lip


def validate_assumptions(cfg, workers: int = 1) -> dict:
    """Measure the structural constants of a problem and flag violations."""
    T = _number(cfg["T"], "T", 0.0, strict_lo=True)
    x_max = _number(cfg["x_max"], "x_max", 0.0, strict_lo=True)
    n_x = _number(cfg["scan_points"], "scan_points", 3, integer=True)
    n_t = _number(cfg["time_points"], "time_points", 1, integer=True)
    floor = _number(cfg["sigma_floor"], "sigma_floor", 0.0, strict_lo=True)
    sigma = _coeff_xt(cfg["sigma"], "sigma")
    sig_f = sigma if callable(sigma) else (lambda x, t, _s=sigma: np.full(np.shape(x), _s))
    s_lo, s_hi, s_lip = _lipschitz_scan(sig_f, x_max, T, n_x, n_t)
    findings = []
    report = {
        "sigma": {"epsilon": s_lo, "sup": s_hi, "lipschitz": s_lip, "floor": floor},
        "findings": findings,
    }
    if s_lo < floor:
        findings.append(f"sigma floor violated: min sigma {s_lo:.6g} < {floor:g}")
    if cfg.get("drift") is not None:
        d = _coeff_xt(cfg["drift"], "drift")
        d_f = d if callable(d) else (lambda x, t, _s=d: np.full(np.shape(x), _s))
        lo, hi, lip = _lipschitz_scan(d_f, x_max, T, n_x, n_t)
        report["drift"] = {"inf": lo, "sup": hi, "lipschitz": lip}
    if cfg.get("boundary") is not None:
        b = _coeff_xt(cfg["boundary"], "boundary")
        b_f = b if callable(b) else (lambda x, t, _s=b: np.full(np.shape(x), _s))
        lo, hi, lip = _lipschitz_scan(b_f, x_max, T, n_x, n_t)
        report["boundary"] = {"inf": lo, "sup": hi, "lipschitz": lip}
    if cfg.get("hamiltonian") is not None:
        coeffs = _ham_coeffs(cfg["hamiltonian"])
        cs = coeffs.control_set
        deltas = np.asarray(cs.points) if cs.is_finite else np.linspace(cs.lower, cs.upper, 33)
        x = np.linspace(0.0, x_max, min(n_x, 1001))
        ham = {}
        for name in ("i", "h", "f"):
            func = getattr(coeffs, name)
            sup = 0.0
            for t in np.linspace(0.0, T, n_t):
                X, D = np.meshgrid(x, deltas, indexing="ij")
                v = np.broadcast_to(func(X, np.full_like(X, t), D), X.shape)
                if not np.all(np.isfinite(v)):
                    findings.append(f"hamiltonian.{name} is not finite on the sample grid")
                    break
                sup = max(sup, float(np.max(np.abs(v))))
            ham[name] = {"sup": sup}
        report["hamiltonian"] = ham
    mc = _mc(cfg)
    probe_x = cfg["probe_x"]
    bound = stopped_time_lipschitz_bound(0.0, T)
    report["hitting_lipschitz"] = {"unit_bound": bound, "x_values": probe_x}
    if s_lo <= 0:
        findings.append("hitting-time probe skipped: sigma is not bounded away from 0")
    else:
        try:
            spec = DiffusionSpec(sigma=sigma)
            res = hitting_lipschitz_probe(
                spec, probe_x, 0.0, T, mc["dt"], mc["n_paths"], mc["seed"], mc["bridge"], workers, full_output=True
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        # rescale the unit bound by the smallest volatility
        allowed = bound / s_lo + 5.0 * max(res["quotient_stderr"])
        report["hitting_lipschitz"].update(
            L=res["probe"], quotients=res["quotients"], quotient_stderr=res["quotient_stderr"], allowed=allowed
        )
        if res["probe"] > allowed:
            findings.append(f"hitting-time Lipschitz probe {res['probe']:.4g} exceeds {allowed:.4g}")
    report["pass"] = not findings
    return report


def _run_validate(cfg, workers):
    report = validate_assumptions(cfg, workers)
    for msg in report["findings"]:
        logger.warning("%s", msg)
    return EXIT_OK, report, {}, {}


RUNNERS = {
    "hitting-time": _run_hitting_time,
    "solve-linear": _run_solve_linear,
    "solve-hjb": _run_solve_hjb,
    "dividend": _run_dividend,
    "consumption": _run_consumption,
    "validate-assumptions": _run_validate,
}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def run(kind: str, raw_config: dict, out_dir: str, seed: int | None = None, workers: int = 1) -> int:
    """Run one subcommand and write its artifacts into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = None
    try:
        cfg = resolve_config(kind, raw_config, seed)
        status, summary, files, resolved = RUNNERS[kind](cfg, workers)
    except (ConfigError, ExprError) as exc:
        summary, status, files, resolved = {"status": "input error", "error": str(exc)}, EXIT_INPUT, {}, {}
    except ArithmeticError as exc:
        summary, status, files, resolved = {"status": "numerical failure", "error": str(exc)}, EXIT_NONCONVERGED, {}, {}
    else:
        summary.setdefault("status", "ok" if status == EXIT_OK else "not converged")
    summary["exit_code"] = status
    summary["kind"] = kind
    for name, gf in files.items():
        gf.to_csv(os.path.join(out_dir, name))
    _write(os.path.join(out_dir, "summary.json"), _dump(summary))
    if cfg is not None:
        echo = dict(cfg)
        if resolved:
            echo["resolved"] = resolved
        _write(os.path.join(out_dir, "resolved_config.json"), _dump(echo))
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="halfline-hjb", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    parser.add_argument("--out", default=".", help="output directory (default: current directory)")
    parser.add_argument("--seed", type=int, default=None, help="override mc.seed")
    parser.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo (results do not depend on it)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            os.makedirs(args.out, exist_ok=True)
            _write(os.path.join(args.out, "summary.json"), _dump({"status": "input error", "error": f"cannot read config: {exc}", "exit_code": EXIT_INPUT, "kind": args.subcommand}))
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_INPUT
        if not isinstance(raw, dict):
            raw = {"__not_an_object__": raw}
    status = run(args.subcommand, raw, args.out, seed=args.seed, workers=args.workers)
    if status == EXIT_INPUT:
        with open(os.path.join(args.out, "summary.json"), encoding="utf-8") as fh:
            print(f"error: {json.load(fh)['error']}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
