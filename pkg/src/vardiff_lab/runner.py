"""
Declarative experiment runner: strict JSON configs, verification suites,
deterministic reports.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .action import action_integral, propagation_time
from .curves import Curve, ParamSurface
from .eikonal import (
    StripRegion,
    constraint_residual,
    fd_momenta,
    hj_residual_generic,
    hj_residual_scalar_field,
    momenta_from_slopes,
    solve_extremal,
)
from .errors import ConfigError
from .models import LagrangianModel
from .presets import STRIPS, SURFACES, bulged_foliation, flat_foliation

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUITES = ("action-check", "eikonal-verify", "hj-verify", "quantum-evolve", "convergence")

DEFAULT_TOLERANCES = {
    "action-check": {"t_minus_j": 1e-3},
    "eikonal-verify": {"fd_relative": 0.02, "constraint_analytic": 1e-12, "constraint_fd": 5e-3},
    "hj-verify": {"hj_analytic": 1e-12, "hj_numeric": 1e-3, "generic_roundtrip": 1e-12},
    "convergence": {"order_min": 1.5, "order_max": 2.5},
    "quantum-evolve": {"norm_drift": 1e-8, "phase": 1e-4, "infidelity": 1e-4, "path_infidelity": 1e-3},
}

_TOP_KEYS = {"suite", "model", "geometry", "resolutions", "output", "seed", "tolerances", "quantum", "h_fd"}
_GEOMETRY_KEYS = {"preset", "curves", "surface"}
_QUANTUM_KEYS = {"M", "G", "L", "fd_order", "steps", "scheme", "foliation", "bulge", "A", "initial", "tol_step"}
_INITIAL_KEYS = {"kernel_scale", "q", "mom"}
_QUANTUM_DEFAULTS = {
    "M": 1,
    "G": 128,
    "L": 8.0,
    "fd_order": 4,
    "steps": 1000,
    "scheme": "crank-nicolson",
    "foliation": "flat",
    "bulge": 0.01,
    "A": 1.0,
    "initial": {},
    "tol_step": 1e-8,
}


def _reject_unknown(d, allowed, prefix=""):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object", key=prefix or None)
    unknown = sorted(set(d) - allowed)
    if unknown:
        key = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigError(f"unknown key '{key}'", key=key)


def _number_list(v, key):
    if not isinstance(v, list) or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        raise ConfigError(f"{key} must be a list of numbers", key=key)
    return [float(a) for a in v]


@dataclass
class ExperimentConfig:
    suite: str
    model: LagrangianModel | None
    geometry: dict
    resolutions: list
    output: str | None = None
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    quantum: dict = field(default_factory=dict)
    h_fd: float = 1e-4
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, _TOP_KEYS)
        if "suite" not in d:
            raise ConfigError("missing key 'suite'", key="suite")
        suite = d["suite"]
        if suite not in SUITES:
            raise ConfigError(f"suite must be one of {SUITES}, got {suite!r}", key="suite")
        model = LagrangianModel.from_config(d["model"]) if "model" in d else None

        geometry = d.get("geometry", {})
        _reject_unknown(geometry, _GEOMETRY_KEYS, "geometry")
        if suite != "quantum-evolve":
            if len(geometry) != 1:
                raise ConfigError("geometry needs exactly one of 'preset', 'curves', 'surface'", key="geometry")
            if "preset" in geometry:
                name = geometry["preset"]
                catalog = SURFACES if suite == "action-check" else {**STRIPS, **SURFACES}
                if suite in ("eikonal-verify", "hj-verify"):
                    catalog = STRIPS
                if name not in catalog:
                    raise ConfigError(f"unknown preset {name!r} for suite {suite}", key="geometry.preset")
            if "curves" in geometry:
                _reject_unknown(geometry["curves"], {"C0", "C1"}, "geometry.curves")
                for c in ("C0", "C1"):
                    if c not in geometry["curves"]:
                        raise ConfigError(f"missing key 'geometry.curves.{c}'", key=f"geometry.curves.{c}")
                    _reject_unknown(geometry["curves"][c], {"x", "y", "z"}, f"geometry.curves.{c}")
                    for k in ("x", "y", "z"):
                        _number_list(geometry["curves"][c].get(k), f"geometry.curves.{c}.{k}")
                if model is None:
                    raise ConfigError("inline geometry needs 'model'", key="model")
            if "surface" in geometry:
                _reject_unknown(geometry["surface"], {"x", "y", "z", "A"}, "geometry.surface")
                if model is None:
                    raise ConfigError("inline geometry needs 'model'", key="model")

        res = d.get("resolutions", [17, 33, 65] if suite != "quantum-evolve" else [])
        if not isinstance(res, list) or not all(isinstance(r, int) and not isinstance(r, bool) for r in res):
            raise ConfigError("resolutions must be a list of integers", key="resolutions")
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError("resolutions must be strictly increasing", key="resolutions")
        if any(r < 3 for r in res):
            raise ConfigError("resolutions must be >= 3", key="resolutions")
        if suite in ("eikonal-verify", "hj-verify", "convergence") and "preset" in geometry and geometry["preset"] in STRIPS:
            if any(r < 17 or (r - 1) % 2 for r in res):
                raise ConfigError("strip resolutions must be odd and >= 17", key="resolutions")

        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer", key="seed")
        output = d.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output must be a string", key="output")

        tol = dict(DEFAULT_TOLERANCES[suite])
        user_tol = d.get("tolerances", {})
        _reject_unknown(user_tol, set(tol), "tolerances")
        for k, v in user_tol.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"tolerances.{k} must be a number", key=f"tolerances.{k}")
            tol[k] = float(v)

        quantum = {}
        if suite == "quantum-evolve":
            q = d.get("quantum", {})
            _reject_unknown(q, _QUANTUM_KEYS, "quantum")
            quantum = {**_QUANTUM_DEFAULTS, **q}
            _reject_unknown(quantum["initial"], _INITIAL_KEYS, "quantum.initial")
            if quantum["scheme"] not in ("crank-nicolson", "rk4"):
                raise ConfigError("quantum.scheme must be 'crank-nicolson' or 'rk4'", key="quantum.scheme")
            if quantum["foliation"] not in ("flat", "bulged"):
                raise ConfigError("quantum.foliation must be 'flat' or 'bulged'", key="quantum.foliation")
            if not isinstance(quantum["M"], int) or not 1 <= quantum["M"] <= 4:
                raise ConfigError("quantum.M must be an integer in [1, 4]", key="quantum.M")
            if quantum["fd_order"] not in (2, 4):
                raise ConfigError("quantum.fd_order must be 2 or 4", key="quantum.fd_order")
            ks = np.asarray(quantum["initial"].get("kernel_scale", 1.0))
            if ks.dtype.kind not in "if" or ks.shape not in ((), (quantum["M"], quantum["M"])):
                raise ConfigError("quantum.initial.kernel_scale must be a number or an M x M matrix", key="quantum.initial.kernel_scale")
            for k in ("q", "mom"):
                if k in quantum["initial"]:
                    v = _number_list(quantum["initial"][k], f"quantum.initial.{k}")
                    if len(v) != quantum["M"]:
                        raise ConfigError(f"quantum.initial.{k} must have M entries", key=f"quantum.initial.{k}")
        elif "quantum" in d:
            raise ConfigError("'quantum' is only valid for suite quantum-evolve", key="quantum")

        h_fd = d.get("h_fd", 1e-4)
        if not isinstance(h_fd, (int, float)) or h_fd <= 0:
            raise ConfigError("h_fd must be a positive number", key="h_fd")
        return cls(suite, model, geometry, res, output, seed, tol, quantum, float(h_fd), raw=d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d)

    def digest(self):
        echo = {k: v for k, v in self.raw.items() if k != "output"}
        return hashlib.sha256(json.dumps(echo, sort_keys=True).encode()).hexdigest()


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=float).encode()).hexdigest()[:16]


def fit_order(hs, errs, confidence=0.95):
    """Least-squares slope of log(err) against log(h) with a t-interval."""
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    if len(hs) < 2 or np.any(errs <= 0):
        return {"order": None, "ci": None}
    if len(hs) == 2:
        return {"order": float(np.log(errs[1] / errs[0]) / np.log(hs[1] / hs[0])), "ci": None}
    r = stats.linregress(np.log(hs), np.log(errs))
    half = stats.t.ppf(0.5 + confidence / 2.0, len(hs) - 2) * r.stderr
    return {"order": float(r.slope), "ci": [float(r.slope - half), float(r.slope + half)]}


# -- cases ------------------------------------------------------------------


def _strip_region(cfg, N):
    g = cfg["geometry"]
    if "preset" in g:
        p = STRIPS[g["preset"]]
        return p.region((N - 1) // 2 + 1), p
    c = g["curves"]
    C0 = Curve(c["C0"]["x"], c["C0"]["y"], c["C0"]["z"])
    C1 = Curve(c["C1"]["x"], c["C1"]["y"], c["C1"]["z"])
    return StripRegion(C0, C1), None


def _model(cfg, preset):
    if cfg["model"] is not None:
        return LagrangianModel.from_config(cfg["model"])
    return preset.model


def _case_action(cfg, N):
    g = cfg["geometry"]
    exact = None
    if "preset" in g:
        p = SURFACES[g["preset"]]
        model = _model(cfg, p)
        surf = p.surface(N)
        exact = p.exact_action(model)
    else:
        s = g["surface"]
        model = _model(cfg, None)
        surf = ParamSurface(s["x"], s["y"], s["z"], s.get("A", 1.0))
    T = propagation_time(model, surf)
    J = action_integral(model, surf)
    values = {"T": T, "J": J, "J_exact": exact, "t_minus_j": abs(T - J)}
    if exact is not None:
        values["error_vs_exact"] = abs(T - exact)
    passed = values["t_minus_j"] <= cfg["tolerances"]["t_minus_j"]
    return values, {"t_minus_j": values["t_minus_j"]}, passed, None


def _momenta_comparison(model, region, preset, N, h_fd):
    ex = solve_extremal(model, region, (N, N))
    if preset is not None:
        analytic = momenta_from_slopes(model, region.C1, *preset.analytic_slopes(region.C1))
    else:
        analytic = ex.boundary_momenta()
    fd = fd_momenta(model, region, (N, N), h_fd=h_fd)
    return ex, analytic, fd


def _relative(fd, analytic):
    A, F = analytic.as_array()[1:-1], fd.as_array()[1:-1]
    scale = np.max(np.abs(A), axis=1)
    return np.max(np.abs(F - A), axis=1) / scale


def _hj(model, curve, momenta):
    if model.kind == "scalar-hyperbolic":
        return hj_residual_scalar_field(curve, momenta, model.potential)
    rx, ry = hj_residual_generic(model, curve, momenta)
    return np.hypot(rx, ry)


def _case_eikonal(cfg, N):
    region, preset = _strip_region(cfg, N)
    model = _model(cfg, preset)
    tol = cfg["tolerances"]
    ex, analytic, fd = _momenta_comparison(model, region, preset, N, cfg["h_fd"])
    rel = _relative(fd, analytic)
    c_an = np.abs(constraint_residual(region.C1, analytic))
    c_fd = np.abs(constraint_residual(region.C1, fd))[1:-1]
    hj = _hj(model, region.C1, analytic)
    values = {
        "S": ex.action(),
        "newton_steps": ex.newton_steps,
        "max_fd_relative": float(rel.max()),
        "max_constraint_analytic": float(c_an.max()),
        "max_constraint_fd": float(c_fd.max()),
    }
    residuals = {"fd_relative": values["max_fd_relative"], "constraint_analytic": values["max_constraint_analytic"], "constraint_fd": values["max_constraint_fd"]}
    passed = all(residuals[k] <= tol[k] for k in residuals)
    rows = []
    a, f = analytic.as_array(), fd.as_array()
    for i in range(region.C1.n):
        rows.append([region.C1.tau[i], *a[i], *f[i], hj[i], constraint_residual(region.C1, fd)[i]])
    table = (["tau", "analytic_px", "analytic_py", "analytic_pz", "fd_px", "fd_py", "fd_pz", "hj_residual", "constraint_residual"], rows)
    return values, residuals, passed, table


def _case_hj(cfg, N):
    region, preset = _strip_region(cfg, N)
    model = _model(cfg, preset)
    tol = cfg["tolerances"]
    ex = solve_extremal(model, region, (N, N))
    numeric = ex.boundary_momenta()
    analytic = numeric if preset is None else momenta_from_slopes(model, region.C1, *preset.analytic_slopes(region.C1))
    hj_an = np.abs(_hj(model, region.C1, analytic))
    hj_num = np.abs(_hj(model, region.C1, numeric))
    rx, ry = hj_residual_generic(model, region.C1, analytic)
    residuals = {
        "hj_analytic": float(hj_an.max()),
        "hj_numeric": float(hj_num.max()),
        "generic_roundtrip": float(max(np.abs(rx).max(), np.abs(ry).max())),
    }
    passed = all(residuals[k] <= tol[k] for k in residuals)
    rows = [[region.C1.tau[i], *analytic.as_array()[i], *numeric.as_array()[i], hj_an[i], hj_num[i]] for i in range(region.C1.n)]
    table = (["tau", "analytic_px", "analytic_py", "analytic_pz", "numeric_px", "numeric_py", "numeric_pz", "hj_residual", "hj_residual_numeric"], rows)
    return {"S": ex.action(), **residuals}, residuals, passed, table


def _case_convergence(cfg, N):
    g = cfg["geometry"]
    if "preset" in g and g["preset"] in SURFACES:
        values, _, _, _ = _case_action(cfg, N)
        return {"error": values["error_vs_exact"], **values}, {}, True, None
    region, preset = _strip_region(cfg, N)
    model = _model(cfg, preset)
    _, analytic, fd = _momenta_comparison(model, region, preset, N, cfg["h_fd"])
    rel = _relative(fd, analytic)
    return {"error": float(rel.max())}, {}, True, None


def _quantum_state(cfg):
    from .models import PolynomialPotential
    from .quantum import LatticeSlice, ZGrid, gaussian_state, ground_kernel, to_grid

    q = cfg["quantum"]
    pot = LagrangianModel.from_config(cfg["model"]).potential if cfg["model"] else PolynomialPotential((0.0, 0.0, -0.5))
    s = LatticeSlice.flat(q["M"], pot)
    init = q["initial"]
    K = ground_kernel(s) * np.asarray(init.get("kernel_scale", 1.0), dtype=float)
    g = gaussian_state(s, K=K, q=init.get("q"), mom=init.get("mom"))
    grid = ZGrid.for_slice(s, q["G"], q["L"], q["fd_order"])
    return g, to_grid(g, grid)


def _case_quantum(cfg, steps, outdir=None, index=0):
    from .quantum import evolve, fidelity, gaussian_free_evolution, overlap, to_grid, write_snapshot

    q = cfg["quantum"]
    tol = cfg["tolerances"]
    g, st = _quantum_state(cfg)
    flat = flat_foliation(q["M"], q["A"])
    tol_step = q["tol_step"]
    if q["foliation"] == "flat":
        out, rep = evolve(st, flat, steps, q["scheme"], tol_step=tol_step)
        values = {"max_norm_drift": float(np.max(np.abs(rep.norm_drift))), "max_energy_drift": float(np.max(np.abs(rep.energy_drift)))}
        residuals = {"norm_drift": values["max_norm_drift"]}
        if st.slice.potential.is_quadratic_mass():
            exact = to_grid(gaussian_free_evolution(g, flat), st.grid)
            values["infidelity"] = 1.0 - fidelity(out, exact)
            values["phase_error"] = abs(float(np.angle(overlap(exact, out))))
            residuals.update(infidelity=values["infidelity"], phase=values["phase_error"])
    else:
        if st.slice.potential.is_quadratic_mass():
            ref = to_grid(gaussian_free_evolution(g, flat), st.grid)
        else:
            ref, _ = evolve(st, flat, steps, q["scheme"], tol_step=tol_step)
        out, rep = evolve(st, bulged_foliation(q["M"], q["A"], q["bulge"]), steps, q["scheme"], tol_step=tol_step)
        values = {
            "path_infidelity": 1.0 - fidelity(out, ref),
            "max_norm_drift": float(np.max(np.abs(rep.norm_drift))),
            "max_condition_number": float(np.max(rep.condition_numbers)),
        }
        residuals = {"path_infidelity": values["path_infidelity"]}
    passed = all(residuals[k] <= tol[k] for k in residuals)
    if outdir is not None:
        write_snapshot(os.path.join(outdir, f"case-{index:02d}-final.bin"), out)
        with open(os.path.join(outdir, f"case-{index:02d}-evolution.json"), "w") as fh:
            json.dump(rep.to_dict(), fh, sort_keys=True, indent=1)
    return values, residuals, passed, None


_CASES = {
    "action-check": _case_action,
    "eikonal-verify": _case_eikonal,
    "hj-verify": _case_hj,
    "convergence": _case_convergence,
}


def _run_case(args):
    cfg, res, index, outdir = args
    if cfg["suite"] == "quantum-evolve":
        values, residuals, passed, table = _case_quantum(cfg, res, outdir, index)
    else:
        values, residuals, passed, table = _CASES[cfg["suite"]](cfg, res)
    return values, residuals, passed, table


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def run(config, out=None, jobs=1):
    """
    Execute ``config`` and write report.json, metadata.json and case files to ``out``.

    Returns the report dictionary; ``report['passed']`` is the overall verdict.
    """
    out = out or config.output or "vardiff-out"
    os.makedirs(out, exist_ok=True)
    np.random.seed(config.seed)
    cfg = {
        "suite": config.suite,
        "model": config.model.to_config() if config.model is not None else None,
        "geometry": config.geometry,
        "tolerances": config.tolerances,
        "quantum": config.quantum,
        "h_fd": config.h_fd,
    }
    resolutions = config.resolutions
    if config.suite == "quantum-evolve" and not resolutions:
        resolutions = [config.quantum["steps"]]
    if "curves" in config.geometry or "surface" in config.geometry:
        resolutions = resolutions[-1:] if config.suite != "action-check" or "curves" in config.geometry else [0]

    tasks = [(cfg, r, k, out) for k, r in enumerate(resolutions)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_case, tasks))
    else:
        results = [_run_case(t) for t in tasks]

    digest = config.digest()
    cases = []
    for k, (r, (values, residuals, passed, table)) in enumerate(zip(resolutions, results)):
        name = f"case-{k:02d}"
        inputs = {"suite": config.suite, "resolution": r, "geometry": config.geometry}
        record = {
            "index": k,
            "name": name,
            "resolution": r,
            "inputs_digest": _digest(inputs),
            "config_digest": digest,
            "values": _clean(values),
            "residuals": _clean(residuals),
            "tolerances": {key: config.tolerances[key] for key in residuals},
            "passed": bool(passed),
        }
        if table is not None:
            path = os.path.join(out, f"{name}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(table[0])
                for row in table[1]:
                    w.writerow([repr(float(v)) for v in row])
            record["csv"] = os.path.basename(path)
        cases.append(record)
        log.info("%s resolution=%s passed=%s", name, r, passed)

    convergence = []
    if config.suite == "convergence":
        hs = [1.0 / (r - 1) for r in resolutions]
        errs = [c["values"]["error"] for c in cases]
        fit = fit_order(hs, errs)
        lo, hi = config.tolerances["order_min"], config.tolerances["order_max"]
        ok = fit["order"] is not None and lo <= fit["order"] <= hi
        convergence.append({"quantity": "error", "resolutions": resolutions, "errors": errs, **fit, "tolerance": [lo, hi], "passed": bool(ok)})
    elif config.suite == "quantum-evolve" and config.quantum["foliation"] == "bulged" and len(cases) > 1:
        inf = [c["values"]["path_infidelity"] for c in cases]
        ok = all(b <= a for a, b in zip(inf, inf[1:]))
        convergence.append({"quantity": "path_infidelity", "steps": resolutions, "values": inf, "improving": ok, "passed": ok})

    passed = all(c["passed"] for c in cases) and all(c["passed"] for c in convergence)
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config.raw,
        "config_digest": digest,
        "versions": {"vardiff_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
        "cases": cases,
        "convergence": convergence,
        "passed": passed,
    }
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(_clean(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out, "metadata.json"), "w") as fh:
        json.dump({"timestamp": datetime.now(timezone.utc).isoformat(), "jobs": jobs, "out": os.path.abspath(out)}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report
