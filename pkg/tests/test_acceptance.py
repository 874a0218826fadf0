"""
Acceptance criteria 1-9.  Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line
with the measured quantities, then asserts.
"""

import time

import numpy as np
import pytest

from vardiff_lab.action import action_integral, indicatrice_gradient, phi, propagation_time
from vardiff_lab.curves import Curve, Deformation, tangent
from vardiff_lab.eikonal import (
    boundary_variation,
    eikonal_value,
    hj_residual_generic,
    momenta_from_slopes,
    solve_extremal,
)
from vardiff_lab.models import LagrangianModel, PolynomialPotential
from vardiff_lab.presets import IDENTITY_SURFACES, STRIPS, SURFACES, flat_foliation
from vardiff_lab.quantum import (
    LatticeSlice,
    ZGrid,
    evolve,
    fidelity,
    gaussian_free_evolution,
    gaussian_state,
    overlap,
    reparameterization_invariance_check,
    to_grid,
)
from vardiff_lab.runner import ExperimentConfig, fit_order, run

MASS1 = PolynomialPotential((0.0, 0.0, -0.5))


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def test_criterion_1_action_identity(report):
    t0 = time.perf_counter()
    ladder = [65, 129, 257]
    rows, ok = [], True
    for name in IDENTITY_SURFACES:
        p = SURFACES[name]
        exact = p.exact_action()
        errs, gap65 = [], None
        for N in ladder:
            s = p.surface(N)
            T = propagation_time(p.model, s)
            if N == 65:
                gap65 = abs(T - action_integral(p.model, s))
            errs.append(abs(T - exact))
        order = fit_order([1.0 / (N - 1) for N in ladder], errs)["order"]
        good = gap65 <= 1e-3 and order >= 1.8
        ok &= good
        rows.append(f"{name}: |T-J|={gap65:.1e} order={order:.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10.0
    assert report(1, ok, "; ".join(rows) + f"; {elapsed:.1f}s"), rows


def test_criterion_2_euler_homogeneity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(100):
        m = LagrangianModel(("scalar-hyperbolic", "scalar-elliptic")[k % 2], PolynomialPotential(tuple(rng.normal(size=3))))
        a, b, c = rng.uniform(-0.5, 0.5, size=3)
        n = int(rng.integers(9, 40))
        curve = Curve.from_functions(lambda t: a * t * t, lambda t: t, lambda t: b + c * np.sin(2 * t), n)
        t = curve.tau
        cx, cy, cz = rng.normal(size=(3, 3))
        defo = Deformation(
            rng.uniform(0.5, 2.0) + 0.2 * np.sin(cx[0] + 3 * t),
            cy[0] * t + cy[1] * t * t,
            cz[0] + cz[1] * np.cos(t) + cz[2] * t,
        )
        val = phi(m, curve, defo)
        g = indicatrice_gradient(m, curve, defo)
        worst = max(worst, abs(g.contract(curve, defo) - val) / max(abs(val), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5.0
    assert report(2, ok, f"max relative error {worst:.1e} over 100 cases; {elapsed:.1f}s")


def _run(tmp_path, cfg, jobs=3):
    return run(ExperimentConfig.from_dict(cfg), out=str(tmp_path), jobs=jobs)


def test_criterion_3_momenta_vs_fd(report, tmp_path):
    t0 = time.perf_counter()
    rows, ok = [], True
    for name in ("harmonic-xy", "plane-wave"):
        r = _run(tmp_path / name, {"suite": "eikonal-verify", "geometry": {"preset": name}, "resolutions": [17, 33, 65]})
        errs = [c["values"]["max_fd_relative"] for c in r["cases"]]
        order = fit_order([1 / 16, 1 / 32, 1 / 64], errs)["order"]
        good = errs[-1] <= 0.02 and order >= 1.5
        ok &= good
        rows.append(f"{name}: rel@65={errs[-1]:.2e} order={order:.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    assert report(3, ok, "; ".join(rows) + f"; {elapsed:.1f}s")


def test_criterion_4_constraint(report, tmp_path):
    rows, ok = [], True
    for name in ("harmonic-xy", "plane-wave"):
        r = _run(tmp_path / name, {"suite": "eikonal-verify", "geometry": {"preset": name}, "resolutions": [17, 33, 65]})
        an = max(c["values"]["max_constraint_analytic"] for c in r["cases"])
        fd = [c["values"]["max_constraint_fd"] for c in r["cases"]]
        good = an <= 1e-12 and fd[-1] <= 5e-3 and all(b < a for a, b in zip(fd, fd[1:]))
        ok &= good
        rows.append(f"{name}: analytic={an:.1e} fd={', '.join(f'{v:.1e}' for v in fd)}")
    assert report(4, ok, "; ".join(rows))


def test_criterion_5_hamilton_jacobi(report, tmp_path):
    r = _run(tmp_path, {"suite": "hj-verify", "geometry": {"preset": "plane-wave"}, "resolutions": [65]}, jobs=1)
    res = r["cases"][0]["residuals"]
    rng = np.random.default_rng(5)
    c = Curve.from_functions(lambda t: 0.4 * t * t, lambda t: t, lambda t: np.exp(t), 33)
    xd, yd, zd = tangent(c)
    roundtrip = 0.0
    for kind in ("scalar-hyperbolic", "scalar-elliptic"):
        m = LagrangianModel(kind, PolynomialPotential((0.0, 0.3, -0.5)))
        zx = rng.normal(size=c.n)
        rx, ry = hj_residual_generic(m, c, momenta_from_slopes(m, c, zx, (zd - xd * zx) / yd))
        roundtrip = max(roundtrip, np.max(np.abs(rx)), np.max(np.abs(ry)))
    ok = res["hj_analytic"] <= 1e-12 and res["hj_numeric"] <= 1e-3 and roundtrip <= 1e-12
    detail = f"analytic={res['hj_analytic']:.1e} numeric={res['hj_numeric']:.1e} round-trip={roundtrip:.1e}"
    assert report(5, ok, detail)


def test_criterion_6_boundary_variation(report):
    p = STRIPS["harmonic-xy"]
    m = p.model
    region = p.region(33)
    ex = solve_extremal(m, region, (65, 65))
    S0 = ex.action()
    t = region.C1.tau
    n = region.C1.n
    zero = np.zeros(n)
    shapes = {
        "z-bump": Deformation(zero, zero, np.sin(np.pi * t) ** 2),
        "x-bump": Deformation(np.sin(np.pi * t), zero, zero),
        "mixed": Deformation(0.5 * np.sin(2 * np.pi * t), zero, t * (1 - t) * np.cos(t)),
    }
    a = 1e-4
    rows, ok = [], True
    for name, d in shapes.items():
        pred = a * boundary_variation(m, ex, d)
        actual = eikonal_value(m, region.perturbed(d, a), (65, 65)) - S0
        rel = abs(actual - pred) / abs(pred)
        ok &= rel <= 0.01
        rows.append(f"{name}: rel={rel:.1e}")
    xd, yd, zd = tangent(region.C1)
    bump = np.sin(np.pi * t)
    tang = abs(boundary_variation(m, ex, Deformation(xd * bump, yd * bump, zd * bump)))
    ok &= tang <= 1e-10
    assert report(6, ok, "; ".join(rows) + f"; tangential={tang:.1e}")


def test_criterion_7_flat_evolution(report):
    t0 = time.perf_counter()
    s1 = LatticeSlice.flat(1, MASS1)
    st1 = to_grid(gaussian_state(s1), ZGrid.for_slice(s1, G=128))
    out1, rep1 = evolve(st1, flat_foliation(1), 1000)
    # ground energy of the single site is 1/2
    phase = abs(np.angle(overlap(st1, out1) * np.exp(0.5j)))
    drift = float(np.max(np.abs(rep1.norm_drift)))

    s2 = LatticeSlice.flat(2, MASS1)
    g2 = gaussian_state(s2, q=[0.3, -0.2], mom=[0.2, 0.1])
    st2 = to_grid(g2, ZGrid.for_slice(s2, G=64))
    out2, _ = evolve(st2, flat_foliation(2), 2000)
    inf = 1 - fidelity(out2, to_grid(gaussian_free_evolution(g2, flat_foliation(2)), st2.grid))
    elapsed = time.perf_counter() - t0
    ok = phase <= 1e-4 and drift <= 1e-8 and inf <= 1e-4 and elapsed < 60.0
    assert report(7, ok, f"M=1 phase={phase:.1e} norm drift={drift:.1e}; M=2 infidelity={inf:.1e}; {elapsed:.1f}s")


def test_criterion_8_foliation_independence(report, tmp_path):
    t0 = time.perf_counter()
    cfg = {
        "suite": "quantum-evolve",
        "resolutions": [100, 200, 400],
        "quantum": {
            "M": 2,
            "G": 64,
            "foliation": "bulged",
            "bulge": 0.01,
            "tol_step": None,
            "initial": {"kernel_scale": [[1.5, 0.2], [0.2, 0.8]], "q": [0.3, -0.2], "mom": [0.5, 0.1]},
        },
    }
    r = _run(tmp_path, cfg)
    inf = [c["values"]["path_infidelity"] for c in r["cases"]]
    elapsed = time.perf_counter() - t0
    ok = inf[-1] <= 1e-3 and all(b <= a for a, b in zip(inf, inf[1:])) and elapsed < 300.0
    assert report(8, ok, f"1-F at 100/200/400 steps = {', '.join(f'{v:.3e}' for v in inf)}; {elapsed:.1f}s")


def test_criterion_9_reparameterization(report):
    s = LatticeSlice.flat(3, MASS1)
    st = to_grid(gaussian_state(s, q=[0.3, -0.2, 0.1], mom=[0.2, 0.1, 0.0]), ZGrid.for_slice(s, G=16))
    amps = np.array([4e-3, 2e-3, 1e-3])
    devs = np.array([reparameterization_invariance_check(st, a) for a in amps])
    order = np.polyfit(np.log(amps), np.log(devs), 1)[0]
    ok = devs[-1] <= 1e-2 and abs(order - 1.0) <= 0.1
    detail = f"deviation at 1e-3 = {devs[-1]:.1e}; amplitude order {order:.3f}"
    assert report(9, ok, detail)
