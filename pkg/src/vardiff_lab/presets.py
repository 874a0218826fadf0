"""
Named analytic geometries: swept surfaces for the action identity, strip
regions with known extremals for the eikonal checks, and periodic foliations
for wave-functional evolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import dblquad

from .curves import Curve, Foliation, ParamSurface
from .eikonal import StripRegion
from .models import LagrangianModel, PolynomialPotential, eval_lagrangian

HYPERBOLIC_MASS1 = LagrangianModel("scalar-hyperbolic", PolynomialPotential((0.0, 0.0, -0.5)))
ELLIPTIC_FREE = LagrangianModel("scalar-elliptic", PolynomialPotential((0.0,)))


def _identity(t):
    return t


def _warp(c):
    """Monotone map of [0, 1] onto itself: t + c t (1 - t), |c| < 1."""
    return lambda t: t + c * t * (1.0 - t)


@dataclass(frozen=True)
class SurfacePreset:
    """
    Surface x(tau, alpha), y(tau, alpha), z = g(x, y) over [0, 1] x [0, 1].

    ``g`` returns (z, z_x, z_y).  ``tau_map`` / ``alpha_map`` reparameterize
    the same geometric surface.
    """

    name: str
    definition: str
    fx: Callable
    fy: Callable
    g: Callable
    model: LagrangianModel = HYPERBOLIC_MASS1
    tau_map: Callable = _identity
    alpha_map: Callable = _identity

    def _xy(self, T, A):
        t, a = self.tau_map(T), self.alpha_map(A)
        return self.fx(t, a), self.fy(t, a)

    def surface(self, n_tau, n_alpha=None):
        n_alpha = n_tau if n_alpha is None else n_alpha
        t = np.linspace(0.0, 1.0, n_tau)
        a = np.linspace(0.0, 1.0, n_alpha)
        T, A = np.meshgrid(t, a, indexing="ij")
        X, Y = self._xy(T, A)
        X = np.broadcast_to(X, T.shape).astype(float)
        Y = np.broadcast_to(Y, T.shape).astype(float)
        Z = np.broadcast_to(self.g(X, Y)[0], T.shape).astype(float)
        return ParamSurface(X, Y, Z, 1.0)

    def exact_action(self, model=None, epsabs=1e-12, epsrel=1e-12):
        """Oriented integral of F over the (tau, alpha) square by adaptive quadrature."""
        model = self.model if model is None else model
        h = 1e-6

        def integrand(a, t):
            x, y = self._xy(t, a)
            xt = (self._xy(t + h, a)[0] - self._xy(t - h, a)[0]) / (2 * h)
            yt = (self._xy(t + h, a)[1] - self._xy(t - h, a)[1]) / (2 * h)
            xa = (self._xy(t, a + h)[0] - self._xy(t, a - h)[0]) / (2 * h)
            ya = (self._xy(t, a + h)[1] - self._xy(t, a - h)[1]) / (2 * h)
            z, zx, zy = self.g(x, y)
            return float(eval_lagrangian(model, x, y, z, zx, zy)) * (xt * ya - xa * yt)

        val, _ = dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel)
        return val


def _const_one(x, y):
    return 1.0 + 0.0 * x, 0.0 * x, 0.0 * x


def _wavy(x, y):
    return np.sin(2.0 * x) * np.cos(y), 2.0 * np.cos(2.0 * x) * np.cos(y), -np.sin(2.0 * x) * np.sin(y)


def _quadratic(x, y):
    return x * y + 0.5 * x * x, y + x, x


def _saddle(x, y):
    return 0.5 * (x * x - y * y), x, -y


_SHEAR_X = lambda t, a: t + 0.3 * a  # noqa: E731
_SHEAR_Y = lambda t, a: a + 0.2 * t * t  # noqa: E731
_SECTOR_X = lambda t, a: (1.0 + a) * np.cos(0.5 * np.pi * t)  # noqa: E731
_SECTOR_Y = lambda t, a: (1.0 + a) * np.sin(0.5 * np.pi * t)  # noqa: E731

SURFACES = {
    "flat-strip": SurfacePreset(
        "flat-strip", "x = tau, y = alpha, z = 1", lambda t, a: t, lambda t, a: a, _const_one
    ),
    "wavy-square": SurfacePreset(
        "wavy-square", "x = tau, y = alpha, z = sin(2x) cos(y)", lambda t, a: t, lambda t, a: a, _wavy
    ),
    "wavy-square-warped": SurfacePreset(
        "wavy-square-warped",
        "wavy-square with tau -> tau + 0.4 tau (1 - tau)",
        lambda t, a: t,
        lambda t, a: a,
        _wavy,
        tau_map=_warp(0.4),
    ),
    "sheared": SurfacePreset(
        "sheared",
        "x = tau + 0.3 alpha, y = alpha + 0.2 tau^2, z = xy + x^2 / 2",
        _SHEAR_X,
        _SHEAR_Y,
        _quadratic,
        model=ELLIPTIC_FREE,
    ),
    "sheared-warped": SurfacePreset(
        "sheared-warped",
        "sheared with alpha -> alpha + 0.5 alpha (1 - alpha), tau -> tau - 0.3 tau (1 - tau)",
        _SHEAR_X,
        _SHEAR_Y,
        _quadratic,
        model=ELLIPTIC_FREE,
        tau_map=_warp(-0.3),
        alpha_map=_warp(0.5),
    ),
    "annulus-sector": SurfacePreset(
        "annulus-sector",
        "x = (1 + alpha) cos(pi tau / 2), y = (1 + alpha) sin(pi tau / 2), z = (x^2 - y^2) / 2",
        _SECTOR_X,
        _SECTOR_Y,
        _saddle,
    ),
}

#: surfaces with nontrivial discretization error, used for convergence checks
IDENTITY_SURFACES = ("wavy-square", "wavy-square-warped", "sheared", "sheared-warped", "annulus-sector")


@dataclass(frozen=True)
class StripPreset:
    """Strip region between two straight vertical curves with a known extremal."""

    name: str
    definition: str
    model: LagrangianModel
    x0: float
    x1: float
    extremal: Callable  # (x, y) -> (z, z_x, z_y)
    exact_value: Optional[float] = None

    def region(self, n):
        def line(xc):
            return Curve.from_functions(
                lambda t: 0.0 * t + xc, lambda t: t, lambda t: self.extremal(0.0 * t + xc, t)[0], n
            )

        return StripRegion(line(self.x0), line(self.x1), lambda x, y: self.extremal(x, y)[0])

    def analytic_slopes(self, curve):
        _, zx, zy = self.extremal(curve.x, curve.y)
        return np.broadcast_to(zx, curve.x.shape).astype(float), np.broadcast_to(zy, curve.x.shape).astype(float)


def _xy_extremal(x, y):
    return x * y, y, x


def _plane_wave(x, y):
    return np.cos(x) + 0.0 * y, -np.sin(x) + 0.0 * y, 0.0 * x


def _unit(x, y):
    return 1.0 + 0.0 * x, 0.0 * x, 0.0 * x


STRIPS = {
    "harmonic-xy": StripPreset(
        "harmonic-xy",
        "elliptic, p = 0, strip [0, 1] x [0, 1], extremal z = xy",
        ELLIPTIC_FREE,
        0.0,
        1.0,
        _xy_extremal,
        1.0 / 3.0,
    ),
    "plane-wave": StripPreset(
        "plane-wave",
        "hyperbolic, p = -z^2 / 2, strip [-0.25, 0.25] x [0, 1], extremal z = cos x",
        HYPERBOLIC_MASS1,
        -0.25,
        0.25,
        _plane_wave,
        -0.5 * np.sin(0.5),
    ),
    "flat-strip": StripPreset(
        "flat-strip",
        "elliptic, p = z^2 / 2 - z, strip [0, 1] x [0, 1], extremal z = 1",
        LagrangianModel("scalar-elliptic", PolynomialPotential((0.0, -1.0, 0.5))),
        0.0,
        1.0,
        _unit,
        -0.5,
    ),
}


def flat_foliation(M, A=1.0, n_alpha=41):
    """Slices x = alpha, y = tau on a periodic chain of M sites."""
    return Foliation.from_functions(
        lambda T, Al: Al + 0.0 * T, lambda T, Al: T + 0.0 * Al, M, n_alpha, A=A, periodic=True, y_period=1.0
    )


def bulged_foliation(M, A=1.0, bulge=0.01, n_alpha=41):
    """Slices x = alpha + bulge sin(pi alpha / A) cos(2 pi tau); same end slices as the flat one."""
    return Foliation.from_functions(
        lambda T, Al: Al + bulge * np.sin(np.pi * Al / A) * np.cos(2.0 * np.pi * T),
        lambda T, Al: T + 0.0 * Al,
        M,
        n_alpha,
        A=A,
        periodic=True,
        y_period=1.0,
    )


FOLIATIONS = {
    "flat": "x = alpha, y = tau (periodic)",
    "bulged": "x = alpha + b sin(pi alpha / A) cos(2 pi tau), y = tau (periodic)",
}

_EXERCISES = {
    "flat-strip": "action identity (swept-surface propagation time equals the action)",
    "harmonic-xy": "boundary momenta from slopes vs eikonal gradient",
    "plane-wave": "scalar-field Hamilton-Jacobi equation",
    "wavy-square": "action identity",
    "wavy-square-warped": "action identity under reparameterization",
    "sheared": "action identity",
    "sheared-warped": "action identity under reparameterization",
    "annulus-sector": "action identity",
    "flat": "flat wave-functional evolution",
    "bulged": "foliation independence",
}


def list_presets():
    """Catalog of preset names with their definition and the relation each one exercises."""
    out = []
    for name, p in SURFACES.items():
        out.append({"name": name, "kind": "surface", "definition": p.definition, "exercises": _EXERCISES[name]})
    for name, p in STRIPS.items():
        out.append({"name": name, "kind": "strip", "definition": p.definition, "exercises": _EXERCISES[name]})
    for name, d in FOLIATIONS.items():
        out.append({"name": name, "kind": "foliation", "definition": d, "exercises": _EXERCISES[name]})
    return out


def format_presets(catalog=None):
    catalog = list_presets() if catalog is None else catalog
    w = max(len(c["name"]) for c in catalog)
    lines = []
    for c in catalog:
        lines.append(f"{c['name']:<{w}}  [{c['kind']}]  {c['definition']}")
        lines.append(f"{'':<{w}}  exercises: {c['exercises']}")
    return "\n".join(lines)
