"""
Sampled curves in 3-space, deformations, parameterized surfaces and
planar foliations.

All parameter grids are uniform.  Fixed-endpoint curves sample tau on
[0, 1] inclusive; periodic curves sample [0, 1) and may carry a constant
``shift`` so that ``C(tau + 1) = C(tau) + shift`` (a closed spatial circle
drawn as a straight line, for instance).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateJacobian, NonMonotoneMap

FIXED = "fixed-endpoints"
PERIODIC = "periodic"

EPS_TAN = 1e-8
EPS_JAC = 1e-8
EPS_LIGHT = 1e-6


def tau_grid(n, mode=FIXED):
    if mode == PERIODIC:
        return np.arange(n) / n
    return np.linspace(0.0, 1.0, n)


def quadrature_weights(n, mode=FIXED):
    """Trapezoid weights (rectangle rule for periodic grids), without the step."""
    w = np.ones(n)
    if mode != PERIODIC:
        w[0] = w[-1] = 0.5
    return w


def periodic_derivative(v, h, shift=0.0):
    """Second-order central difference on a periodic grid with additive shift."""
    v = np.asarray(v, dtype=float)
    fwd = np.roll(v, -1, axis=0)
    bwd = np.roll(v, 1, axis=0)
    fwd[-1] += shift
    bwd[0] -= shift
    return (fwd - bwd) / (2.0 * h)


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    boundary_mode: str = FIXED
    shift: tuple = (0.0, 0.0, 0.0)
    eps_tan: float = EPS_TAN

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        self.y = np.array(self.y, dtype=float)
        self.z = np.array(self.z, dtype=float)
        self.shift = tuple(float(s) for s in self.shift)
        if self.boundary_mode not in (FIXED, PERIODIC):
            raise ValueError(f"boundary_mode must be {FIXED!r} or {PERIODIC!r}")
        if not (self.x.shape == self.y.shape == self.z.shape) or self.x.ndim != 1:
            raise ValueError("x, y, z must be 1-D arrays of equal length")
        if self.n < 5:
            raise ValueError(f"a curve needs at least 5 samples, got {self.n}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.z))):
            raise ValueError("curve samples must be finite")
        xd, yd, _ = tangent(self)
        speed = np.abs(xd) + np.abs(yd)
        if np.min(speed) < self.eps_tan:
            i = int(np.argmin(speed))
            raise ValueError(f"planar projection is not immersed at sample {i}")

    @classmethod
    def from_functions(cls, fx, fy, fz, n, boundary_mode=FIXED, shift=(0.0, 0.0, 0.0)):
        t = tau_grid(n, boundary_mode)
        return cls(
            np.broadcast_to(fx(t), t.shape),
            np.broadcast_to(fy(t), t.shape),
            np.broadcast_to(fz(t), t.shape),
            boundary_mode,
            shift,
        )

    @property
    def n(self):
        return self.x.size

    @property
    def tau(self):
        return tau_grid(self.n, self.boundary_mode)

    @property
    def dtau(self):
        return 1.0 / self.n if self.boundary_mode == PERIODIC else 1.0 / (self.n - 1)

    @property
    def weights(self):
        return quadrature_weights(self.n, self.boundary_mode)

    def points(self):
        return np.stack([self.x, self.y, self.z], axis=1)

    def replace(self, **kw):
        data = dict(x=self.x, y=self.y, z=self.z, boundary_mode=self.boundary_mode, shift=self.shift, eps_tan=self.eps_tan)
        data.update(kw)
        return Curve(**data)

    def to_dict(self):
        return {
            "boundary_mode": self.boundary_mode,
            "shift": list(self.shift),
            "tau": self.tau.tolist(),
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "z": self.z.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["x"], d["y"], d["z"], d.get("boundary_mode", FIXED), tuple(d.get("shift", (0.0, 0.0, 0.0))))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "x", "y", "z"])
            for row in zip(self.tau, self.x, self.y, self.z):
                w.writerow([repr(float(v)) for v in row])


@dataclass
class Deformation:
    """Displacement field (dx, dy, dz) sampled on the grid of a parent curve.

    Endpoint pinning is not part of the type: deformations that move the
    endpoints are legitimate inputs to ``phi``.  Operations that need pinned
    endpoints check it themselves (:meth:`is_pinned`).
    """

    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray

    def __post_init__(self):
        self.dx = np.array(self.dx, dtype=float)
        self.dy = np.array(self.dy, dtype=float)
        self.dz = np.array(self.dz, dtype=float)
        if not (self.dx.shape == self.dy.shape == self.dz.shape) or self.dx.ndim != 1:
            raise ValueError("dx, dy, dz must be 1-D arrays of equal length")

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def conforms(self, curve):
        if self.dx.size != curve.n:
            raise ValueError(f"deformation has {self.dx.size} samples, curve has {curve.n}")

    def is_pinned(self, atol=1e-12):
        ends = np.array([self.dx[[0, -1]], self.dy[[0, -1]], self.dz[[0, -1]]])
        return bool(np.all(np.abs(ends) <= atol))

    def scaled(self, lam):
        return Deformation(lam * self.dx, lam * self.dy, lam * self.dz)

    def is_zero(self):
        return not (np.any(self.dx) or np.any(self.dy) or np.any(self.dz))


def tangent(curve):
    """
    Per-sample tangent (xdot, ydot, zdot) by second-order differences.

    Central differences in the interior, periodic wrap for periodic curves,
    one-sided second-order stencils at fixed endpoints.
    """
    h = curve.dtau
    if curve.boundary_mode == PERIODIC:
        return tuple(periodic_derivative(v, h, s) for v, s in zip((curve.x, curve.y, curve.z), curve.shift))
    return tuple(np.gradient(v, h, edge_order=2) for v in (curve.x, curve.y, curve.z))


def _check_map(phi, t, mode):
    s = np.asarray(phi(t), dtype=float)
    if s.shape != t.shape or not np.all(np.isfinite(s)):
        raise NonMonotoneMap("map must return finite values for every sample")
    if abs(float(phi(np.array([0.0]))[0])) > 1e-12 or abs(float(phi(np.array([1.0]))[0]) - 1.0) > 1e-12:
        raise NonMonotoneMap("map must fix the endpoints 0 and 1")
    ext = np.append(s, 1.0) if mode == PERIODIC else s
    if np.any(np.diff(ext) <= 0.0):
        i = int(np.argmin(np.diff(ext)))
        raise NonMonotoneMap(f"map is not strictly increasing near sample {i}")
    return s


def reparameterize(curve, phi):
    """
    Resample ``curve`` at ``phi(tau)`` with cubic-spline interpolation.

    ``phi`` is a vectorized, strictly increasing map of [0, 1] onto itself.
    Samples that land exactly on an existing node are copied bitwise.
    """
    t = curve.tau
    s = _check_map(phi, t, curve.boundary_mode)
    hit = s == t
    out = []
    for v, shift in zip((curve.x, curve.y, curve.z), curve.shift):
        if curve.boundary_mode == PERIODIC:
            # interpolate the periodic part, add the secular drift back
            per = v - shift * t
            spl = CubicSpline(np.append(t, 1.0), np.append(per, per[0]), bc_type="periodic")
            w = spl(s) + shift * s
        else:
            w = CubicSpline(t, v)(s)
        w = np.where(hit, v, w)
        out.append(w)
    return curve.replace(x=out[0], y=out[1], z=out[2])


@dataclass
class ParamSurface:
    """Surface (x, y, z)(tau, alpha) on [0, 1] x [0, A], arrays indexed [i_tau, j_alpha]."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    A: float = 1.0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        self.y = np.array(self.y, dtype=float)
        self.z = np.array(self.z, dtype=float)
        self.A = float(self.A)
        if not (self.x.shape == self.y.shape == self.z.shape) or self.x.ndim != 2:
            raise ValueError("x, y, z must be 2-D arrays of equal shape")
        if self.n_tau < 5 or self.n_alpha < 3:
            raise ValueError("surface needs n_tau >= 5 and n_alpha >= 3")

    @classmethod
    def from_functions(cls, fx, fy, fz, n_tau, n_alpha, A=1.0):
        t = tau_grid(n_tau)
        a = np.linspace(0.0, A, n_alpha)
        T, Al = np.meshgrid(t, a, indexing="ij")
        return cls(*(np.broadcast_to(f(T, Al), T.shape) for f in (fx, fy, fz)), A)

    @property
    def n_tau(self):
        return self.x.shape[0]

    @property
    def n_alpha(self):
        return self.x.shape[1]

    @property
    def tau(self):
        return tau_grid(self.n_tau)

    @property
    def alpha(self):
        return np.linspace(0.0, self.A, self.n_alpha)

    @property
    def dtau(self):
        return 1.0 / (self.n_tau - 1)

    @property
    def dalpha(self):
        return self.A / (self.n_alpha - 1)

    def derivatives(self):
        """((x_tau, y_tau, z_tau), (x_alpha, y_alpha, z_alpha)), second-order stencils."""
        dt = tuple(np.gradient(v, self.dtau, axis=0, edge_order=2) for v in (self.x, self.y, self.z))
        if self.A == 0.0:
            da = tuple(np.zeros_like(self.x) for _ in range(3))
        else:
            da = tuple(np.gradient(v, self.dalpha, axis=1, edge_order=2) for v in (self.x, self.y, self.z))
        return dt, da

    def planar_jacobian(self):
        (xt, yt, _), (xa, ya, _) = self.derivatives()
        return xt * ya - xa * yt

    def slice(self, j):
        return Curve(self.x[:, j], self.y[:, j], self.z[:, j])

    def alpha_derivative(self, j):
        _, (xa, ya, za) = self.derivatives()
        return Deformation(xa[:, j], ya[:, j], za[:, j])

    def reparameterize_tau(self, phi):
        """Resample every alpha-slice by the same map of tau."""
        cols = [reparameterize(self.slice(j), phi) for j in range(self.n_alpha)]
        return ParamSurface(
            np.stack([c.x for c in cols], 1), np.stack([c.y for c in cols], 1), np.stack([c.z for c in cols], 1), self.A
        )

    def reversed_alpha(self):
        return ParamSurface(self.x[:, ::-1], self.y[:, ::-1], self.z[:, ::-1], self.A)

    def to_dict(self):
        return {"A": self.A, "x": self.x.tolist(), "y": self.y.tolist(), "z": self.z.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x"], d["y"], d["z"], d.get("A", 1.0))


def _solve_slopes(zt, za, xt, yt, xa, ya, eps_jac):
    jac = xt * ya - xa * yt
    if np.any(np.abs(jac) < eps_jac):
        raise DegenerateJacobian(f"planar Jacobian {np.min(np.abs(jac)):.3e} below {eps_jac:g}")
    zx = (zt * ya - za * yt) / jac
    zy = (za * xt - zt * xa) / jac
    return zx, zy


def surface_slopes(surface, i, j, eps_jac=EPS_JAC):
    """
    Slopes (z_x, z_y) at node (i, j) from the 2x2 chain-rule system

        z_tau   = z_x x_tau   + z_y y_tau
        z_alpha = z_x x_alpha + z_y y_alpha
    """
    (xt, yt, zt), (xa, ya, za) = surface.derivatives()
    zx, zy = _solve_slopes(zt[i, j], za[i, j], xt[i, j], yt[i, j], xa[i, j], ya[i, j], eps_jac)
    return float(zx), float(zy)


def surface_slopes_all(surface, eps_jac=EPS_JAC):
    """Vectorized :func:`surface_slopes` over every node."""
    (xt, yt, zt), (xa, ya, za) = surface.derivatives()
    return _solve_slopes(zt, za, xt, yt, xa, ya, eps_jac)


@dataclass
class Foliation:
    """
    One-parameter family of planar curves x(tau, alpha), y(tau, alpha).

    Arrays are indexed [i_tau, j_alpha] with alpha uniform on [0, A].  When
    ``periodic`` is set, tau samples [0, 1) and the y coordinate advances by
    ``y_period`` per turn.  Positions between alpha samples come from cubic
    splines, so evolution schemes may step at any resolution.
    """

    x: np.ndarray
    y: np.ndarray
    A: float = 1.0
    periodic: bool = False
    y_period: float = 0.0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        self.y = np.array(self.y, dtype=float)
        self.A = float(self.A)
        if self.x.shape != self.y.shape or self.x.ndim != 2:
            raise ValueError("x and y must be 2-D arrays of equal shape")
        self._splines = None

    @classmethod
    def from_functions(cls, fx, fy, n_tau, n_alpha, A=1.0, periodic=False, y_period=0.0):
        t = tau_grid(n_tau, PERIODIC if periodic else FIXED)
        a = np.linspace(0.0, A, n_alpha)
        T, Al = np.meshgrid(t, a, indexing="ij")
        return cls(np.broadcast_to(fx(T, Al), T.shape), np.broadcast_to(fy(T, Al), T.shape), A, periodic, y_period)

    @property
    def n_tau(self):
        return self.x.shape[0]

    @property
    def n_alpha(self):
        return self.x.shape[1]

    @property
    def tau(self):
        return tau_grid(self.n_tau, PERIODIC if self.periodic else FIXED)

    @property
    def dtau(self):
        return 1.0 / self.n_tau if self.periodic else 1.0 / (self.n_tau - 1)

    @property
    def alpha(self):
        return np.linspace(0.0, self.A, self.n_alpha)

    def _spl(self):
        if self._splines is None:
            if self.A == 0.0 or self.n_alpha < 2:
                self._splines = None
                return None
            a = self.alpha
            self._splines = (CubicSpline(a, self.x, axis=1), CubicSpline(a, self.y, axis=1))
        return self._splines

    def positions(self, alpha):
        spl = self._spl()
        if spl is None:
            return self.x[:, 0].copy(), self.y[:, 0].copy()
        return spl[0](alpha), spl[1](alpha)

    def velocity(self, alpha):
        """(dx/dalpha, dy/dalpha) per tau sample."""
        spl = self._spl()
        if spl is None:
            return np.zeros(self.n_tau), np.zeros(self.n_tau)
        return spl[0](alpha, 1), spl[1](alpha, 1)

    def slice_tangent(self, alpha):
        x, y = self.positions(alpha)
        if self.periodic:
            return periodic_derivative(x, self.dtau), periodic_derivative(y, self.dtau, self.y_period)
        return np.gradient(x, self.dtau, edge_order=2), np.gradient(y, self.dtau, edge_order=2)

    def is_flat(self, tol=1e-12):
        """x depends on alpha only and y on tau only."""
        return bool(
            np.all(np.abs(self.x - self.x[:1, :]) <= tol) and np.all(np.abs(self.y - self.y[:, :1]) <= tol)
        )

    def check(self, eps_tan=EPS_TAN, eps_light=None):
        """Validate immersion, non-crossing and (optionally) the spacelike condition."""
        for j, a in enumerate(self.alpha):
            xd, yd = self.slice_tangent(a)
            if np.min(np.abs(xd) + np.abs(yd)) < eps_tan:
                raise ValueError(f"slice {j} is not immersed")
            if eps_light is not None and np.min(yd * yd - xd * xd) < eps_light:
                raise ValueError(f"slice {j} is not spacelike")
        if self.A > 0.0 and self.n_alpha >= 2:
            jac = []
            for a in self.alpha:
                xd, yd = self.slice_tangent(a)
                va, vb = self.velocity(a)
                jac.append(xd * vb - va * yd)
            jac = np.array(jac)
            if not (np.all(jac > 0) or np.all(jac < 0)):
                raise ValueError("foliation slices cross or stall")
        return self

    def to_dict(self):
        return {"A": self.A, "periodic": self.periodic, "y_period": self.y_period, "x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x"], d["y"], d.get("A", 1.0), d.get("periodic", False), d.get("y_period", 0.0))


def sweep(foliation, field):
    """Surface traced by ``foliation`` carrying per-node values ``field``."""
    field = np.asarray(field, dtype=float)
    if field.shape != foliation.x.shape:
        raise ValueError(f"field shape {field.shape} does not match foliation {foliation.x.shape}")
    if foliation.periodic:
        raise ValueError("sweep needs a fixed-endpoint foliation")
    return ParamSurface(foliation.x, foliation.y, field, foliation.A)
