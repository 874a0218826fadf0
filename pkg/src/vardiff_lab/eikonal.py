"""
Eikonal S(C0 -> C1) as the stationary discrete action over a strip, the
boundary momenta of extremal surfaces, and the residuals of the
parameterization constraint and of the generalized Hamilton-Jacobi equation.

The strip is bounded by two curves C0 (left) and C1 (right) that are graphs
x = f(y) over a common y-interval, plus two straight side edges joining
matching endpoints.  Grid row j sits at tau_j = j / (ny - 1); boundary
samples are carried to the rows by piecewise-linear interpolation in tau, so
perturbing one curve sample perturbs the boundary by a hat function whose
integral is exactly dtau.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .curves import FIXED, Curve, Deformation, tangent
from .errors import (
    DegenerateGrid,
    DegenerateRegion,
    EliminationDiverged,
    LightlikePoint,
    NewtonDiverged,
    StepTooSmall,
)
from .models import FieldGrid, P1Mesh, momentum_densities

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
H_FD = 1e-4
FD_RESOLUTION = 1e-6
EPS_WIDTH = 1e-8
EPS_LIGHT = 1e-6
# ratio |x-extent| / y-extent above which hyperbolic strips are refused
MAX_ASPECT_HYPERBOLIC = 0.5
# relative slack on that ratio; admits finite-difference nudges of a strip at the limit
ASPECT_SLACK = 1e-3


@dataclass
class StripRegion:
    C0: Curve
    C1: Curve
    side_data: Optional[Callable] = None
    eps_width: float = EPS_WIDTH

    def __post_init__(self):
        for name, c in (("C0", self.C0), ("C1", self.C1)):
            if c.boundary_mode != FIXED:
                raise DegenerateRegion(f"{name} must have fixed endpoints")
            _, yd, _ = tangent(c)
            if np.min(yd) <= 0.0:
                raise DegenerateRegion(f"{name} is not a graph over y (ydot <= 0 at sample {int(np.argmin(yd))})")
        if abs(self.C0.y[0] - self.C1.y[0]) > 1e-12 or abs(self.C0.y[-1] - self.C1.y[-1]) > 1e-12:
            raise DegenerateRegion("C0 and C1 must span the same y-interval")
        f0 = np.interp(self.C1.y, self.C0.y, self.C0.x)
        width = self.C1.x - f0
        if np.min(width[1:-1]) < self.eps_width:
            raise DegenerateRegion(f"C1 does not lie right of C0 (min width {np.min(width[1:-1]):.3e})")

    @property
    def y_interval(self):
        return float(self.C1.y[0]), float(self.C1.y[-1])

    def with_C1(self, C1):
        return StripRegion(self.C0, C1, self.side_data, self.eps_width)

    def perturbed(self, defo, amplitude=1.0):
        """Region whose C1 is displaced by ``amplitude * defo``."""
        defo.conforms(self.C1)
        c = self.C1
        return self.with_C1(
            c.replace(x=c.x + amplitude * defo.dx, y=c.y + amplitude * defo.dy, z=c.z + amplitude * defo.dz)
        )

    def grid(self, ns, ny):
        """Node coordinates and Dirichlet data on the (s, tau) grid."""
        t = np.linspace(0.0, 1.0, ny)
        s = np.linspace(0.0, 1.0, ns)[:, None]
        p0 = [np.interp(t, self.C0.tau, v) for v in (self.C0.x, self.C0.y, self.C0.z)]
        p1 = [np.interp(t, self.C1.tau, v) for v in (self.C1.x, self.C1.y, self.C1.z)]
        X = (1.0 - s) * p0[0] + s * p1[0]
        Y = (1.0 - s) * p0[1] + s * p1[1]
        Z = np.zeros_like(X)
        Z[0, :] = p0[2]
        Z[-1, :] = p1[2]
        for j in (0, -1):
            if self.side_data is None:
                Z[:, j] = (1.0 - s[:, 0]) * p0[2][j] + s[:, 0] * p1[2][j]
            else:
                Z[:, j] = self.side_data(X[:, j], Y[:, j])
            Z[0, j], Z[-1, j] = p0[2][j], p1[2][j]
        return X, Y, Z


def _coons(Z):
    """Transfinite interpolation of the boundary values of Z into the interior."""
    ns, ny = Z.shape
    s = np.linspace(0.0, 1.0, ns)[:, None]
    t = np.linspace(0.0, 1.0, ny)[None, :]
    left, right = Z[0:1, :], Z[-1:, :]
    bot, top = Z[:, 0:1], Z[:, -1:]
    out = (
        (1 - s) * left + s * right + (1 - t) * bot + t * top
        - ((1 - s) * (1 - t) * Z[0, 0] + s * (1 - t) * Z[-1, 0] + (1 - s) * t * Z[0, -1] + s * t * Z[-1, -1])
    )
    res = Z.copy()
    res[1:-1, 1:-1] = out[1:-1, 1:-1]
    return res


@dataclass
class MomentaField:
    """Densities in tau of (dS/dx, dS/dy, dS/dz) along a curve."""

    px: np.ndarray
    py: np.ndarray
    pz: np.ndarray

    def pair(self, curve, defo):
        """Discrete pairing sum_i w_i dtau (p . d)_i."""
        dens = self.px * defo.dx + self.py * defo.dy + self.pz * defo.dz
        return float(np.dot(curve.weights, dens) * curve.dtau)

    def as_array(self):
        return np.stack([self.px, self.py, self.pz], axis=1)


@dataclass
class ExtremalField:
    region: StripRegion
    field: FieldGrid
    boundary_slopes: tuple
    residual_norm: float
    newton_steps: int
    model: object = None
    mesh: P1Mesh = field(default=None, repr=False)

    def action(self):
        return self.mesh.action(self.model, self.field.z)

    def boundary_momenta(self):
        zx, zy = self.boundary_slopes
        return momenta_from_slopes(self.model, self.region.C1, zx, zy)


def _check_aspect(model, X, Y, max_aspect):
    if model.kind != "scalar-hyperbolic":
        return
    xe = float(X.max() - X.min())
    ye = float(Y.max() - Y.min())
    if xe > max_aspect * ye * (1.0 + ASPECT_SLACK):
        raise NewtonDiverged(
            f"hyperbolic strip too wide: x-extent {xe:.3g} > {max_aspect:g} * y-extent {ye:.3g} "
            "(conjugate points make the boundary problem ill-posed)"
        )


def _boundary_slopes(X, Y, Z, C1):
    """(z_x, z_y) on the C1 column from one-sided s-differences and tau-differences."""
    ns, ny = X.shape
    ds, dt = 1.0 / (ns - 1), 1.0 / (ny - 1)

    def d_s(V):
        return (3.0 * V[-1] - 4.0 * V[-2] + V[-3]) / (2.0 * ds)

    def d_t(V):
        return np.gradient(V[-1], dt, edge_order=2)

    xs, ys, zs = d_s(X), d_s(Y), d_s(Z)
    xt, yt, zt = d_t(X), d_t(Y), d_t(Z)
    jac = xs * yt - xt * ys
    zx = (zs * yt - zt * ys) / jac
    zy = (zt * xs - zs * xt) / jac
    t = np.linspace(0.0, 1.0, ny)
    return np.interp(C1.tau, t, zx), np.interp(C1.tau, t, zy)


def solve_extremal(
    model,
    region,
    grid,
    newton_tol=NEWTON_TOL,
    max_iter=NEWTON_MAX_ITER,
    max_aspect=MAX_ASPECT_HYPERBOLIC,
):
    """
    Stationary point of the discrete action with Dirichlet data on the strip.

    Newton's method on the action gradient over interior nodes, started from
    the transfinite interpolation of the boundary data.  Convergence is
    declared when the Euler-Lagrange residual (gradient over lumped nodal
    area) has max-norm at most ``newton_tol``.

    Parameters
    ----------
    model : LagrangianModel
    region : StripRegion
    grid : (int, int)
        ``(ns, ny)`` node counts across and along the strip, both >= 17.

    Returns
    -------
    ExtremalField

    Raises
    ------
    NewtonDiverged
        Iteration cap reached, residual growth, or a hyperbolic strip wider
        than ``max_aspect`` times its height.
    DegenerateRegion
        If the mapped grid folds over.
    """
    ns, ny = grid
    if ns < 17 or ny < 17:
        raise ValueError(f"grid must be at least 17x17, got {ns}x{ny}")
    X, Y, Z = region.grid(ns, ny)
    _check_aspect(model, X, Y, max_aspect)
    try:
        mesh = P1Mesh(X, Y)
    except DegenerateGrid as exc:
        raise DegenerateRegion(str(exc)) from exc

    Z = _coons(Z)
    inner = np.zeros((ns, ny), dtype=bool)
    inner[1:-1, 1:-1] = True
    inner = inner.ravel()
    z = Z.ravel().copy()
    lumped_in = mesh.lumped[inner]

    def residual():
        g = mesh.gradient(model, z)
        return g[inner], float(np.max(np.abs(g[inner] / lumped_in)))

    g, rnorm = residual()
    first = rnorm
    steps = 0
    while rnorm > newton_tol:
        if steps >= max_iter:
            raise NewtonDiverged(f"no convergence after {max_iter} Newton steps (residual {rnorm:.3e})")
        H = mesh.hessian(model, z)[inner][:, inner].tocsc()
        try:
            dz = spla.splu(H).solve(-g)
        except RuntimeError as exc:
            raise NewtonDiverged(f"singular Newton system: {exc}") from exc
        z[inner] += dz
        steps += 1
        g, rnorm = residual()
        if not np.isfinite(rnorm) or rnorm > 1e8 * max(first, 1.0):
            raise NewtonDiverged(f"Newton residual grew to {rnorm:.3e} at step {steps}")

    Z = z.reshape(ns, ny)
    slopes = _boundary_slopes(X, Y, Z, region.C1)
    return ExtremalField(region, FieldGrid(X, Y, Z), slopes, rnorm, steps, model, mesh)


def eikonal_value(model, region, grid, **solver):
    """Discrete action of the extremal field over the strip."""
    return solve_extremal(model, region, grid, **solver).action()


def momenta_from_slopes(model, curve, zx, zy):
    """Boundary momenta of ``curve`` given the surface slopes at its samples."""
    xd, yd, _ = tangent(curve)
    px, py, pz = momentum_densities(model, curve.x, curve.y, curve.z, xd, yd, np.asarray(zx, float), np.asarray(zy, float))
    n = curve.n
    return MomentaField(*(np.broadcast_to(np.asarray(v, float), (n,)).copy() for v in (px, py, pz)))


_COMPONENTS = {"x": 0, "y": 1, "z": 2}


def _nudge(region, component, i, h):
    c = region.C1
    arrs = {"x": c.x.copy(), "y": c.y.copy(), "z": c.z.copy()}
    arrs[component][i] += h
    return region.with_C1(c.replace(**arrs))


def eikonal_gradient_fd(model, region, grid, component, i, h_fd=H_FD, richardson_check=True, **solver):
    """
    Variational derivative of S with respect to one coordinate of C1 at sample i.

    Central difference of :func:`eikonal_value` under a +/- ``h_fd`` nudge of
    that sample, divided by ``w_i * dtau`` to convert the partial derivative
    into a density.  Moving x or y re-derives the strip mapping; moving z
    changes Dirichlet data only.

    Raises
    ------
    StepTooSmall
        When the two perturbed solves differ by fewer than 10 ulp and the
        step is too small to resolve derivatives at ``FD_RESOLUTION``.  With
        a usable step an unresolved difference means the derivative itself
        is negligible; a 100x-step estimate is returned instead.
    """
    if component not in _COMPONENTS:
        raise ValueError(f"component must be one of 'x', 'y', 'z', got {component!r}")
    c1 = region.C1
    if not 1 <= i <= c1.n - 2:
        raise ValueError(f"sample {i} is not an interior sample of C1")
    scale = c1.weights[i] * c1.dtau

    def solve_pair(h):
        sp = eikonal_value(model, _nudge(region, component, i, h), grid, **solver)
        sm = eikonal_value(model, _nudge(region, component, i, -h), grid, **solver)
        return sp, sm

    def unresolved(sp, sm):
        return abs(sp - sm) < 10.0 * np.spacing(max(abs(sp), abs(sm)))

    def central(h):
        sp, sm = solve_pair(h)
        if unresolved(sp, sm):
            # resolution of the derivative this step can deliver
            floor = 10.0 * np.spacing(max(abs(sp), abs(sm))) / (2.0 * h * scale)
            if floor > FD_RESOLUTION * max(1.0, abs(sp)):
                raise StepTooSmall(
                    f"perturbed actions differ by {abs(sp - sm):.3e} (< 10 ulp); increase h_fd"
                )
            big = 100.0 * h
            bp, bm = solve_pair(big)
            return (bp - bm) / (2.0 * big) / scale
        return (sp - sm) / (2.0 * h) / scale

    d = central(h_fd)
    if richardson_check:
        d2 = central(2.0 * h_fd)
        err = abs(d - d2) / 3.0
        if err > 1e-6 * max(1.0, abs(d)):
            log.warning("FD derivative %s[%d]: Richardson error estimate %.2e", component, i, err)
    return d


def fd_momenta(model, region, grid, indices=None, h_fd=H_FD, richardson_check=False, **solver):
    """
    Finite-difference momenta at interior samples of C1.

    Returns a :class:`MomentaField` sized like C1 with NaN at samples not in
    ``indices`` (default: all interior samples).
    """
    n = region.C1.n
    if indices is None:
        indices = range(1, n - 1)
    out = np.full((3, n), np.nan)
    for i in indices:
        for comp, k in _COMPONENTS.items():
            out[k, i] = eikonal_gradient_fd(model, region, grid, comp, i, h_fd, richardson_check, **solver)
    return MomentaField(out[0], out[1], out[2])


def constraint_residual(curve, momenta):
    """xdot p_x + ydot p_y + zdot p_z per sample."""
    xd, yd, zd = tangent(curve)
    return xd * momenta.px + yd * momenta.py + zd * momenta.pz


def hj_residual_scalar_field(curve, momenta, potential):
    """
    Residual of the Hamilton-Jacobi analog for F = 1/2 (z_x^2 - z_y^2) + p(z):

        1/2 (p_z^2 + zdot^2) + (xdot^2 - ydot^2) p(z) + xdot p_y + ydot p_x
    """
    xd, yd, zd = tangent(curve)
    return (
        0.5 * (momenta.pz ** 2 + zd ** 2)
        + (xd ** 2 - yd ** 2) * potential(curve.z)
        + xd * momenta.py
        + yd * momenta.px
    )


def hj_residual_generic(model, curve, momenta, eps_light=EPS_LIGHT):
    """
    Eliminate the slopes and test the remaining boundary-momentum relations.

    (z_x, z_y) are recovered pointwise from p_z = ydot F_zx - xdot F_zy and
    zdot = xdot z_x + ydot z_y; the residuals are p_x and p_y minus their
    values rebuilt from those slopes.  For the hyperbolic model
    ``ydot * r_x + xdot * r_y`` equals :func:`hj_residual_scalar_field`.

    Returns
    -------
    (r_x, r_y) : tuple of ndarray

    Raises
    ------
    LightlikePoint
        Where the 2x2 elimination system is singular to ``eps_light``.
    """
    xd, yd, zd = tangent(curve)
    sig = model.signature
    # [[ydot, -sig xdot], [xdot, ydot]] (z_x, z_y) = (p_z, zdot)
    det = yd * yd + sig * xd * xd
    bad = np.abs(det) < eps_light
    if np.any(bad):
        i = int(np.argmax(bad))
        raise LightlikePoint(f"elimination system singular at sample {i} (det {det[i]:.3e})", site=i)
    zx = (momenta.pz * yd + sig * xd * zd) / det
    zy = (yd * zd - xd * momenta.pz) / det
    if not (np.all(np.isfinite(zx)) and np.all(np.isfinite(zy))):
        raise EliminationDiverged("non-finite slopes in elimination")
    px, py, _ = momentum_densities(model, curve.x, curve.y, curve.z, xd, yd, zx, zy)
    return momenta.px - px, momenta.py - py


def boundary_variation(model, extremal, defo):
    """
    First variation of the action when C1 moves by ``defo``:

        dJ = int (p_x dx + p_y dy + p_z dz) dtau

    with momenta built from the extremal's boundary slopes.
    """
    c1 = extremal.region.C1
    defo.conforms(c1)
    if not defo.is_pinned():
        raise ValueError("boundary deformation must vanish at the C1 endpoints")
    return extremal.boundary_momenta().pair(c1, defo)
