"""
Lagrangian densities F(x, y, z, z_x, z_y), polynomial potentials, and the
discrete Euler-Lagrange operator on structured quadrilateral grids.

Two closed-form models are provided:

* ``scalar-hyperbolic``: F = 1/2 (z_x^2 - z_y^2) + p(z)
* ``scalar-elliptic``:   F = 1/2 (z_x^2 + z_y^2) + p(z)

Grid fields are discretized with piecewise-linear elements on a structured
triangulation (every cell cut along its (i, j)-(i+1, j+1) diagonal).  The
discrete action is the centroid-rule sum over triangles, and the
Euler-Lagrange residual is minus its gradient divided by the lumped nodal
area.  On uniform rectangular grids this is the usual compact five-point
stencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DegenerateGrid

KINDS = ("scalar-hyperbolic", "scalar-elliptic")

EPS_JAC = 1e-8


@dataclass(frozen=True)
class PolynomialPotential:
    """p(z) = sum_k coeffs[k] z^k."""

    coeffs: tuple = (0.0,)

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) == 0:
            c = (0.0,)
        if not all(np.isfinite(c)):
            raise ValueError("potential coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, z):
        # numpy.polyval takes the highest degree first
        return np.polyval(self.coeffs[::-1], z)

    def derivative(self):
        c = self.coeffs
        if len(c) == 1:
            return PolynomialPotential((0.0,))
        return PolynomialPotential(tuple(k * c[k] for k in range(1, len(c))))

    def is_quadratic_mass(self):
        """True when p = c0 - m^2 z^2 / 2 with m > 0."""
        c = self.coeffs + (0.0,) * max(0, 3 - len(self.coeffs))
        return len(self.coeffs) <= 3 and c[1] == 0.0 and c[2] < 0.0

    def mass_squared(self):
        c = self.coeffs + (0.0,) * max(0, 3 - len(self.coeffs))
        return -2.0 * c[2]


@dataclass(frozen=True)
class LagrangianModel:
    kind: str = "scalar-hyperbolic"
    potential: PolynomialPotential = field(default_factory=PolynomialPotential)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.potential, PolynomialPotential):
            object.__setattr__(self, "potential", PolynomialPotential(tuple(self.potential)))

    @property
    def signature(self):
        """Coefficient of z_y^2 / 2 in F: -1 for hyperbolic, +1 for elliptic."""
        return -1.0 if self.kind == "scalar-hyperbolic" else 1.0

    @classmethod
    def from_config(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigError("model must be an object", key="model")
        unknown = set(cfg) - {"kind", "potential"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown key 'model.{key}'", key=f"model.{key}")
        kind = cfg.get("kind", "scalar-hyperbolic")
        if kind not in KINDS:
            raise ConfigError(f"model.kind must be one of {KINDS}, got {kind!r}", key="model.kind")
        coeffs = cfg.get("potential", [0.0])
        if not isinstance(coeffs, list) or not all(isinstance(v, (int, float)) for v in coeffs):
            raise ConfigError("model.potential must be a list of numbers", key="model.potential")
        return cls(kind, PolynomialPotential(tuple(coeffs)))

    def to_config(self):
        return {"kind": self.kind, "potential": list(self.potential.coeffs)}


def eval_lagrangian(model, x, y, z, zx, zy):
    """Value of F at the jet point (x, y, z, z_x, z_y); broadcasts over arrays."""
    return 0.5 * (zx * zx + model.signature * zy * zy) + model.potential(z)


def eval_partials(model, x, y, z, zx, zy):
    """Return ``(F_zx, F_zy, F_z)``."""
    zx = np.asarray(zx, dtype=float)
    zy = np.asarray(zy, dtype=float)
    fz = model.potential.derivative()(z)
    if np.ndim(zx) == 0 and np.ndim(zy) == 0 and np.ndim(fz) == 0:
        return float(zx), float(model.signature * zy), float(fz)
    return zx * 1.0, model.signature * zy, fz


def eval_second_partials(model, z):
    """Hessian data of F in (z_x, z_y, z): diag(1, signature, p''(z)), no mixing."""
    return 1.0, model.signature, model.potential.derivative().derivative()(z)


@dataclass
class FieldGrid:
    """Node coordinates and field values on a structured (nx, ny) grid.

    Index ``[i, j]``: ``i`` runs along the first grid direction, ``j`` along
    the second.  The map (i, j) -> (x, y) must be nondegenerate.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    eps_jac: float = EPS_JAC

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if not (self.x.shape == self.y.shape == self.z.shape) or self.x.ndim != 2:
            raise ValueError("x, y, z must be 2-D arrays of equal shape")
        if min(self.x.shape) < 2:
            raise ValueError("grid needs at least 2 nodes per direction")

    @property
    def nx(self):
        return self.x.shape[0]

    @property
    def ny(self):
        return self.x.shape[1]

    def mesh(self):
        return P1Mesh(self.x, self.y, eps_jac=self.eps_jac)


class P1Mesh:
    """Structured triangulation with precomputed basis gradients."""

    def __init__(self, x, y, eps_jac=EPS_JAC):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        nx, ny = x.shape
        self.shape = (nx, ny)
        self.x = x
        self.y = y

        idx = np.arange(nx * ny).reshape(nx, ny)
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[:-1, 1:].ravel()
        self.tri = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])

        xf, yf = x.ravel(), y.ravel()
        px = xf[self.tri]
        py = yf[self.tri]
        twice_area = (px[:, 1] - px[:, 0]) * (py[:, 2] - py[:, 0]) - (
            px[:, 2] - px[:, 0]
        ) * (py[:, 1] - py[:, 0])

        # cell Jacobian in unit parameter coordinates
        jac = twice_area * (nx - 1) * (ny - 1)
        if not (np.all(jac >= eps_jac) or np.all(jac <= -eps_jac)):
            bad = int(np.argmin(np.abs(jac)))
            raise DegenerateGrid(
                f"grid Jacobian {jac[bad]:.3e} violates |J| >= {eps_jac:g} "
                f"(or changes sign) at triangle {bad}"
            )
        self.orientation = 1.0 if jac[0] > 0 else -1.0
        self.area = 0.5 * np.abs(twice_area)

        grads = np.empty(self.tri.shape + (2,))
        for v in range(3):
            v1, v2 = (v + 1) % 3, (v + 2) % 3
            grads[:, v, 0] = (py[:, v1] - py[:, v2]) / twice_area
            grads[:, v, 1] = (px[:, v2] - px[:, v1]) / twice_area
        self.grads = grads
        self.cx = px.mean(axis=1)
        self.cy = py.mean(axis=1)

        self.lumped = np.zeros(nx * ny)
        np.add.at(self.lumped, self.tri.ravel(), np.repeat(self.area / 3.0, 3))

    def jet(self, z):
        """Centroid value and constant gradient of the interpolant per triangle."""
        zt = np.asarray(z, dtype=float).ravel()[self.tri]
        zc = zt.mean(axis=1)
        zx = np.einsum("tv,tv->t", self.grads[:, :, 0], zt)
        zy = np.einsum("tv,tv->t", self.grads[:, :, 1], zt)
        return zc, zx, zy

    def action(self, model, z):
        zc, zx, zy = self.jet(z)
        return float(np.sum(self.area * eval_lagrangian(model, self.cx, self.cy, zc, zx, zy)))

    def gradient(self, model, z):
        """Gradient of :meth:`action` with respect to the nodal values."""
        zc, zx, zy = self.jet(z)
        fzx, fzy, fz = eval_partials(model, self.cx, self.cy, zc, zx, zy)
        fz = np.broadcast_to(fz, zc.shape)
        contrib = self.area[:, None] * (
            fzx[:, None] * self.grads[:, :, 0]
            + fzy[:, None] * self.grads[:, :, 1]
            + fz[:, None] / 3.0
        )
        g = np.zeros(self.lumped.size)
        np.add.at(g, self.tri.ravel(), contrib.ravel())
        return g

    def hessian(self, model, z):
        zc, _, _ = self.jet(z)
        hxx, hyy, hzz = eval_second_partials(model, zc)
        hzz = np.broadcast_to(hzz, zc.shape)
        gx, gy = self.grads[:, :, 0], self.grads[:, :, 1]
        local = hxx * gx[:, :, None] * gx[:, None, :] + hyy * gy[:, :, None] * gy[:, None, :]
        local = local + (hzz / 9.0)[:, None, None]
        local *= self.area[:, None, None]
        rows = np.repeat(self.tri, 3, axis=1).ravel()
        cols = np.tile(self.tri, (1, 3)).ravel()
        n = self.lumped.size
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def euler_lagrange_residual(model, field):
    """
    Discrete residual of d/dx F_zx + d/dy F_zy - F_z at interior nodes.

    Parameters
    ----------
    model : LagrangianModel
    field : FieldGrid
        Requires ``nx, ny >= 3``.

    Returns
    -------
    ndarray, shape (nx - 2, ny - 2)

    Raises
    ------
    DegenerateGrid
        If the cellwise Jacobian drops below ``field.eps_jac``.
    """
    if field.nx < 3 or field.ny < 3:
        raise ValueError("euler_lagrange_residual needs nx, ny >= 3")
    mesh = field.mesh()
    g = mesh.gradient(model, field.z) / mesh.lumped
    return -g.reshape(field.x.shape)[1:-1, 1:-1]


def momentum_densities(model, x, y, z, xdot, ydot, zx, zy):
    """
    Boundary momenta (p_x, p_y, p_z) of a curve with tangent (xdot, ydot)
    bounding a surface with slopes (z_x, z_y):

        p_x =  ydot (F - z_x F_zx) + xdot z_x F_zy
        p_y = -ydot z_y F_zx - xdot (F - z_y F_zy)
        p_z =  ydot F_zx - xdot F_zy

    The bracketed combinations are components of the energy-momentum tensor.
    """
    f = eval_lagrangian(model, x, y, z, zx, zy)
    fzx, fzy, _ = eval_partials(model, x, y, z, zx, zy)
    px = ydot * (f - zx * fzx) + xdot * zx * fzy
    py = -ydot * zy * fzx - xdot * (f - zy * fzy)
    pz = ydot * fzx - xdot * fzy
    return px, py, pz
