"""
The action integral over a swept surface, the propagation-time functional
Phi of a curve deformation, the total time along a trajectory of curves, and
the variational gradient of Phi with respect to the deformation.

Phi is degree-1 homogeneous and odd in the deformation:

    Phi(C, d) = int (ydot dx - xdot dy) F(x, y, z, u, v) dtau,
    u = (ydot dz - zdot dy) / (ydot dx - xdot dy),
    v = (zdot dx - xdot dz) / (ydot dx - xdot dy).

Its area element ydot dx - xdot dy is positive when the deformation points
to the right of the planar tangent.  A surface parameterized by (tau, alpha)
with x_tau y_alpha - x_alpha y_tau > 0 is swept to the left, so
:func:`propagation_time` reports -int Phi dalpha to share the orientation of
:func:`action_integral`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .curves import EPS_JAC, quadrature_weights, surface_slopes_all, tangent
from .errors import DegenerateJacobian, NonTransversalDeformation
from .models import eval_lagrangian, momentum_densities

EPS_TRANSVERSAL = 1e-8


@dataclass
class IndicatriceGradient:
    """Variational derivatives of Phi with respect to (dx, dy, dz), per sample."""

    gx: np.ndarray
    gy: np.ndarray
    gz: np.ndarray

    def contract(self, curve, defo):
        """Quadrature pairing sum_i w_i dtau (g . d)_i."""
        dens = self.gx * defo.dx + self.gy * defo.dy + self.gz * defo.dz
        return float(np.dot(curve.weights, dens) * curve.dtau)


def action_integral(model, surface, eps_jac=EPS_JAC):
    """
    J = iint F(x, y, z, z_x, z_y) (x_tau y_alpha - x_alpha y_tau) dtau dalpha.

    Tensor-product trapezoid rule on the (tau, alpha) grid.  A surface whose
    Jacobian vanishes identically (zero swept area) has J = 0.
    """
    jac = surface.planar_jacobian()
    if np.all(np.abs(jac) < eps_jac):
        return 0.0
    if not (np.all(jac >= eps_jac) or np.all(jac <= -eps_jac)):
        raise DegenerateJacobian("planar Jacobian vanishes or changes sign on the surface")
    zx, zy = surface_slopes_all(surface, eps_jac)
    integrand = eval_lagrangian(model, surface.x, surface.y, surface.z, zx, zy) * jac
    wt = quadrature_weights(surface.n_tau) * surface.dtau
    wa = quadrature_weights(surface.n_alpha) * surface.dalpha
    return float(wt @ integrand @ wa)


def _induced(curve, defo, eps):
    xd, yd, zd = tangent(curve)
    den = yd * defo.dx - xd * defo.dy
    bad = np.abs(den) < eps
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonTransversalDeformation(
            f"deformation is tangential at sample {i} (|ydot dx - xdot dy| = {abs(den[i]):.3e})", index=i
        )
    u = (yd * defo.dz - zd * defo.dy) / den
    v = (zd * defo.dx - xd * defo.dz) / den
    return xd, yd, den, u, v


def phi(model, curve, defo, eps_transversal=EPS_TRANSVERSAL):
    """
    Propagation time for the deformation ``defo`` of ``curve``.

    Raises
    ------
    NonTransversalDeformation
        If ``|ydot dx - xdot dy| < eps_transversal`` at any sample.  The
        identically zero deformation is the one exception and returns 0.
    """
    defo.conforms(curve)
    if defo.is_zero():
        return 0.0
    _, _, den, u, v = _induced(curve, defo, eps_transversal)
    dens = den * eval_lagrangian(model, curve.x, curve.y, curve.z, u, v)
    return float(np.dot(curve.weights, dens) * curve.dtau)


def propagation_time(model, surface, eps_transversal=EPS_TRANSVERSAL, jobs=1):
    """
    Total time T along the trajectory of alpha-slices of ``surface``.

    Phi is evaluated on every slice against the finite-difference alpha
    derivative and integrated over alpha by the trapezoid rule.  The sign is
    that of :func:`action_integral` (see the module docstring).
    """
    if surface.A == 0.0:
        return 0.0
    _, (xa, ya, za) = surface.derivatives()
    from .curves import Deformation

    def one(j):
        try:
            return phi(model, surface.slice(j), Deformation(xa[:, j], ya[:, j], za[:, j]), eps_transversal)
        except NonTransversalDeformation as exc:
            raise NonTransversalDeformation(f"slice {j}: {exc}", index=exc.index, slice_index=j) from exc

    idx = range(surface.n_alpha)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            vals = np.array(list(pool.map(one, idx)))
    else:
        vals = np.array([one(j) for j in idx])
    wa = quadrature_weights(surface.n_alpha) * surface.dalpha
    return -float(np.dot(wa, vals))


def indicatrice_gradient(model, curve, defo, eps_transversal=EPS_TRANSVERSAL):
    """
    Pointwise variational derivatives of Phi with respect to (dx, dy, dz).

    These are the boundary momenta evaluated with the slopes induced by the
    deformation, so the Euler identity ``contract(curve, defo) == phi``
    holds to rounding.
    """
    defo.conforms(curve)
    xd, yd, _, u, v = _induced(curve, defo, eps_transversal)
    gx, gy, gz = momentum_densities(model, curve.x, curve.y, curve.z, xd, yd, u, v)
    return IndicatriceGradient(np.asarray(gx, float), np.asarray(gy, float), np.asarray(gz, float))
