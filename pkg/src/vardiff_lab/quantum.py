"""
Lattice wave functionals for the quantized Hamilton-Jacobi analog of the
scalar-hyperbolic model, evolved between spacelike curves.

The slice is a periodic chain of M sites at tau_i = i / M (dtau = 1 / M).
Functional derivatives are transcribed as

    delta / delta z(tau_i)    -> (1 / dtau)   d / dz_i
    delta^2 / delta z(tau_i)^2 -> (1 / dtau^2) d^2 / dz_i^2

and the field argument z_i lives on a uniform grid of G points on
[-L_abs, L_abs] with homogeneous Dirichlet data outside.  At site i the
two lattice equations

    ydot X + xdot Y = -i [1/2 (-d2_i + zdot_i^2) + (xdot^2 - ydot^2) p(z_i)] Psi
    xdot X + ydot Y = -zdot_i d1_i Psi

are solved for X = delta Psi / delta x(tau_i), Y = delta Psi / delta y(tau_i),
and a foliation with velocity (dx/dalpha, dy/dalpha) moves the state by
dPsi/dalpha = sum_i dtau (X_i dx_i/dalpha + Y_i dy_i/dalpha).

The squared gradient inside the Hamiltonian density uses the forward
difference (z_{i+1} - z_i) / dtau; the transport term uses the centered
zdot_i = (z_{i+1} - z_{i-1}) / (2 dtau).  On a flat slice this reproduces the
standard lattice Hamiltonian with dispersion
omega_k^2 = m^2 + (2 / dtau)^2 sin^2(pi k / M).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.ndimage import map_coordinates

from .curves import periodic_derivative
from .errors import LightlikePoint, NonQuadraticPotential, StepRejected
from .models import PolynomialPotential

EPS_LIGHT = 1e-6
G_DEFAULT = 128
L_DEFAULT = 8.0
TOL_STEP = 1e-8
FD_ORDER = 4

FULL_GRID = "full-grid"
GAUSSIAN = "gaussian"


@dataclass
class LatticeSlice:
    """Periodic chain of M sites carrying the planar geometry of one curve."""

    x: np.ndarray
    y: np.ndarray
    potential: PolynomialPotential
    y_period: float = 1.0
    eps_light: float = EPS_LIGHT

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float)).copy()
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-D arrays of equal length")
        if not isinstance(self.potential, PolynomialPotential):
            self.potential = PolynomialPotential(tuple(self.potential))
        xd, yd = self.tangent()
        gap = yd * yd - xd * xd
        if np.min(gap) < self.eps_light:
            i = int(np.argmin(gap))
            raise LightlikePoint(f"slice is not spacelike at site {i} (ydot^2 - xdot^2 = {gap[i]:.3e})", site=i)

    @classmethod
    def flat(cls, M, potential, x0=0.0, y_period=1.0):
        tau = np.arange(M) / M
        return cls(np.full(M, float(x0)), y_period * tau, potential, y_period)

    @property
    def M(self):
        return self.x.size

    @property
    def dtau(self):
        return 1.0 / self.M

    def tangent(self):
        h = 1.0 / self.x.size
        return periodic_derivative(self.x, h), periodic_derivative(self.y, h, self.y_period)

    def moved(self, x, y):
        return LatticeSlice(x, y, self.potential, self.y_period, self.eps_light)

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "y_period": self.y_period,
            "potential": list(self.potential.coeffs),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["x"], d["y"], PolynomialPotential(tuple(d["potential"])), d.get("y_period", 1.0))


def free_matrices(slice_):
    """(m_e, W): kinetic mass dtau and potential matrix of the flat free Hamiltonian.

    H_flat = -1/(2 m_e) sum_i d_i^2 + 1/2 z^T W z - sum_i dtau c0, valid when
    p = c0 - m^2 z^2 / 2.
    """
    M, dt = slice_.M, slice_.dtau
    m2 = slice_.potential.mass_squared()
    shift = np.roll(np.eye(M), 1, axis=1)
    lap = 2.0 * np.eye(M) - shift - shift.T
    return dt, dt * (m2 * np.eye(M) + lap / dt ** 2)


def mode_frequencies(M, mass, dtau=None):
    """omega_k = sqrt(m^2 + (2 / dtau)^2 sin^2(pi k / M)), k = 0 .. M-1."""
    dtau = 1.0 / M if dtau is None else dtau
    k = np.arange(M)
    return np.sqrt(mass ** 2 + (2.0 / dtau * np.sin(np.pi * k / M)) ** 2)


def ground_kernel(slice_):
    """Kernel K of the free ground state exp(-z^T K z / 2)."""
    me, W = free_matrices(slice_)
    w2, U = np.linalg.eigh(W / me)
    if np.min(w2) <= 0.0:
        raise NonQuadraticPotential("free ground state needs a positive mass term")
    return me * (U * np.sqrt(w2)) @ U.T


@dataclass(frozen=True)
class ZGrid:
    """Uniform grid of G points on [-half_width, half_width] for each site variable."""

    G: int = G_DEFAULT
    half_width: float = L_DEFAULT
    fd_order: int = FD_ORDER

    def __post_init__(self):
        if self.fd_order not in (2, 4):
            raise ValueError("fd_order must be 2 or 4")
        if self.G < 5:
            raise ValueError("G must be at least 5")

    @classmethod
    def for_slice(cls, slice_, G=G_DEFAULT, L=L_DEFAULT, fd_order=FD_ORDER):
        """Half-width L in units of the widest single-site ground-state spread."""
        probe = slice_
        if not slice_.potential.is_quadratic_mass():
            probe = replace(slice_, potential=PolynomialPotential((0.0, 0.0, -0.5)))
        K = ground_kernel(probe)
        sigma = np.sqrt(np.max(np.diag(np.linalg.inv(K))) / 2.0)
        return cls(G, float(L * sigma), fd_order)

    @property
    def points(self):
        return np.linspace(-self.half_width, self.half_width, self.G)

    @property
    def dz(self):
        return 2.0 * self.half_width / (self.G - 1)

    @property
    def weights(self):
        w = np.full(self.G, self.dz)
        w[0] = w[-1] = 0.5 * self.dz
        return w

    def d1(self):
        h, n = self.dz, self.G
        if self.fd_order == 2:
            return sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n), format="csr") / h
        c = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
        return sp.diags(c, [-2, -1, 1, 2], shape=(n, n), format="csr") / h

    def d2(self):
        h, n = self.dz, self.G
        if self.fd_order == 2:
            return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") / h ** 2
        c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
        return sp.diags(c, [-2, -1, 0, 1, 2], shape=(n, n), format="csr") / h ** 2

    def to_dict(self):
        return {"G": self.G, "half_width": self.half_width, "fd_order": self.fd_order}


@dataclass
class WaveFunctional:
    """
    State over field configurations on a lattice slice.

    ``full-grid``: ``psi`` has shape (G,) * M on ``grid``.
    ``gaussian``: Psi(z) = exp(-1/2 (z-q)^T K (z-q) + i mom.(z-q) + log_norm).
    """

    slice: LatticeSlice
    representation: str
    psi: Optional[np.ndarray] = None
    grid: Optional[ZGrid] = None
    K: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    mom: Optional[np.ndarray] = None
    log_norm: complex = 0.0

    def __post_init__(self):
        if self.representation == FULL_GRID:
            if self.psi is None or self.grid is None:
                raise ValueError("full-grid state needs psi and grid")
            self.psi = np.asarray(self.psi, dtype=complex)
            if self.psi.shape != (self.grid.G,) * self.slice.M:
                raise ValueError(f"psi shape {self.psi.shape} != {(self.grid.G,) * self.slice.M}")
        elif self.representation == GAUSSIAN:
            M = self.slice.M
            self.K = np.asarray(self.K, dtype=complex).reshape(M, M)
            self.q = np.zeros(M) if self.q is None else np.asarray(self.q, dtype=float)
            self.mom = np.zeros(M) if self.mom is None else np.asarray(self.mom, dtype=float)
            if np.linalg.eigvalsh(0.5 * (self.K.real + self.K.real.T)).min() <= 0.0:
                raise ValueError("gaussian kernel must have a positive-definite real part")
        else:
            raise ValueError(f"unknown representation {self.representation!r}")

    @property
    def M(self):
        return self.slice.M


def gaussian_state(slice_, K=None, q=None, mom=None, normalized=True):
    """Gaussian wave functional; ``K`` defaults to the free ground-state kernel."""
    K = ground_kernel(slice_) if K is None else np.asarray(K, dtype=complex)
    c = 0.0
    if normalized:
        _, logdet = np.linalg.slogdet(K.real)
        c = 0.25 * (logdet - slice_.M * np.log(np.pi))
    return WaveFunctional(slice_, GAUSSIAN, K=K, q=q, mom=mom, log_norm=complex(c))


def _mesh(grid, M):
    return np.meshgrid(*([grid.points] * M), indexing="ij")


def to_grid(state, grid):
    """Sample a gaussian state on ``grid``."""
    if state.representation == FULL_GRID:
        return state
    Z = np.stack([a.ravel() for a in _mesh(grid, state.M)], axis=1) - state.q
    quad = np.einsum("ni,ij,nj->n", Z, state.K, Z)
    expo = -0.5 * quad + 1j * Z @ state.mom + state.log_norm
    psi = np.exp(expo).reshape((grid.G,) * state.M)
    return WaveFunctional(state.slice, FULL_GRID, psi=psi, grid=grid)


def ground_state(slice_, representation=FULL_GRID, G=G_DEFAULT, L=L_DEFAULT, fd_order=FD_ORDER):
    g = gaussian_state(slice_)
    if representation == GAUSSIAN:
        return g
    return to_grid(g, ZGrid.for_slice(slice_, G, L, fd_order))


@dataclass
class LatticeOperators:
    """
    Sparse operators of the lattice transcription on the flattened grid.

    Attributes
    ----------
    d1, d2 : list of sparse matrices
        (1/dtau) d/dz_i and (1/dtau^2) d^2/dz_i^2 for each site.
    zdot : list of ndarray
        Centered (z_{i+1} - z_{i-1}) / (2 dtau) at every grid node.
    grad2 : list of ndarray
        Forward ((z_{i+1} - z_i) / dtau)^2 at every grid node.
    pot : list of ndarray
        p(z_i) at every grid node.
    """

    M: int
    dtau: float
    grid: ZGrid
    d1: list
    d2: list
    zdot: list
    grad2: list
    pot: list
    _kin: list = field(default=None, repr=False)
    _potm: list = field(default=None, repr=False)
    _trans: list = field(default=None, repr=False)

    @property
    def size(self):
        return self.grid.G ** self.M

    def site_parts(self):
        """dtau-weighted pieces (K_i, P_i, C_i) with dtau h_i = K_i + (xdot^2 - ydot^2) P_i."""
        if self._kin is None:
            dt = self.dtau
            self._kin = [(-0.5 * dt) * self.d2[i] + sp.diags(0.5 * dt * self.grad2[i]) for i in range(self.M)]
            self._potm = [sp.diags(dt * self.pot[i]) for i in range(self.M)]
            self._trans = [sp.diags(dt * self.zdot[i]) @ self.d1[i] for i in range(self.M)]
        return self._kin, self._potm, self._trans

    def site_hamiltonian(self, i, xdot, ydot):
        """h_i = 1/2 (-d2_i + zdot_i^2) + (xdot^2 - ydot^2) p(z_i)."""
        kin, potm, _ = self.site_parts()
        return (kin[i] + (xdot * xdot - ydot * ydot) * potm[i]) / self.dtau

    def flat_hamiltonian(self):
        """sum_i dtau h_i on a slice with xdot = 0, ydot = 1."""
        kin, potm, _ = self.site_parts()
        return sum(kin[i] - potm[i] for i in range(self.M))

    def generator(self, xdot, ydot, vx, vy, eps_light=EPS_LIGHT):
        """Sparse G with dPsi/dalpha = G Psi for slice tangents and velocities per site."""
        kin, potm, trans = self.site_parts()
        det = ydot * ydot - xdot * xdot
        if np.min(np.abs(det)) < eps_light:
            i = int(np.argmin(np.abs(det)))
            raise LightlikePoint(f"lightlike slice at site {i}", site=i)
        a = (ydot * vx - xdot * vy) / det
        b = (ydot * vy - xdot * vx) / det
        out = sp.csr_matrix((self.size, self.size), dtype=complex)
        for i in range(self.M):
            h = kin[i] + (xdot[i] ** 2 - ydot[i] ** 2) * potm[i]
            out = out + (-1j * a[i]) * h - b[i] * trans[i]
        return out.tocsc()


def _axis_op(op, i, M, G):
    left = sp.identity(G ** i, format="csr")
    right = sp.identity(G ** (M - i - 1), format="csr")
    return sp.kron(sp.kron(left, op), right, format="csr")


_OPS_CACHE = {}


def lattice_transcription(slice_, grid):
    """
    Discrete generator data for ``slice_`` on ``grid``.

    Depends only on M, dtau, the potential and the grid, so results are
    cached across slices of one foliation.
    """
    key = (slice_.M, slice_.potential.coeffs, grid)
    if key in _OPS_CACHE:
        return _OPS_CACHE[key]
    M, dt, G = slice_.M, slice_.dtau, grid.G
    d1 = [_axis_op(grid.d1(), i, M, G) / dt for i in range(M)]
    d2 = [_axis_op(grid.d2(), i, M, G) / dt ** 2 for i in range(M)]
    Z = [a.ravel() for a in _mesh(grid, M)]
    if M == 1:
        zdot = [np.zeros(G)]
        grad2 = [np.zeros(G)]
    else:
        zdot = [(Z[(i + 1) % M] - Z[(i - 1) % M]) / (2.0 * dt) for i in range(M)]
        grad2 = [((Z[(i + 1) % M] - Z[i]) / dt) ** 2 for i in range(M)]
    pot = [slice_.potential(Z[i]) for i in range(M)]
    ops = LatticeOperators(M, dt, grid, d1, d2, zdot, grad2, pot)
    if len(_OPS_CACHE) > 8:
        _OPS_CACHE.clear()
    _OPS_CACHE[key] = ops
    return ops


def _require_grid(state):
    if state.representation != FULL_GRID:
        raise ValueError("operation needs a full-grid state")


def solve_functional_derivatives(state, i, eps_light=EPS_LIGHT):
    """
    (delta Psi / delta x(tau_i), delta Psi / delta y(tau_i)) as grid tensors.

    Raises
    ------
    LightlikePoint
        If |ydot^2 - xdot^2| < eps_light at site i.
    """
    _require_grid(state)
    ops = lattice_transcription(state.slice, state.grid)
    xd, yd = state.slice.tangent()
    det = yd[i] ** 2 - xd[i] ** 2
    if abs(det) < eps_light:
        raise LightlikePoint(f"lightlike slice at site {i}", site=i)
    psi = state.psi.ravel()
    r1 = -1j * (ops.site_hamiltonian(i, xd[i], yd[i]) @ psi)
    r2 = -(ops.zdot[i] * (ops.d1[i] @ psi))
    X = (yd[i] * r1 - xd[i] * r2) / det
    Y = (yd[i] * r2 - xd[i] * r1) / det
    shape = state.psi.shape
    return X.reshape(shape), Y.reshape(shape)


def constraint_residuals(state, i, X, Y):
    """Residual tensors of both lattice equations at site i for candidate X, Y."""
    ops = lattice_transcription(state.slice, state.grid)
    xd, yd = state.slice.tangent()
    psi = state.psi.ravel()
    r1 = -1j * (ops.site_hamiltonian(i, xd[i], yd[i]) @ psi)
    r2 = -(ops.zdot[i] * (ops.d1[i] @ psi))
    e1 = yd[i] * X.ravel() + xd[i] * Y.ravel() - r1
    e2 = xd[i] * X.ravel() + yd[i] * Y.ravel() - r2
    return e1.reshape(state.psi.shape), e2.reshape(state.psi.shape)


# -- observables -----------------------------------------------------------


def _grid_weights(grid, M):
    w = grid.weights
    out = w
    for _ in range(M - 1):
        out = np.multiply.outer(out, w)
    return out


def norm(state):
    """sqrt(<Psi|Psi>): trapezoid quadrature on the grid, closed form for gaussians."""
    if state.representation == GAUSSIAN:
        _, logdet = np.linalg.slogdet(state.K.real)
        return float(np.exp(state.log_norm.real) * (np.pi ** state.M / np.exp(logdet)) ** 0.25)
    return float(np.sqrt(np.sum(np.abs(state.psi) ** 2 * _grid_weights(state.grid, state.M))))


def _energy_gaussian(state):
    me, W = free_matrices(state.slice)
    Kr, Ki = state.K.real, state.K.imag
    Kr_inv = np.linalg.inv(Kr)
    pp = np.outer(state.mom, state.mom) + 0.5 * (Kr + Ki @ Kr_inv @ Ki)
    zz = np.outer(state.q, state.q) + 0.5 * Kr_inv
    c0 = state.slice.potential.coeffs[0]
    return float(np.trace(pp) / (2.0 * me) + 0.5 * np.trace(W @ zz) - state.M * state.slice.dtau * c0)


def expectation(state, observable, i=None, j=None):
    """
    Expectation values.

    Parameters
    ----------
    observable : {'norm', 'z', 'zz', 'energy'}
        ``'z'`` needs site ``i``; ``'zz'`` needs sites ``i`` and ``j``.
        ``'energy'`` is the flat-slice lattice Hamiltonian.
    """
    if observable == "norm":
        return norm(state)
    if state.representation == GAUSSIAN:
        if observable == "z":
            return float(state.q[i])
        if observable == "zz":
            return float(state.q[i] * state.q[j] + 0.5 * np.linalg.inv(state.K.real)[i, j])
        if observable == "energy":
            if not state.slice.potential.is_quadratic_mass():
                raise NonQuadraticPotential("closed-form energy needs a quadratic potential")
            return _energy_gaussian(state)
        raise ValueError(f"unknown observable {observable!r}")

    rho = np.abs(state.psi) ** 2 * _grid_weights(state.grid, state.M)
    total = rho.sum()
    mesh = _mesh(state.grid, state.M)
    if observable == "z":
        return float(np.sum(mesh[i] * rho) / total)
    if observable == "zz":
        return float(np.sum(mesh[i] * mesh[j] * rho) / total)
    if observable == "energy":
        ops = lattice_transcription(state.slice, state.grid)
        psi = state.psi.ravel()
        return float(np.real(np.vdot(psi, ops.flat_hamiltonian() @ psi) / np.vdot(psi, psi)))
    raise ValueError(f"unknown observable {observable!r}")


def overlap(a, b):
    """<a|b> with trapezoid weights; both states on the same grid."""
    _require_grid(a)
    _require_grid(b)
    return complex(np.sum(np.conj(a.psi) * b.psi * _grid_weights(a.grid, a.M)))


def fidelity(a, b):
    """|<a|b>|^2 / (<a|a> <b|b>)."""
    if a.representation == GAUSSIAN and b.representation == GAUSSIAN:
        raise ValueError("sample gaussian states on a grid first")
    if a.representation == GAUSSIAN:
        a = to_grid(a, b.grid)
    if b.representation == GAUSSIAN:
        b = to_grid(b, a.grid)
    return abs(overlap(a, b)) ** 2 / (norm(a) ** 2 * norm(b) ** 2)


# -- exact gaussian evolution ----------------------------------------------


def _logdet_path(Yfun, t, wmax):
    """log det Y(t) along the continuous branch starting from log det Y(0) = 0."""
    n = int(np.ceil(abs(t) * wmax / 0.05)) + 1
    ts = np.linspace(0.0, t, n + 1)
    prev = 1.0 + 0.0j
    angle = 0.0
    for s in ts[1:]:
        cur = np.linalg.det(Yfun(s))
        angle += np.angle(cur / prev)
        prev = cur
    return np.log(abs(prev)) + 1j * angle


def gaussian_free_evolution(state, foliation=None, duration=None):
    """
    Exact evolution of a gaussian state under the flat free Hamiltonian.

    The elapsed time is ``duration`` if given, otherwise the x-advance of the
    flat ``foliation``.  The mean and momentum follow the classical normal
    modes, the kernel follows the closed-form Riccati solution
    K(t) = -i m_e Ydot Y^{-1}, Y(t) = cos(Omega t) + Omega^{-1} sin(Omega t) (i / m_e) K0,
    and the log-normalization picks up i * (classical action) - 1/2 log det Y.

    Raises
    ------
    NonQuadraticPotential
        Unless p = c0 - m^2 z^2 / 2 with m > 0.
    """
    if state.representation != GAUSSIAN:
        raise ValueError("gaussian_free_evolution needs a gaussian state")
    pot = state.slice.potential
    if not pot.is_quadratic_mass():
        raise NonQuadraticPotential(f"potential {pot.coeffs} is not -m^2 z^2 / 2 (+ const) with m > 0")
    if duration is None:
        if foliation is None:
            raise ValueError("give a flat foliation or a duration")
        if not foliation.is_flat():
            raise ValueError("gaussian evolution needs a flat foliation")
        duration = float(foliation.x[0, -1] - foliation.x[0, 0])
    t = float(duration)
    if t == 0.0:
        return replace(state)

    me, W = free_matrices(state.slice)
    w2, U = np.linalg.eigh(W / me)
    w = np.sqrt(w2)

    def fn(f):
        return (U * f) @ U.T

    K0 = state.K
    A = 1j * K0 / me

    def Y(s):
        return fn(np.cos(w * s)) + fn(np.sin(w * s) / w) @ A

    Yt = Y(t)
    Ydot = -fn(w * np.sin(w * t)) + fn(np.cos(w * t)) @ A
    K = -1j * me * Ydot @ np.linalg.inv(Yt)
    K = 0.5 * (K + K.T)

    q0, p0 = state.q, state.mom
    q = fn(np.cos(w * t)) @ q0 + fn(np.sin(w * t) / w) @ p0 / me
    p = me * (-fn(w * np.sin(w * t)) @ q0 + fn(np.cos(w * t)) @ p0 / me)
    action = 0.5 * (p @ q - p0 @ q0)
    c0 = pot.coeffs[0]
    log_norm = state.log_norm + 1j * action - 0.5 * _logdet_path(Y, t, w.max()) + 1j * state.M * state.slice.dtau * c0 * t
    return WaveFunctional(state.slice, GAUSSIAN, K=K, q=q, mom=p, log_norm=complex(log_norm))


# -- evolution along foliations ----------------------------------------------


@dataclass
class EvolutionReport:
    scheme: str
    steps: int
    norm_drift: np.ndarray
    energy_drift: np.ndarray
    condition_numbers: np.ndarray
    local_error: np.ndarray
    final_state: Optional[WaveFunctional] = field(default=None, repr=False)

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "steps": self.steps,
            "norm_drift": self.norm_drift.tolist(),
            "energy_drift": self.energy_drift.tolist(),
            "condition_numbers": self.condition_numbers.tolist(),
            "local_error": self.local_error.tolist(),
            "max_norm_drift": float(np.max(np.abs(self.norm_drift))) if self.steps else 0.0,
            "max_energy_drift": float(np.max(np.abs(self.energy_drift))) if self.steps else 0.0,
        }


def _geometry(foliation, alpha, slice_):
    x, y = foliation.positions(alpha)
    vx, vy = foliation.velocity(alpha)
    geo = slice_.moved(x, y)
    xd, yd = geo.tangent()
    return geo, xd, yd, vx, vy


def _cond2(xd, yd):
    # 2x2 matrix [[ydot, xdot], [xdot, ydot]] has singular values |ydot +- xdot|
    s1, s2 = np.abs(yd + xd), np.abs(yd - xd)
    return float(np.max(np.maximum(s1, s2) / np.minimum(s1, s2)))


def evolve(state, foliation, steps, scheme="crank-nicolson", tol_step=TOL_STEP, eps_light=EPS_LIGHT):
    """
    Evolve ``state`` from the first to the last slice of ``foliation``.

    Parameters
    ----------
    state : WaveFunctional
        Full-grid for any foliation; gaussian only on flat foliations with a
        quadratic potential (delegates to :func:`gaussian_free_evolution`).
    foliation : Foliation
        Periodic in tau with ``n_tau == state.M``.
    steps : int
    scheme : {'crank-nicolson', 'rk4'}
        Crank-Nicolson uses the generator at the step midpoint.
    tol_step : float or None
        Upper bound on the leading-order local error estimate per step
        (h^3 |G^3 Psi| / 12 for Crank-Nicolson, h^5 |G^5 Psi| / 120 for RK4,
        relative to |Psi|).  ``None`` disables the check.

    Returns
    -------
    (WaveFunctional, EvolutionReport)

    Raises
    ------
    LightlikePoint
        With ``step`` and ``site`` set.
    StepRejected
        When the local error estimate exceeds ``tol_step``.
    """
    if scheme not in ("crank-nicolson", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if foliation.A == 0.0 or steps == 0:
        empty = np.zeros(0)
        return state, EvolutionReport(scheme, 0, empty, empty, empty, empty, state)
    if not foliation.periodic or foliation.n_tau != state.M:
        raise ValueError(f"foliation must be periodic with n_tau == M == {state.M}")

    if state.representation == GAUSSIAN:
        if not foliation.is_flat():
            raise ValueError("gaussian states evolve only along flat foliations")
        out = gaussian_free_evolution(state, foliation)
        empty = np.zeros(0)
        return out, EvolutionReport("exact-gaussian", 0, empty, empty, empty, empty, out)

    ops = lattice_transcription(state.slice, state.grid)
    H_flat = ops.flat_hamiltonian()
    W = _grid_weights(state.grid, state.M).ravel()
    psi = state.psi.ravel().copy()

    def wnorm(v):
        return np.sqrt(np.sum(np.abs(v) ** 2 * W))

    def energy(v):
        return float(np.real(np.vdot(v, H_flat @ v) / np.vdot(v, v)))

    n0, e0 = wnorm(psi), energy(psi)
    h = foliation.A / steps
    I = sp.identity(ops.size, dtype=complex, format="csc")
    norm_drift = np.empty(steps)
    energy_drift = np.empty(steps)
    conds = np.empty(steps)
    lerr = np.empty(steps)

    def gen(alpha, n):
        try:
            geo, xd, yd, vx, vy = _geometry(foliation, alpha, state.slice)
            G = ops.generator(xd, yd, vx, vy, eps_light)
        except LightlikePoint as exc:
            raise LightlikePoint(f"step {n}: {exc}", site=exc.site, step=n) from exc
        return G, _cond2(xd, yd), np.concatenate([xd, yd, vx, vy])

    cached_key, lu = None, None
    for n in range(steps):
        a0 = n * h
        if scheme == "crank-nicolson":
            G, conds[n], key = gen(a0 + 0.5 * h, n)
            if cached_key is None or not np.array_equal(key, cached_key):
                lu = spla.splu((I - 0.5 * h * G).tocsc())
                cached_key = key
            g1 = G @ psi
            g3 = G @ (G @ g1)
            lerr[n] = h ** 3 * wnorm(g3) / (12.0 * wnorm(psi))
            psi = lu.solve(psi + 0.5 * h * g1)
        else:
            G0, _, _ = gen(a0, n)
            Gm, conds[n], _ = gen(a0 + 0.5 * h, n)
            G1, _, _ = gen(a0 + h, n)
            k1 = G0 @ psi
            k2 = Gm @ (psi + 0.5 * h * k1)
            k3 = Gm @ (psi + 0.5 * h * k2)
            k4 = G1 @ (psi + h * k3)
            g5 = Gm @ (Gm @ (Gm @ (Gm @ (Gm @ psi))))
            lerr[n] = h ** 5 * wnorm(g5) / (120.0 * wnorm(psi))
            psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if tol_step is not None and lerr[n] > tol_step:
            raise StepRejected(f"step {n}: local error estimate {lerr[n]:.3e} exceeds tol_step {tol_step:g}")
        norm_drift[n] = wnorm(psi) / n0 - 1.0
        energy_drift[n] = energy(psi) - e0

    x, y = foliation.positions(foliation.A)
    final = WaveFunctional(state.slice.moved(x, y), FULL_GRID, psi=psi.reshape(state.psi.shape), grid=state.grid)
    return final, EvolutionReport(scheme, steps, norm_drift, energy_drift, conds, lerr, final)


def reparameterization_invariance_check(state, amplitude, pullback="lattice", eps_light=EPS_LIGHT):
    """
    Relative change of Psi under a tangential deformation of its slice.

    The slice geometry moves by amplitude * (xdot, ydot) through one RK4 step
    of the evolution generator, and the field argument moves by
    amplitude * zdot.  Returns |Psi_after - Psi| / (amplitude |Psi|); zero
    when amplitude == 0.

    Parameters
    ----------
    pullback : {'lattice', 'spline'}
        ``'lattice'`` moves the field argument to first order with the same
        (1/dtau) d/dz_i transcription the generator uses, so the deviation is
        the O(amplitude) curvature of a finite step.  ``'spline'`` resamples
        the grid tensor at z + amplitude * zdot by cubic splines, adding the
        mismatch between the two derivative discretizations.
    """
    _require_grid(state)
    if pullback not in ("lattice", "spline"):
        raise ValueError("pullback must be 'lattice' or 'spline'")
    if amplitude == 0.0:
        return 0.0
    ops = lattice_transcription(state.slice, state.grid)
    xd, yd = state.slice.tangent()
    G = ops.generator(xd, yd, xd, yd, eps_light)
    psi = state.psi.ravel()
    h = amplitude
    k1 = G @ psi
    k2 = G @ (psi + 0.5 * h * k1)
    k3 = G @ (psi + 0.5 * h * k2)
    k4 = G @ (psi + h * k3)
    geo = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    grid, M = state.grid, state.M
    w = _grid_weights(grid, M)
    if pullback == "lattice":
        _, _, trans = ops.site_parts()
        after = geo + h * sum(trans[i] @ geo for i in range(M))
        after = after.reshape(state.psi.shape)
    else:
        geo = geo.reshape(state.psi.shape)
        mesh = _mesh(grid, M)
        if M <= 2:
            shift = [np.zeros_like(mesh[0]) for _ in range(M)]
        else:
            shift = [(mesh[(i + 1) % M] - mesh[(i - 1) % M]) / (2.0 * state.slice.dtau) for i in range(M)]
        coords = np.stack([(mesh[i] + h * shift[i] + grid.half_width) / grid.dz for i in range(M)])
        after = map_coordinates(geo.real, coords, order=3, mode="constant", cval=0.0) + 1j * map_coordinates(
            geo.imag, coords, order=3, mode="constant", cval=0.0
        )
    num = np.sqrt(np.sum(np.abs(after - state.psi) ** 2 * w))
    return float(num / (abs(h) * np.sqrt(np.sum(np.abs(state.psi) ** 2 * w))))


# -- snapshots --------------------------------------------------------------

_MAGIC = b"VDLSNAP1"


def write_snapshot(path, state):
    """Binary snapshot: magic, uint32 header length, JSON header, complex128 data."""
    _require_grid(state)
    header = {
        "version": 1,
        "shape": list(state.psi.shape),
        "dtau": state.slice.dtau,
        "grid": state.grid.to_dict(),
        "bounds": [-state.grid.half_width, state.grid.half_width],
        "slice": state.slice.to_dict(),
        "dtype": "complex128",
        "byteorder": "little",
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(state.psi, dtype="<c16").tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a vardiff_lab snapshot")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        data = np.frombuffer(fh.read(), dtype="<c16")
    grid = ZGrid(**header["grid"])
    psi = data.reshape(header["shape"]).astype(complex)
    return WaveFunctional(LatticeSlice.from_dict(header["slice"]), FULL_GRID, psi=psi, grid=grid)
