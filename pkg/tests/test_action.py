import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vardiff_lab.action import action_integral, indicatrice_gradient, phi, propagation_time
from vardiff_lab.curves import Curve, Deformation, ParamSurface
from vardiff_lab.errors import DegenerateJacobian, NonTransversalDeformation
from vardiff_lab.models import LagrangianModel, PolynomialPotential


def square(fz, n=17):
    return ParamSurface.from_functions(lambda t, a: t, lambda t, a: a, fz, n, n)


def vertical(fz, n=33):
    return Curve.from_functions(lambda t: 0 * t, lambda t: t, fz, n)


def test_action_constant_field(hyperbolic):
    s = square(lambda t, a: 1.0 + 0 * t)
    assert action_integral(hyperbolic, s) == pytest.approx(-0.5, abs=1e-14)
    assert propagation_time(hyperbolic, s) == pytest.approx(-0.5, abs=1e-14)


def test_action_z_equals_x(hyperbolic):
    errs = []
    for n in (17, 33, 65):
        errs.append(abs(action_integral(hyperbolic, square(lambda t, a: t, n)) - 1.0 / 3.0))
    assert errs[-1] < 1e-4
    assert np.log2(errs[1] / errs[2]) > 1.8


def test_zero_area_sweep(hyperbolic):
    s = ParamSurface.from_functions(lambda t, a: 0 * t + 0 * a, lambda t, a: t + 0 * a, lambda t, a: t, 9, 5)
    assert action_integral(hyperbolic, s) == 0.0
    assert propagation_time(hyperbolic, s) == 0.0


def test_mixed_sign_jacobian_raises(hyperbolic):
    s = ParamSurface.from_functions(lambda t, a: t, lambda t, a: a * (t - 0.5), lambda t, a: 0 * t, 9, 5)
    with pytest.raises(DegenerateJacobian):
        action_integral(hyperbolic, s)


def test_phi_examples(hyperbolic):
    n = 33
    d = Deformation(np.ones(n), np.zeros(n), np.zeros(n))
    assert phi(hyperbolic, vertical(lambda t: 0 * t), d) == 0.0
    val = phi(hyperbolic, vertical(lambda t: t), d)
    assert val == pytest.approx(-2.0 / 3.0, abs=5e-4)
    assert phi(hyperbolic, vertical(lambda t: t), d.scaled(2.5)) == pytest.approx(2.5 * val, rel=1e-14)


def test_phi_tangential_raises(hyperbolic):
    n = 17
    c = vertical(lambda t: t, n)
    d = Deformation(np.zeros(n), np.ones(n), np.ones(n))
    with pytest.raises(NonTransversalDeformation) as exc:
        phi(hyperbolic, c, d)
    assert exc.value.index == 0


def test_indicatrice_examples(hyperbolic):
    n = 17
    d = Deformation(np.ones(n), np.zeros(n), np.zeros(n))
    g = indicatrice_gradient(hyperbolic, vertical(lambda t: 0 * t, n), d)
    assert np.all(g.gz == 0) and np.all(g.gx == 0) and np.all(g.gy == 0)
    g = indicatrice_gradient(hyperbolic, vertical(lambda t: 1 + 0 * t, n), d)
    np.testing.assert_allclose(g.gx, -0.5)


curve_coeffs = st.lists(st.floats(-1, 1), min_size=3, max_size=3)


@given(
    st.sampled_from(["scalar-hyperbolic", "scalar-elliptic"]),
    curve_coeffs,
    curve_coeffs,
    st.floats(0.2, 2.0),
)
def test_euler_identity(kind, cz, cd, push):
    m = LagrangianModel(kind, PolynomialPotential((0.1, 0.2, -0.5)))
    n = 21
    c = Curve.from_functions(lambda t: 0.3 * t * t, lambda t: t, lambda t: cz[0] + cz[1] * t + cz[2] * t * t, n)
    t = c.tau
    d = Deformation(push + 0.1 * np.sin(3 * t), cd[0] * t, cd[1] + cd[2] * np.cos(t))
    val = phi(m, c, d)
    g = indicatrice_gradient(m, c, d)
    assert abs(g.contract(c, d) - val) <= 1e-10 * max(1.0, abs(val))


def test_indicatrice_matches_fd_of_phi(hyperbolic):
    n = 15
    c = Curve.from_functions(lambda t: 0.2 * t, lambda t: t, lambda t: np.sin(t), n)
    t = c.tau
    d = Deformation(1 + 0.2 * t, 0.1 * t, np.cos(t))
    g = indicatrice_gradient(hyperbolic, c, d)
    h = 1e-6
    scale = c.weights * c.dtau
    for comp, gv in (("dx", g.gx), ("dy", g.gy), ("dz", g.gz)):
        for i in (0, 5, 14):
            dp, dm = Deformation(d.dx.copy(), d.dy.copy(), d.dz.copy()), Deformation(d.dx.copy(), d.dy.copy(), d.dz.copy())
            getattr(dp, comp)[i] += h
            getattr(dm, comp)[i] -= h
            fd = (phi(hyperbolic, c, dp) - phi(hyperbolic, c, dm)) / (2 * h) / scale[i]
            assert abs(fd - gv[i]) <= 1e-5 * max(1.0, abs(gv[i]))


def test_orientation_flip(hyperbolic):
    s = ParamSurface.from_functions(lambda t, a: t + 0.2 * a, lambda t, a: a, lambda t, a: np.sin(t + a), 17, 17)
    r = s.reversed_alpha()
    assert propagation_time(hyperbolic, r) == pytest.approx(-propagation_time(hyperbolic, s), rel=1e-12)
    assert action_integral(hyperbolic, r) == pytest.approx(-action_integral(hyperbolic, s), rel=1e-12)


def test_t_equals_j_and_reparameterized_sweep(hyperbolic):
    phi_map = lambda t: t + 0.2 * np.sin(2 * np.pi * t) * t * (1 - t)  # noqa: E731
    errs = []
    for n in (17, 33, 65):
        s = ParamSurface.from_functions(lambda t, a: t, lambda t, a: a, lambda t, a: np.sin(t) * a, n, n)
        sr = ParamSurface.from_functions(
            lambda t, a: phi_map(t), lambda t, a: a + 0 * t, lambda t, a: np.sin(phi_map(t)) * a, n, n
        )
        assert abs(propagation_time(hyperbolic, s) - action_integral(hyperbolic, s)) < 1e-12
        errs.append(abs(propagation_time(hyperbolic, sr) - propagation_time(hyperbolic, s)))
    assert np.log2(errs[1] / errs[2]) > 1.8


def test_parallel_slices_are_bitwise_identical(hyperbolic):
    s = ParamSurface.from_functions(lambda t, a: t, lambda t, a: a + 0.1 * t * t, lambda t, a: np.cos(3 * t * a), 17, 17)
    assert propagation_time(hyperbolic, s, jobs=4) == propagation_time(hyperbolic, s)
