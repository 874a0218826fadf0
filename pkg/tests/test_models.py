import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vardiff_lab.errors import ConfigError, DegenerateGrid
from vardiff_lab.models import (
    FieldGrid,
    LagrangianModel,
    PolynomialPotential,
    eval_lagrangian,
    eval_partials,
    euler_lagrange_residual,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)
coeffs = st.lists(st.floats(-2.0, 2.0, allow_nan=False), min_size=1, max_size=5)


def test_potential_at_zero_is_c0():
    assert PolynomialPotential((0.7, 2.0, -3.0))(0.0) == 0.7


def test_potential_derivative_coefficients():
    assert PolynomialPotential((1.0, 2.0, 3.0, 4.0)).derivative().coeffs == (2.0, 6.0, 12.0)
    assert PolynomialPotential((5.0,)).derivative().coeffs == (0.0,)


@given(coeffs, finite)
def test_potential_derivative_matches_fd(c, z):
    p = PolynomialPotential(tuple(c))
    h = 1e-6
    fd = (p(z + h) - p(z - h)) / (2 * h)
    assert abs(fd - p.derivative()(z)) <= 1e-5 * max(1.0, abs(fd))


def test_quadratic_mass_detection():
    assert PolynomialPotential((0.0, 0.0, -0.5)).is_quadratic_mass()
    assert PolynomialPotential((0.3, 0.0, -2.0)).mass_squared() == 4.0
    assert not PolynomialPotential((0.0, 0.0, 0.5)).is_quadratic_mass()
    assert not PolynomialPotential((0.0, 0.0, -0.5, 0.1)).is_quadratic_mass()


def test_eval_lagrangian_examples(hyperbolic, elliptic):
    assert eval_lagrangian(hyperbolic, 0, 0, 0, 0, 0) == 0.0
    assert eval_lagrangian(hyperbolic, 0, 0, 1, 0, 0) == -0.5
    assert eval_lagrangian(elliptic, 0, 0, 0, 3, 4) == 12.5


def test_eval_partials_examples(hyperbolic, elliptic):
    assert eval_partials(hyperbolic, 0, 0, 1, 2, 3) == (2.0, -3.0, -1.0)
    assert eval_partials(elliptic, 0, 0, 0, 2, 3) == (2.0, 3.0, 0.0)
    for m in (hyperbolic, LagrangianModel("scalar-elliptic", PolynomialPotential((0, 0, -0.5)))):
        assert eval_partials(m, 0, 0, 0, 0, 0) == (0.0, 0.0, 0.0)


@given(
    st.sampled_from(["scalar-hyperbolic", "scalar-elliptic"]),
    coeffs,
    finite,
    finite,
    finite,
)
def test_partials_match_finite_differences(kind, c, z, zx, zy):
    m = LagrangianModel(kind, PolynomialPotential(tuple(c)))
    h = 1e-5
    f = lambda a, b, w: eval_lagrangian(m, 0.0, 0.0, a, b, w)  # noqa: E731
    fd = (
        (f(z, zx + h, zy) - f(z, zx - h, zy)) / (2 * h),
        (f(z, zx, zy + h) - f(z, zx, zy - h)) / (2 * h),
        (f(z + h, zx, zy) - f(z - h, zx, zy)) / (2 * h),
    )
    an = eval_partials(m, 0.0, 0.0, z, zx, zy)
    for a, b in zip(an, fd):
        assert abs(a - b) <= 1e-6 * max(1.0, abs(a))


def test_model_config_round_trip_and_strictness():
    m = LagrangianModel.from_config({"kind": "scalar-elliptic", "potential": [0, 1]})
    assert LagrangianModel.from_config(m.to_config()) == m
    with pytest.raises(ConfigError) as exc:
        LagrangianModel.from_config({"kind": "scalar-elliptic", "mass": 1})
    assert exc.value.key == "model.mass"
    with pytest.raises(ConfigError):
        LagrangianModel.from_config({"kind": "vector"})


def _grid(f, n, x0=0.0, x1=1.0):
    x, y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(0, 1, n), indexing="ij")
    return FieldGrid(x, y, f(x, y))


def test_el_residual_constant_field(hyperbolic):
    m = LagrangianModel("scalar-hyperbolic")
    r = euler_lagrange_residual(m, _grid(lambda x, y: 0 * x + 2.0, 9))
    assert r.shape == (7, 7)
    assert np.max(np.abs(r)) < 1e-12


def test_el_residual_harmonic_xy_is_exact(elliptic):
    r = euler_lagrange_residual(elliptic, _grid(lambda x, y: x * y, 17))
    assert np.max(np.abs(r)) < 1e-11


def test_el_residual_plane_wave_order_two(hyperbolic):
    errs = []
    ns = [17, 33, 65]
    for n in ns:
        r = euler_lagrange_residual(hyperbolic, _grid(lambda x, y: np.cos(x), n, -0.5, 0.5))
        errs.append(np.max(np.abs(r)))
    slope = np.polyfit(np.log([1 / (n - 1) for n in ns]), np.log(errs), 1)[0]
    assert slope >= 1.8


def test_degenerate_grid_rejected(hyperbolic):
    x = np.zeros((5, 5))
    y = np.tile(np.linspace(0, 1, 5), (5, 1))
    with pytest.raises(DegenerateGrid):
        euler_lagrange_residual(hyperbolic, FieldGrid(x, y, x))
