import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import special_ortho_group

from plap.continuum import (
    QuadratureSpec, ScalarField, ball_volume, c_p, closed_form_1d, el_residual, export_field_grid, i_p,
    infinity_laplacian, isotropic_moment, laplacian, linear_field, norm_field, spike_family,
    spike_integral, squared_norm_field, tensor_contraction_check,
)
from plap.density import GaussianMixture, Uniform, make_cluster_instance
from plap.graph import EdgeKernel

IND = EdgeKernel("indicator")


# -- C_p -------------------------------------------------------------------------------

@pytest.mark.parametrize("p,d,expected", [(2, 1, 2 / 3), (2, 2, math.pi / 4), (4, 1, 2 / 5)])
def test_c_p_indicator(p, d, expected):
    assert c_p(IND, p, d) == pytest.approx(expected, abs=1e-10)


def test_c_p_gaussian_matches_direct_integral():
    # d = 1: int z^2 phi(|z|)^2 dz over the truncated support, done independently
    k = EdgeKernel("gaussian")
    ref, _ = integrate.quad(lambda z: z**2 * math.exp(-z * z), -k.support, k.support, epsabs=1e-13)
    assert c_p(k, 2, 1) == pytest.approx(ref, rel=1e-9)


def test_isotropic_moment_values():
    # E[theta_1^2] = 1/d, E[theta_1^4] = 3/(d(d+2))
    for d in (1, 2, 3, 5):
        assert isotropic_moment(2, d) == pytest.approx(1 / d)
        assert isotropic_moment(4, d) == pytest.approx(3 / (d * (d + 2)))


# -- I_p --------------------------------------------------------------------------------

def test_i_p_linear_uniform():
    assert i_p(linear_field([1.0]), Uniform.unit(1), 2).value == pytest.approx(1.0, abs=1e-8)


def test_i_p_cluster_density():
    inst = make_cluster_instance(0.25)
    assert i_p(linear_field([1.0]), inst.density, 2).value == pytest.approx(0.5, abs=1e-8)


def test_i_p_cluster_target_bound():
    for eps in (0.25, 0.1, 0.01):
        inst = make_cluster_instance(eps)
        t = inst.target
        f = ScalarField(lambda x: t(x[:, 0]), 1, grad=lambda x: t.derivative(x)[:, :1],
                        breakpoints=t.breakpoints)
        # f* has slope 1/eps on [-eps, eps] where mu = b = sqrt(eps): 2 eps * b^2 / eps^2 = 2
        assert i_p(f, inst.density, 2).value == pytest.approx(2.0, abs=1e-8)


def test_i_p_quadrature_variants_agree():
    box = Uniform((0.0, 0.0), (1.0, 2.0))
    f = squared_norm_field(2)
    exact = integrate.dblquad(lambda y, x: 4 * (x * x + y * y) / 4, 0, 1, 0, 2)[0]
    tensor = i_p(f, box, 2, QuadratureSpec("tensor", points_per_axis=40))
    mc = i_p(f, box, 2, QuadratureSpec("monte_carlo", samples=200_000, seed=1))
    assert tensor.value == pytest.approx(exact, rel=1e-10)
    assert abs(mc.value - exact) <= 4 * mc.error


def test_i_p_rotation_invariance():
    mix = GaussianMixture(((0.0, 0.0),), (1.0,), (1.0,))
    base = ScalarField(lambda x: np.exp(-0.5 * np.sum(x * x, axis=1)), 2)
    quad = QuadratureSpec("tensor", points_per_axis=120)
    ref = i_p(base, mix, 4, quad).value
    for seed in range(3):
        R = special_ortho_group.rvs(2, random_state=seed)
        rot = ScalarField(lambda x, R=R: base.fn(x @ R.T), 2)
        assert i_p(rot, mix, 4, quad).value == pytest.approx(ref, rel=1e-6)


# -- closed form ---------------------------------------------------------------------------

def test_closed_form_uniform_is_linear():
    for p in (2, 4, math.inf):
        f = closed_form_1d(Uniform.unit(1), [(0, 0), (1, 1)], p)
        xs = np.linspace(0, 1, 11)
        np.testing.assert_allclose(f(xs), xs, atol=1e-12)


def test_closed_form_flat_cluster_is_linear():
    inst = make_cluster_instance(0.25)
    f = closed_form_1d(inst.density, [(-1, -1), (1, 1)], 2)
    xs = np.linspace(-1, 1, 21)
    np.testing.assert_allclose(f(xs), xs, atol=1e-12)


def test_closed_form_slope_ratio():
    inst = make_cluster_instance(0.01)
    f = closed_form_1d(inst.density, [(-1, -1), (1, 1)], 2)
    inside = f.gradient(np.array([[0.0]]))[0, 0]
    outside = f.gradient(np.array([[0.5]]))[0, 0]
    assert inside / outside == pytest.approx((inst.a / inst.b) ** 2, rel=1e-9)
    assert inside / outside == pytest.approx(25.41, abs=0.01)


def test_closed_form_constant_outside_hull_and_errors():
    inst = make_cluster_instance(0.1)
    f = closed_form_1d(inst.density, [(-0.5, 2.0), (0.5, 3.0)], 4)
    assert f(-0.9) == pytest.approx(2.0) and f(0.9) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        closed_form_1d(inst.density, [(0.0, 1.0)], 2)
    with pytest.raises(ValueError):
        closed_form_1d(inst.density, [(0.0, 1.0), (0.0, 2.0)], 2)


@pytest.mark.parametrize("p", [2, 3, 4, math.inf])
def test_closed_form_solves_euler_lagrange(p):
    inst = make_cluster_instance(0.01)
    f = closed_form_1d(inst.density, [(-1, -1), (1, 1)], p)
    rng = np.random.default_rng(0)
    xs = rng.uniform(-0.999, 0.999, 100)
    xs = xs[np.min(np.abs(xs[:, None] - np.array([-0.01, 0.01])), axis=1) > 1e-3]
    if math.isinf(p):
        # linear interpolation: every second derivative vanishes
        assert np.max(np.abs(laplacian(f, xs, fd_step=1e-4))) <= 1e-4
        return
    res = el_residual(f, inst.density, p, xs, fd_step=1e-4)
    assert np.max(np.abs(res)) <= 1e-4


def test_el_residual_examples():
    inst = make_cluster_instance(0.01)
    f = closed_form_1d(inst.density, [(-1, -1), (1, 1)], 2)
    assert abs(el_residual(f, inst.density, 2, 0.5, fd_step=1e-4)) <= 1e-4
    box = Uniform((-2.0, -2.0), (2.0, 2.0))
    for p in (2, 3, 6):
        assert el_residual(linear_field([0.3, -1.2]), box, p, [0.4, 0.1]) == 0.0
    sq = squared_norm_field(2)
    x = np.array([0.7, -0.2])
    assert laplacian(sq, x) == pytest.approx(4.0)
    assert infinity_laplacian(sq, x) == pytest.approx(2.0)
    assert el_residual(sq, box, 2, x) == pytest.approx(4.0)
    assert el_residual(sq.without_derivatives(), box, 2, x, fd_step=1e-3) == pytest.approx(4.0, abs=1e-6)


def test_el_residual_rejects_zero_density():
    with pytest.raises(ValueError):
        el_residual(linear_field([1.0]), Uniform.unit(1), 2, 2.0)


# -- infinity Laplacian -----------------------------------------------------------------------

def test_infinity_laplacian_examples():
    assert infinity_laplacian(norm_field(3), [1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert infinity_laplacian(squared_norm_field(3), [0.3, 0.1, -2.0]) == pytest.approx(2.0)
    const = ScalarField(lambda x: np.full(len(x), 5.0), 2)
    assert infinity_laplacian(const, [0.2, 0.3]) == 0.0


@settings(max_examples=30, deadline=None)
@given(x=st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.3))
def test_norm_is_infinity_harmonic_not_harmonic(x):
    f = norm_field(3).without_derivatives()
    r = np.linalg.norm(x)
    assert abs(infinity_laplacian(f, x, fd_step=1e-4)) <= 1e-4
    assert laplacian(f, x, fd_step=1e-4) == pytest.approx(2 / r, abs=1e-4)


# -- degenerate families ------------------------------------------------------------------------

def test_spike_scaling_and_bound():
    box = Uniform((-1.0,) * 3, (1.0,) * 3)
    vals = {}
    for eps in (0.1, 0.05, 0.025):
        rep = spike_family(2, 3, eps, box)
        # exact: mu^2 |S^2| eps^(d - p) / d
        exact = (1 / 8) ** 2 * 4 * math.pi * eps / 3
        assert rep.value == pytest.approx(exact, rel=1e-8)
        assert rep.value <= rep.stated_bound * (1 + 1e-12)
        vals[eps] = rep.value
    assert vals[0.05] / vals[0.1] == pytest.approx(0.5, rel=0.05)
    assert vals[0.025] / vals[0.05] == pytest.approx(0.5, rel=0.05)


def test_spike_value_decreases_with_eps():
    for p, d in ((1, 2), (2, 3), (1, 3)):
        box = Uniform((-1.0,) * d, (1.0,) * d)
        vals = [spike_family(p, d, e, box).value for e in (0.1, 0.05, 0.025, 0.0125)]
        assert all(b < a for a, b in zip(vals, vals[1:]))


def test_spike_contrast_above_critical_exponent():
    box = Uniform((-1.0,) * 3, (1.0,) * 3)
    vals = [spike_integral(4, 3, e, box).value for e in (0.1, 0.05, 0.025)]
    assert vals[1] / vals[0] == pytest.approx(2.0, rel=1e-6)
    assert vals[2] > vals[1] > vals[0]


def test_log_family_oracle_and_spread():
    box = Uniform((-1.0, -1.0), (1.0, 1.0))
    mu2 = (1 / 4) ** 2
    scaled = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        rep = spike_family(2, 2, eps, box)
        lam = math.log((1 + eps) / eps)
        # 2 pi mu^2 int_0^1 (2r / ((r^2 + eps) lam))^2 r dr, integrated analytically
        exact = 2 * math.pi * mu2 * 4 / lam**2 * 0.5 * (math.log((1 + eps) / eps) - 1 / (1 + eps))
        assert rep.value == pytest.approx(exact, rel=1e-6)
        assert rep.value <= rep.corrected_bound
        scaled.append(rep.value * lam)
    assert max(scaled) / min(scaled) <= 2.0


def test_spike_family_rejects_supercritical():
    with pytest.raises(ValueError):
        spike_family(3, 2, 0.1, Uniform((-1.0, -1.0), (1.0, 1.0)))


# -- tensor identity ------------------------------------------------------------------------------

def test_tensor_quadratic_example():
    rep = tensor_contraction_check(IND, 2, 2, [1.0, 0.0], mc_samples=400_000, seed=0)
    # int_{|z|<=1} z_1^2 dz = pi / 4
    assert rep.rhs == pytest.approx(math.pi / 4, rel=1e-10)
    assert abs(rep.lhs - rep.rhs) <= 3 * rep.mc_stderr


def test_tensor_odd_and_zero():
    rep = tensor_contraction_check(IND, 3, 3, [0.3, -0.4, 1.0], mc_samples=400_000, seed=1)
    assert rep.rhs == 0.0 and abs(rep.lhs) <= 3 * rep.mc_stderr
    rep = tensor_contraction_check(IND, 2, 2, [0.0, 0.0], mc_samples=1000)
    assert rep.lhs == 0.0 and rep.rhs == 0.0


def test_tensor_exact_moment_quartic():
    # <u, z>^4 on the unit disc: (3/8) * 2 pi / 6 for |u| = 1, i.e. pi / 8
    rep = tensor_contraction_check(IND, 4, 2, [0.6, 0.8], mc_samples=400_000, seed=2)
    assert rep.rhs_exact == pytest.approx(math.pi / 8, rel=1e-10)
    assert abs(rep.lhs - rep.rhs_exact) <= 3 * rep.mc_stderr


def test_tensor_rhs_for_gaussian_weight():
    k = EdgeKernel("gaussian")
    rep = tensor_contraction_check(k, 2, 3, [1.0, 1.0, 1.0], mc_samples=400_000, seed=3)
    radial, _ = integrate.quad(lambda r: float(k(r)) * r**4, 0, k.support, epsabs=1e-13)
    assert rep.rhs == pytest.approx(4 * math.pi * radial / 3 * 3, rel=1e-9)
    assert abs(rep.lhs - rep.rhs) <= 3 * rep.mc_stderr


def test_ball_volume():
    assert ball_volume(2) == pytest.approx(math.pi)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_export_field_grid(tmp_path):
    export_field_grid(linear_field([2.0]), tmp_path / "f.csv", 0.0, 1.0, n=3)
    assert (tmp_path / "f.csv").read_bytes() == b"x,value\r\n0.0,0.0\r\n0.5,1.0\r\n1.0,2.0\r\n"
