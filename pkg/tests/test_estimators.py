import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import lsq_linear

from plap.density import Uniform, make_cluster_instance
from plap.estimators import (
    RegressionSample, SymmetrizedModel, cross_validate, cross_validate_rkhs, empirical_error, export_cv_curve,
    export_fit, fit_lipschitz, fit_rkhs, make_regression_sample, project_lipschitz,
)
from plap.spectrum import kernel_gram

HALF = Uniform((-1.0,), (1.0,))


def qp_oracle(y, caps):
    """Projection onto |f[i+1] - f[i]| <= caps[i] as bounded least squares.

    With f = f_0 + cumsum(d) the constraints become the box |d| <= caps,
    which bounded-variable least squares solves exactly.
    """
    n = len(y)
    A = np.tril(np.ones((n, n)))
    lo = np.concatenate([[-np.inf], -caps])
    hi = np.concatenate([[np.inf], caps])
    res = lsq_linear(A, y, bounds=(lo, hi + 1e-300), method="bvls", tol=1e-14)
    return A @ res.x


def greedy_clip(y, caps):
    f = np.array(y, dtype=float)
    for i in range(1, len(f)):
        f[i] = np.clip(f[i], f[i - 1] - caps[i - 1], f[i - 1] + caps[i - 1])
    return f


# -- Lipschitz fit -----------------------------------------------------------------------------

def test_lipschitz_examples():
    s = RegressionSample([0.0, 1.0], [0.0, 10.0])
    np.testing.assert_allclose(fit_lipschitz(s, 1.0).values, [4.5, 5.5], atol=1e-12)
    ys = np.array([0.3, -1.0, 2.0, 0.5])
    s = RegressionSample(np.linspace(0, 1, 4), ys)
    np.testing.assert_array_equal(fit_lipschitz(s, 1e6).values, ys)
    np.testing.assert_allclose(fit_lipschitz(s, 0.0).values, ys.mean(), atol=1e-12)


def test_lipschitz_prediction_is_interpolation():
    m = fit_lipschitz(RegressionSample([0.0, 1.0], [0.0, 10.0]), 1.0)
    assert m(0.5) == pytest.approx(5.0)
    assert m(-3.0) == pytest.approx(4.5) and m(7.0) == pytest.approx(5.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 25), L=st.floats(0.01, 20.0))
def test_lipschitz_matches_qp_oracle(seed, n, L):
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.uniform(-1, 1, n))
    ys = rng.normal(0, 2, n)
    caps = L * np.diff(xs)
    f = project_lipschitz(ys, caps)
    ref = qp_oracle(ys, caps)
    assert np.sum((f - ys) ** 2) <= np.sum((ref - ys) ** 2) + 1e-8
    np.testing.assert_allclose(f, ref, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 200), L=st.floats(0.0, 50.0))
def test_lipschitz_feasible_fixed_point_and_beats_clipping(seed, n, L):
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.uniform(-1, 1, n))
    ys = np.sign(xs) + 0.3 * rng.standard_normal(n)
    s = RegressionSample(xs, ys)
    f = fit_lipschitz(s, L).values
    caps = L * np.diff(s.xs)
    assert np.all(np.abs(np.diff(f)) <= caps + 1e-8)
    # a projected gradient step of size n/4 on (1/n)|f - y|^2 lands back on f
    step = f - 0.5 * (f - s.ys)
    np.testing.assert_allclose(project_lipschitz(step, caps), f, atol=1e-8)
    assert np.sum((f - s.ys) ** 2) <= np.sum((greedy_clip(s.ys, caps) - s.ys) ** 2) + 1e-9


def test_project_lipschitz_rejects_bad_caps():
    with pytest.raises(ValueError):
        project_lipschitz([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        project_lipschitz([1.0, 2.0], [-1.0])


# -- RKHS fit ---------------------------------------------------------------------------------------

def test_rkhs_two_point_oracle():
    s = RegressionSample([-0.5, 0.5], [0.0, 1.0])
    m = fit_rkhs(s, 0.1, HALF)
    G = np.array([[2.0, 0.0], [0.0, 2.0]])
    alpha = np.linalg.solve(G + 2 * 0.1 * np.eye(2), [0.0, 1.0])
    np.testing.assert_allclose(m.alpha, alpha, atol=1e-14)
    assert m(-0.5) == pytest.approx(2 * alpha[0])
    assert m(0.5) == pytest.approx(2 / 2.2)


def test_rkhs_zero_and_shrinkage():
    s = RegressionSample(np.linspace(-0.9, 0.9, 7), np.zeros(7))
    assert np.all(fit_rkhs(s, 0.01, HALF).alpha == 0)
    s = RegressionSample(np.linspace(-0.9, 0.9, 7), np.linspace(-1, 1, 7))
    norms = [np.linalg.norm(fit_rkhs(s, lam, HALF).alpha) for lam in (1e-2, 1e0, 1e2, 1e4)]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert abs(fit_rkhs(s, 1e8, HALF)(0.3)) < 1e-6


def test_rkhs_duplicate_points_singular():
    s = RegressionSample([-0.5, -0.5, 0.5], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        fit_rkhs(s, 0.0, HALF)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000), lam=st.floats(1e-8, 10.0), eps=st.sampled_from([0.01, 0.1]))
def test_rkhs_residual(seed, lam, eps):
    inst = make_cluster_instance(eps)
    s = make_regression_sample(inst, 60, 0.05, seed)
    m = fit_rkhs(s, lam, inst.density)
    G = kernel_gram(inst.density, s.xs)
    r = (G + s.n * lam * np.eye(s.n)) @ m.alpha - s.ys
    assert np.linalg.norm(r) <= 1e-8 * np.linalg.norm(s.ys)


def test_symmetrized_model_is_odd():
    inst = make_cluster_instance(0.1)
    m = SymmetrizedModel(fit_lipschitz(make_regression_sample(inst, 50, 0.1, 3), 5.0))
    xs = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(m(xs), -m(-xs), atol=1e-15)


# -- sampling --------------------------------------------------------------------------------------

def test_regression_sample_sorted_and_noise():
    inst = make_cluster_instance(0.1)
    s = make_regression_sample(inst, 2000, 0.05, 0)
    assert np.all(np.diff(s.xs) >= 0)
    resid = s.ys - inst.target(s.xs)
    assert resid.std() == pytest.approx(0.05, rel=0.1)
    with pytest.raises(ValueError):
        RegressionSample([0.0], [1.0])


# -- cross-validation --------------------------------------------------------------------------------

def _rkhs(density):
    return lambda tr, lam: fit_rkhs(tr, lam, density)


def test_cv_single_value():
    s = RegressionSample(np.linspace(-1, 1, 20), np.linspace(-1, 1, 20))
    assert cross_validate(_rkhs(HALF), s, [0.3]).best_param == 0.3


def test_cv_noiseless_linear_selects_small_lambda():
    xs = np.linspace(-0.95, 0.95, 40)
    s = RegressionSample(xs, 0.7 * xs)
    res = cross_validate(_rkhs(HALF), s, [1e-6, 1e3])
    assert res.best_param == 1e-6
    assert res.cv_curve[0][1] < res.cv_curve[1][1]


def test_cv_order_invariant():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 1, 30)
    ys = np.sin(3 * xs) + 0.1 * rng.standard_normal(30)
    perm = rng.permutation(30)
    grid = np.logspace(-6, 1, 8)
    a = cross_validate(_rkhs(HALF), RegressionSample(xs, ys), grid, seed=5)
    b = cross_validate(_rkhs(HALF), RegressionSample(xs[perm], ys[perm]), grid, seed=5)
    assert a == b


def test_cv_tie_rule():
    s = RegressionSample(np.linspace(-1, 1, 10), np.ones(10))
    # a constant response is fit exactly by every Lipschitz radius
    lip = cross_validate(lambda tr, L: fit_lipschitz(tr, L), s, [0.5, 1.0, 2.0], more_regularized="smaller")
    assert lip.best_param == 0.5
    const = cross_validate(lambda tr, L: fit_lipschitz(tr, L), s, [0.5, 1.0, 2.0])
    assert const.best_param == 2.0


def test_cv_errors():
    s = RegressionSample(np.linspace(-1, 1, 4), np.zeros(4))
    with pytest.raises(ValueError):
        cross_validate(_rkhs(HALF), s, [])
    with pytest.raises(ValueError):
        cross_validate(_rkhs(HALF), s, [1.0], folds=5)
    with pytest.raises(ValueError):
        cross_validate(_rkhs(HALF), s, [1.0], folds=1)


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_cv_rkhs_fast_path_matches_generic(eps):
    inst = make_cluster_instance(eps)
    s = make_regression_sample(inst, 80, 0.05, 11)
    grid = np.logspace(-9, 0, 10)
    fast = cross_validate_rkhs(s, grid, inst.density, seed=2)
    slow = cross_validate(_rkhs(inst.density), s, grid, seed=2)
    assert fast.best_param == slow.best_param
    np.testing.assert_allclose([e for _, e in fast.cv_curve], [e for _, e in slow.cv_curve], rtol=1e-8)


# -- error and export ---------------------------------------------------------------------------------

def test_empirical_error_examples():
    xs = np.linspace(-1, 1, 9)
    assert empirical_error(np.sin, np.sin, xs) == 0.0
    assert empirical_error(lambda x: 0 * x, lambda x: 0 * x + 1, xs) == 1.0
    assert empirical_error(lambda x: x + 0.3, lambda x: x, xs) == pytest.approx(0.09)


def test_exports(tmp_path):
    s = RegressionSample([0.0, 1.0], [0.0, 10.0])
    export_fit(fit_lipschitz(s, 1.0), [0.0, 1.0], tmp_path / "fit.csv")
    assert (tmp_path / "fit.csv").read_bytes() == b"x,value\r\n0.0,4.5\r\n1.0,5.5\r\n"
    res = cross_validate(lambda tr, L: fit_lipschitz(tr, L), RegressionSample(np.arange(6.0), np.arange(6.0)),
                         [1.0], folds=2)
    export_cv_curve(res, tmp_path / "cv.csv")
    assert (tmp_path / "cv.csv").read_bytes().startswith(b"param,cv_error\r\n1.0,")
