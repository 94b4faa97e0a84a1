import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_argmin_1d, lex_leq, make_graph, sorted_gradients
from plap.graph import EdgeKernel, LabelSet, build_graph, j_p
from plap.solve import (
    SolveOptions, UnlabeledComponentError, export_solution, export_trace, pcg, solve_even_p, solve_lex,
    solve_p2, solve_penalized,
)

PATH_UNIT = make_graph(3, [(0, 1, 1), (1, 2, 1)])
PATH_12 = make_graph(3, [(0, 1, 1), (1, 2, 2)])
ENDS = LabelSet([0, 2], [0.0, 1.0])


def random_instance(seed, n=60, n_labels=4, d=2, h=0.35):
    rng = np.random.default_rng(seed)
    g = build_graph(rng.random((n, d)), EdgeKernel("gaussian"), h)
    idx = rng.choice(n, n_labels, replace=False)
    return g, LabelSet(idx, rng.uniform(-1, 2, n_labels))


# -- p = 2 ---------------------------------------------------------------------------

def test_p2_path_examples():
    assert solve_p2(PATH_UNIT, ENDS).f[1] == pytest.approx(0.5, abs=1e-12)
    # minimize f^2 + 4 (1 - f)^2
    assert solve_p2(PATH_12, ENDS).f[1] == pytest.approx(0.8, abs=1e-12)


def test_p2_all_labeled():
    lab = LabelSet([0, 1, 2], [0.3, -1.0, 2.0])
    res = solve_p2(PATH_12, lab)
    np.testing.assert_array_equal(res.f, [0.3, -1.0, 2.0])
    assert res.objective == pytest.approx(j_p(PATH_12, res.f, 2))


def test_unlabeled_component_error():
    g = make_graph(5, [(0, 1, 1), (1, 2, 1), (3, 4, 1)])
    for solver in (solve_p2, solve_lex, lambda g_, l_: solve_even_p(g_, l_, 4)):
        with pytest.raises(UnlabeledComponentError) as err:
            solver(g, LabelSet([0], [1.0]))
        assert sorted(err.value.component.tolist()) == [3, 4]


def test_p2_weighted_mean_stationarity():
    g, lab = random_instance(0)
    f = solve_p2(g, lab).f
    A = g.adjacency(g.weights**2)
    mean = (A @ f) / np.asarray(A.sum(axis=1)).ravel()
    free = np.setdiff1d(np.arange(g.n_vertices), lab.indices)
    np.testing.assert_allclose(f[free], mean[free], atol=1e-9)


def test_pcg_matches_dense():
    g, _ = random_instance(1, n=80)
    L = g.laplacian(g.weights**2) + 0.1 * np.eye(80)
    b = np.random.default_rng(0).standard_normal(80)
    x, _, ok = pcg(np.asarray(L), b, tol=1e-12)
    assert ok
    np.testing.assert_allclose(x, np.linalg.solve(np.asarray(L), b), atol=1e-9)


# -- even p ---------------------------------------------------------------------------

def test_even_p_symmetric_path():
    assert solve_even_p(PATH_UNIT, ENDS, 4).f[1] == pytest.approx(0.5, abs=1e-6)


def test_even_p_weighted_path():
    f = solve_even_p(PATH_12, ENDS, 4).f[1]
    oracle = grid_argmin_1d(lambda x: x**4 + 16 * (1 - x) ** 4, 0.0, 1.0)
    assert f == pytest.approx(oracle, abs=1e-5)
    assert f == pytest.approx(1 / (1 + 16 ** (-1 / 3)), abs=1e-6)
    assert f == pytest.approx(0.7159, abs=1e-4)


def test_even_p_star():
    star = make_graph(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
    f = solve_even_p(star, LabelSet([1, 2, 3], [0.0, 0.0, 3.0]), 4).f[0]
    oracle = grid_argmin_1d(lambda x: 2 * x**4 + (3 - x) ** 4, -1.0, 4.0)
    assert f == pytest.approx(oracle, abs=1e-4)


def test_even_p_rejects_odd():
    with pytest.raises(ValueError):
        solve_even_p(PATH_UNIT, ENDS, 3)


@pytest.mark.parametrize("seed", range(3))
def test_even_p2_agrees_with_p2(seed):
    g, lab = random_instance(seed, n=150)
    np.testing.assert_allclose(solve_even_p(g, lab, 2).f, solve_p2(g, lab).f, atol=1e-6)


def test_even_p_objective_nonincreasing():
    g, lab = random_instance(4)
    res = solve_even_p(g, lab, 6)
    assert res.converged
    tr = np.asarray(res.trace)
    assert np.all(np.diff(tr) <= 1e-12 * tr[0])


def test_even_p_first_order_optimality():
    g, lab = random_instance(5)
    res = solve_even_p(g, lab, 4)
    delta = g.differences(res.f)
    grad = g.laplacian(g.weights**4 * np.abs(delta) ** 2) @ res.f
    free = np.setdiff1d(np.arange(g.n_vertices), lab.indices)
    scale = np.max(np.abs(g.laplacian(g.weights**4 * np.abs(delta) ** 2).diagonal()))
    assert np.max(np.abs(grad[free])) <= 1e-4 * scale


@pytest.mark.parametrize("seed", [6, 8, 11])
def test_max_gradient_approaches_lex(seed):
    g, lab = random_instance(seed, n=80)
    lex = solve_lex(g, lab).objective
    tops = [solve_even_p(g, lab, p).gradients.max() for p in (2, 4, 8, 16, 32)]
    assert all(t >= lex * (1 - 1e-9) for t in tops)
    assert tops[-1] - lex <= 0.05 * lex
    assert tops[-1] - lex <= tops[0] - lex


def test_max_gradient_not_monotone_in_p():
    # certified counterexample: the p = 16 minimizer has a larger max gradient than the p = 8 one
    g, lab = random_instance(6, n=80)
    f8, f16 = solve_even_p(g, lab, 8).f, solve_even_p(g, lab, 16).f
    assert j_p(g, f16, 16) < j_p(g, f8, 16)
    assert g.gradients(f16).max() > g.gradients(f8).max() * 1.002


# -- lex --------------------------------------------------------------------------------

def test_lex_path_examples():
    assert solve_lex(PATH_UNIT, ENDS).f[1] == pytest.approx(0.5)
    res = solve_lex(PATH_12, ENDS)
    assert res.f[1] == pytest.approx(2 / 3)
    assert res.objective == pytest.approx(2 / 3)
    p5 = make_graph(5, [(i, i + 1, 1) for i in range(4)])
    np.testing.assert_allclose(solve_lex(p5, LabelSet([0, 4], [0.0, 1.0])).f, [0, 0.25, 0.5, 0.75, 1])


def test_lex_dangling_vertices_take_terminal_value():
    # vertex 3 hangs off vertex 1 and lies on no path between labels
    g = make_graph(4, [(0, 1, 1), (1, 2, 1), (1, 3, 1)])
    f = solve_lex(g, LabelSet([0, 2], [0.0, 1.0])).f
    assert f[3] == pytest.approx(f[1])


@pytest.mark.parametrize("seed", range(3))
def test_lex_beats_perturbations_and_even_p(seed):
    g, lab = random_instance(seed, n=40, h=0.3)
    lex = solve_lex(g, lab).f
    top = sorted_gradients(g, lex)
    rng = np.random.default_rng(seed)
    free = np.setdiff1d(np.arange(g.n_vertices), lab.indices)
    for _ in range(200):
        f = lex.copy()
        f[free] += rng.normal(0, 10 ** rng.uniform(-6, -1), len(free))
        assert lex_leq(top, sorted_gradients(g, f))
    for p in (2, 4, 8):
        assert lex_leq(top, sorted_gradients(g, solve_even_p(g, lab, p).f))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([2, 4, "inf"]))
def test_maximum_principle(seed, p):
    g, lab = random_instance(seed, n=30, n_labels=3, h=0.4)
    if p == "inf":
        f = solve_lex(g, lab).f
    elif p == 2:
        f = solve_p2(g, lab).f
    else:
        f = solve_even_p(g, lab, p).f
    assert f.min() >= lab.values.min() - 1e-9
    assert f.max() <= lab.values.max() + 1e-9
    np.testing.assert_array_equal(f[lab.indices], lab.values)


# -- penalized ----------------------------------------------------------------------------

def test_penalized_small_lambda_recovers_labels():
    for p in (2, 4):
        f = solve_penalized(PATH_12, ENDS, p, 1e-10).f
        np.testing.assert_allclose(f[[0, 2]], [0.0, 1.0], atol=1e-4)


def test_penalized_single_label_is_constant():
    for lam in (0.1, 10.0):
        f = solve_penalized(PATH_12, LabelSet([1], [3.0]), 4, lam).f
        np.testing.assert_allclose(f, 3.0)


def test_penalized_two_by_two():
    e = make_graph(2, [(0, 1, 1)])
    np.testing.assert_allclose(solve_penalized(e, LabelSet([0, 1], [0.0, 1.0]), 2, 1.0).f, [1 / 3, 2 / 3],
                               atol=1e-10)


def test_penalized_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        solve_penalized(PATH_12, ENDS, 2, 0.0)


@pytest.mark.parametrize("p", [2, 4])
def test_penalized_constrained_equivalence(p):
    g, lab = random_instance(7, n=50)
    pen = solve_penalized(g, lab, p, 0.5)
    refit = LabelSet(lab.indices, pen.f[lab.indices])
    con = solve_p2(g, refit) if p == 2 else solve_even_p(g, refit, p)
    assert con.objective == pytest.approx(j_p(g, pen.f, p), abs=1e-6)


# -- options and export ---------------------------------------------------------------------

def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(rel_tol=0)


def test_exports(tmp_path):
    res = solve_even_p(PATH_12, ENDS, 4)
    export_solution(res, tmp_path / "f.csv")
    export_trace(res, tmp_path / "t.csv")
    lines = (tmp_path / "f.csv").read_bytes().split(b"\r\n")
    assert lines[0] == b"vertex,value" and lines[1].startswith(b"0,")
    assert (tmp_path / "t.csv").read_bytes().startswith(b"iteration,objective\r\n")
