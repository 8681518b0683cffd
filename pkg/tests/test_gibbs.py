import math

import numpy as np
import pytest

from hardcore.errors import ResourceError
from hardcore.gibbs import (DiscreteLaw, EmpiricalLaw, GlauberChain, SpinConfig,
                            _branch_component, _forest_component, brute_force_partition,
                            glauber_sample, heat_bath_kernel, independent_sets,
                            kappa_and_nu, point_to_set_estimate, regular_tree_ball,
                            tree_ball_graph, tree_ball_law, tv_distance)
from hardcore.graphs import Graph, load_corpus, puncture
from hardcore.params import convert_params


def _enumerated(g, lam):
    sets = np.array(independent_sets(g), dtype=float)
    w = lam ** sets.sum(axis=1)
    return w.sum(), (w[:, None] * sets).sum(axis=0) / w.sum()


def test_known_partition_functions():
    c = load_corpus()
    assert brute_force_partition(c["c4"], 1.0).Z == 7.0
    assert brute_force_partition(c["p3"], 1.0).Z == 5.0
    assert brute_force_partition(c["k4"], 2.0).Z == 9.0
    assert brute_force_partition(c["petersen"], 1.0).Z == 76.0


@pytest.mark.parametrize("name", sorted(load_corpus()))
@pytest.mark.parametrize("lam", [0.3, 1.0, 2.5])
def test_partition_matches_enumeration(name, lam):
    g = load_corpus()[name]
    z, m = _enumerated(g, lam)
    res = brute_force_partition(g, lam)
    assert res.Z == pytest.approx(z, rel=1e-13)
    assert np.allclose(res.marginals, m, atol=1e-13)


def test_forest_dp_equals_branching():
    g = load_corpus()["tree12"]
    fug = np.linspace(0.5, 2.0, g.n)
    comp = list(range(g.n))
    z1, _, m1 = _forest_component(g, comp, fug)
    z2, _, m2 = _branch_component(g, comp, fug)
    assert z1 == pytest.approx(z2, rel=1e-14)
    assert all(m1[v] == pytest.approx(m2[v], abs=1e-14) for v in comp)


def test_loop_forbids_vertex():
    g = load_corpus()["loopy4"]
    res = brute_force_partition(g, 1.0)
    assert res.marginals[0] == 0.0


def test_boundary_condition():
    g = load_corpus()["p3"]
    assert brute_force_partition(g, 1.0, {1: 1}).Z == 1.0
    assert brute_force_partition(g, 1.0, {0: 1, 1: 1}).Z == 0.0
    assert brute_force_partition(g, 2.0, {1: 0}).Z == 9.0


def test_too_large_component():
    rng = np.random.default_rng(0)
    from hardcore.graphs import sample_configuration_model
    g = sample_configuration_model(40, 3, rng)
    with pytest.raises(ResourceError):
        brute_force_partition(g, 1.0)


def test_detailed_balance_and_stationarity():
    for name in ("p3", "c4", "loopy4"):
        states, K, pi = heat_bath_kernel(load_corpus()[name], 1.5)
        flow = pi[:, None] * K
        assert np.allclose(flow, flow.T, atol=1e-15)
        assert np.allclose(pi @ K, pi, atol=1e-15)
        assert np.allclose(K.sum(axis=1), 1.0)


def test_glauber_stays_independent():
    g = load_corpus()["petersen"]
    gen = glauber_sample(g, 2.0, 50, 10, np.random.default_rng(1))
    cfgs = list(gen)
    assert len(cfgs) == 50
    assert all(isinstance(c, SpinConfig) and c.is_valid(g) for c in cfgs)


def test_glauber_marginals():
    g = load_corpus()["c4"]
    ch = GlauberChain(g, 1.0, np.random.default_rng(2))
    ch.run(100)
    est = ch.occupation_sums(200000) / 200000
    assert np.max(np.abs(est - brute_force_partition(g, 1.0).marginals)) < 0.01


def test_glauber_reproducible():
    g = load_corpus()["k4"]
    a = GlauberChain(g, 1.0, np.random.default_rng(3)).record([0, 1], 50)
    b = GlauberChain(g, 1.0, np.random.default_rng(3)).record([0, 1], 50)
    assert np.array_equal(a, b)


def test_tv_and_empirical():
    a = DiscreteLaw((0,), {(0,): 0.5, (1,): 0.5})
    b = DiscreteLaw((0,), {(0,): 1.0})
    assert tv_distance(a, b) == 0.5
    assert tv_distance(a, a) == 0.0
    emp = EmpiricalLaw.from_samples((0,), np.array([[0], [1], [1], [1]]))
    assert tv_distance(emp, a) == pytest.approx(0.25)
    assert emp.bias_bound(2) == pytest.approx(1 / 8)
    with pytest.raises(ValueError):
        tv_distance(a, DiscreteLaw((0, 1), {}))


def test_tree_ball_shape():
    tb = regular_tree_ball(3, 2)
    assert tb.size == 10
    assert tb.boundary.tolist() == list(range(4, 10))


@pytest.mark.parametrize("d,r", [(3, 1), (3, 2), (4, 2)])
def test_tree_ball_law(d, r):
    p = convert_params(d, lam=1.3)
    tb, law = tree_ball_law(p, r)
    assert math.fsum(law.probs.values()) == pytest.approx(1.0, abs=1e-14)
    for v in range(tb.size):
        assert law.marginal([v]).prob((1,)) == pytest.approx(p.alpha, abs=1e-13)
    # root occupied forces every neighbour empty
    assert law.marginal(range(d + 1)).prob((1,) + (0,) * d) == pytest.approx(p.alpha)


@pytest.mark.parametrize("d,r", [(3, 1), (3, 2), (4, 1)])
def test_tree_ball_graph_reproduces_law(d, r):
    p = convert_params(d, lam=0.8)
    _, law = tree_ball_law(p, r)
    tb, g, fug = tree_ball_graph(p, r)
    res = brute_force_partition(g, fug)
    for s in independent_sets(g):
        w = np.prod(np.where(np.array(s) == 1, fug, 1.0)) / res.Z
        assert w == pytest.approx(law.prob(s), abs=1e-14)


def _two_balls():
    tb = regular_tree_ball(3, 2)
    e = [(int(q), i) for i, q in enumerate(tb.parent) if q >= 0]
    return Graph(20, e + [(a + 10, b + 10) for a, b in e])


def test_kappa_nu_tree_instance():
    g = _two_balls()
    pg = puncture(g, [0, 10], 1, d=3)
    kn = kappa_and_nu(g, pg, 1.0, d=3)
    assert kn.fit_residual <= 1e-8
    assert kn.isomorphic_max_rel_diff <= 1e-10
    assert not kn.forbidden
    _, law = tree_ball_law(convert_params(3, lam=1.0), 1)
    bl = law.marginal([1, 2, 3])
    for c1, p1 in bl.probs.items():
        for c2, p2 in bl.probs.items():
            assert kn.nu.prob(c1 + c2) == pytest.approx(p1 * p2, abs=1e-12)


def test_kappa_nu_boundary_limit():
    g = _two_balls()
    pg = puncture(g, [0, 10], 2, d=3)
    with pytest.raises(ResourceError):
        kappa_and_nu(g, pg, 1.0, d=3, max_boundary=4)


def test_point_to_set_zero_radius():
    p = convert_params(3, lam=1.0)
    _, g, fug = tree_ball_graph(p, 3)
    v = point_to_set_estimate(g, 0, 0, fug, method="exact", alpha=p.alpha)
    assert v == pytest.approx(2 * p.alpha * (1 - p.alpha), abs=1e-12)


def test_point_to_set_decreasing():
    p = convert_params(3, lam=1.0)
    _, g, fug = tree_ball_graph(p, 3)
    vals = [point_to_set_estimate(g, 0, L, fug, method="exact", alpha=p.alpha)
            for L in (0, 1, 2)]
    assert vals[0] > vals[1] > vals[2]


def test_point_to_set_mc_close_to_exact():
    p = convert_params(3, lam=1.0)
    _, g, fug = tree_ball_graph(p, 2)
    ex = point_to_set_estimate(g, 0, 1, fug, method="exact", alpha=p.alpha)
    mc = point_to_set_estimate(g, 0, 1, fug, samples=40000, rng=np.random.default_rng(4),
                               alpha=p.alpha)
    assert abs(mc - ex) < 0.01
