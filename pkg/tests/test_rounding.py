import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrclust.core import INF, Clustering, SignedGraph, disagreement_vector
from corrclust.errors import ContractError, UnsupportedError
from corrclust.instances import gen_bipartite, gen_planted, gen_random
from corrclust.relaxation import FractionalSolution, embed_integral, solve, y_from_x
from corrclust.rounding import (R, Step, audit_profit, per_vertex_ratio, round_bipartite,
                                round_complete, round_general)

from conftest import random_metric, two_cliques


def point(g, x, q=1.0):
    """A feasible solution at metric ``x`` (no optimality implied)."""
    return FractionalSolution(x=x, y=y_from_x(g, x), z=None, value=0.0, lower_bound=0.0, q=q)


def random_feasible(g, rng):
    x = np.minimum(random_metric(g.n, rng, scale=float(rng.uniform(0.05, 1.5))), 1.0)
    return point(g, x)


# -- general -------------------------------------------------------------------

def test_general_recovers_perfect_clustering():
    g = two_cliques(3)
    truth = Clustering((0, 0, 0, 1, 1, 1))
    rep = round_general(g, embed_integral(truth, g, 2), 2, 0)
    assert rep.clustering == truth and rep.objective == 0


def test_general_triangle_zero_metric(g3):
    rep = round_general(g3, point(g3, np.zeros((3, 3))), 1, 0)
    assert rep.clustering.num_clusters == 1
    assert list(rep.per_vertex_alg) == [1, 0, 1]
    assert rep.per_vertex_y[0] == 1 and rep.checks["negative_edges"]


def test_general_empty_graph():
    g = SignedGraph(4, [], [])
    assert round_general(g, solve(g, q=2), 2, 1).objective == 0


def test_general_rejects_infeasible(g3):
    x = np.zeros((3, 3))
    x[0, 2] = x[2, 0] = 1.0
    with pytest.raises(ContractError):
        round_general(g3, point(g3, x), 1, 0)


@pytest.mark.parametrize("seed", range(15))
def test_general_deterministic_checks(seed):
    rng = np.random.default_rng(seed)
    g = gen_random(int(rng.integers(5, 25)), 0.5, 0.6, seed=seed, weight_range=(0.2, 3.0))
    sol = solve(g, q=float(rng.choice([1, 2, 3])))
    for s in range(3):
        rep = round_general(g, sol, rng=s)
        assert rep.ok and rep.checks["diameter"] and rep.checks["negative_edges"]
        assert np.array_equal(rep.per_vertex_alg, disagreement_vector(g, rep.clustering).as_array())
    assert round_general(g, sol, rng=7).clustering == round_general(g, sol, rng=7).clustering
    forced = round_general(g, sol, rng=0, max_retries=0)
    assert forced.trace.fallback and forced.checks["fallback_bound"]


# -- complete graphs -------------------------------------------------------------

def test_complete_integral_consistent():
    g = two_cliques(3)
    sol = embed_integral(Clustering((0, 0, 0, 1, 1, 1)), g, 1)
    rep, audit = round_complete(g, sol)
    assert not rep.per_vertex_alg.any()
    assert np.allclose(audit.per_vertex_profit, 0)


def test_complete_triangle(g3):
    sol = solve(g3, q=1)
    rep, audit = round_complete(g3, sol)
    assert rep.objective <= 10 and rep.ratio_per_vertex <= 5
    assert audit.min_profit >= -1e-9
    assert np.all(rep.per_vertex_alg <= 5 * rep.per_vertex_y + 1e-9)


def test_complete_k5_zero_metric():
    g = SignedGraph(5, [(u, v, 1.0) for u in range(5) for v in range(u + 1, 5)], [])
    rep, audit = round_complete(g, point(g, np.zeros((5, 5))))
    assert rep.clustering.num_clusters == 1 and not rep.per_vertex_alg.any()
    assert rep.trace[0].center == 0


def test_complete_preconditions():
    sparse = gen_random(5, 0.5, 0.5, seed=1)
    assert not sparse.is_complete()
    with pytest.raises(UnsupportedError):
        round_complete(sparse, solve(sparse, q=1))
    weighted = gen_random(5, 0.5, 1.0, seed=1, weight_range=(1.0, 2.0))
    with pytest.raises(UnsupportedError):
        round_complete(weighted, solve(weighted, q=1))


def test_argmax_ties_go_to_smallest_id():
    g = SignedGraph(4, [], [(u, v, 1.0) for u in range(4) for v in range(u + 1, 4)])
    x = np.ones((4, 4)) - np.eye(4)
    rep, _ = round_complete(g, point(g, x))
    assert [s.center for s in rep.trace] == [0, 1, 2, 3]


def test_ball_is_closed():
    g = SignedGraph(2, [(0, 1, 1.0)], [])
    x = np.array([[0, 2 * R], [2 * R, 0]])
    rep, _ = round_complete(g, point(g, x))
    assert rep.clustering.num_clusters == 1


# -- bipartite ------------------------------------------------------------------

def test_bipartite_consistent():
    # L = {0,1}, R = {2,3}; 0~2 and 1~3 positive, cross pairs negative
    g = SignedGraph(4, [(0, 2, 1.0), (1, 3, 1.0)], [(0, 3, 1.0), (1, 2, 1.0)], bipartition=({0, 1}, {2, 3}))
    truth = Clustering((0, 1, 0, 1))
    rep, audit = round_bipartite(g, embed_integral(truth, g, 1))
    assert rep.clustering == truth and not rep.per_vertex_alg[[0, 1]].any()


def test_bipartite_k11():
    g = SignedGraph(2, [(0, 1, 1.0)], [], bipartition=({0}, {1}))
    rep, _ = round_bipartite(g, point(g, np.zeros((2, 2))))
    assert rep.clustering.clusters() == [[0, 1]] and rep.per_vertex_alg[0] == 0


def test_bipartite_k22_matching():
    g = SignedGraph(4, [(0, 2, 1.0), (1, 3, 1.0)], [(0, 3, 1.0), (1, 2, 1.0)], bipartition=({0, 1}, {2, 3}))
    for q in (1, 2, INF):
        rep, audit = round_bipartite(g, solve(g, q=q))
        assert np.all(rep.per_vertex_alg[[0, 1]] <= 5 * rep.per_vertex_y[[0, 1]] + 1e-9)
        assert audit.ok


def test_bipartite_leftover_right_vertices_form_one_cluster():
    g = SignedGraph(3, [], [(0, 1, 1.0), (0, 2, 1.0)], bipartition=({0}, {1, 2}))
    x = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0.0]])
    rep, _ = round_bipartite(g, point(g, x))
    assert rep.clustering.clusters() == [[0], [1, 2]]


def test_bipartite_needs_bipartition(g3):
    with pytest.raises(ContractError):
        round_bipartite(g3, solve(g3, q=1))


# -- audit -------------------------------------------------------------------------

def test_audit_zero_lp_instance():
    g = two_cliques(2)
    sol = embed_integral(Clustering((0, 0, 1, 1)), g, 1)
    _, audit = round_complete(g, sol)
    assert np.allclose(audit.per_vertex_profit, 0)


def test_audit_alg_zero_means_profit_is_lp():
    g = SignedGraph(3, [(u, v, 1.0) for u in range(3) for v in range(u + 1, 3)], [])
    x = np.full((3, 3), 0.1) - 0.1 * np.eye(3)
    sol = point(g, x)
    rep, audit = round_complete(g, sol)
    assert not rep.per_vertex_alg.any()
    assert np.allclose(audit.per_vertex_profit, sol.y)


def test_audit_steps_sum_to_profit(g3):
    sol = solve(g3, q=2)
    rep, audit = round_complete(g3, sol)
    assert np.allclose(np.sum(audit.per_step, axis=0), audit.per_vertex_profit, atol=1e-9)
    assert audit.per_vertex_profit.sum() >= -1e-9


def test_audit_rejects_foreign_trace(g3):
    sol = solve(g3, q=1)
    rep, _ = round_complete(g3, sol)
    steps = list(rep.trace)
    bad = [Step(steps[0].center, (0, 1, 2), steps[0].active)] + steps[1:]
    if bad[0].cluster != steps[0].cluster:
        with pytest.raises(ContractError):
            audit_profit(g3, sol, bad)
    with pytest.raises(ContractError):
        audit_profit(g3, sol, [Step(0, (0,), (0, 1))])
    with pytest.raises(ContractError):
        audit_profit(g3, point(SignedGraph(2, [], []), np.zeros((2, 2))), steps)


def test_per_vertex_ratio_conventions():
    assert per_vertex_ratio(np.array([0.0, 1.0]), np.array([0.0, 0.5])) == 2
    assert per_vertex_ratio(np.array([1.0]), np.array([0.0])) == math.inf
    assert per_vertex_ratio(np.zeros(3), np.zeros(3)) == 0


def test_report_json(g3):
    rep, _ = round_complete(g3, solve(g3, q=INF))
    doc = json.loads(rep.to_json())
    assert doc["schema"] == 1 and doc["clusters"] and "min_profit" in doc["audit"]
    gen = json.loads(round_general(g3, solve(g3, q=2), rng=0).to_json())
    assert set(gen["decomposition"]) == {"attempts", "fallback"}


# -- fuzz: the per-vertex bound holds at every feasible point, not just LP optima ----

@settings(max_examples=150, deadline=None)
@given(st.integers(2, 10), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_complete_bound_at_any_feasible_point(n, p_plus, seed):
    rng = np.random.default_rng(seed)
    g = gen_random(n, p_plus, 1.0, seed=seed)
    sol = random_feasible(g, rng)
    rep, audit = round_complete(g, sol)
    assert np.all(rep.per_vertex_alg <= 5 * rep.per_vertex_y + 1e-9)
    assert audit.min_profit >= -1e-9 and audit.min_negative_edge_profit >= -1e-9


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_bipartite_bound_at_any_feasible_point(nl, nr, p_plus, seed):
    rng = np.random.default_rng(seed)
    g = gen_bipartite(nl, nr, p_plus, seed=seed)
    sol = random_feasible(g, rng)
    rep, audit = round_bipartite(g, sol)
    left = sorted(g.bipartition[0])
    assert np.all(rep.per_vertex_alg[left] <= 5 * rep.per_vertex_y[left] + 1e-9)
    assert audit.min_profit >= -1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_general_checks_at_any_feasible_point(n, seed):
    rng = np.random.default_rng(seed)
    g = gen_random(n, 0.5, 0.7, seed=seed, weight_range=(0.1, 2.0))
    rep = round_general(g, random_feasible(g, rng), 2, seed)
    assert rep.checks["diameter"] and rep.checks["negative_edges"]


def test_planted_instances_round_exactly():
    g = gen_planted([3, 4, 2], 0.0, seed=1)
    sol = solve(g, q=2)
    rep, _ = round_complete(g, sol)
    assert rep.objective == pytest.approx(0, abs=1e-9)
