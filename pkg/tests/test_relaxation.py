import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrclust.core import INF, L_SIDE, Clustering, SignedGraph, disagreement_vector, lq_norm
from corrclust.errors import ContractError, UnsupportedError
from corrclust.instances import gen_bipartite, gen_random
from corrclust.oracle import opt_clustering, set_partitions
from corrclust.relaxation import (FractionalSolution, SolverConfig, build_program, check_feasible,
                                  embed_integral, linearized_power, solve, tangent_points,
                                  y_from_x)

from conftest import random_metric, triangle, two_cliques


def test_program_counts():
    h = build_program(triangle(), 1)
    assert (h.num_x_vars, h.num_y_vars, h.num_triangle_constraints) == (3, 3, 3)
    k4 = SignedGraph(4, [(u, v, 1.0) for u in range(4) for v in range(u + 1, 4)], [])
    h = build_program(k4, 2)
    assert (h.num_x_vars, h.num_y_vars, h.num_triangle_constraints) == (6, 4, 12)


def test_bad_configurations(g3):
    with pytest.raises(ContractError):
        build_program(g3, 0.5)
    with pytest.raises(UnsupportedError):
        build_program(g3, INF, SolverConfig(use_z=True))
    with pytest.raises(ContractError):
        SolverConfig(breakpoints=1)
    with pytest.raises(ContractError):
        SolverConfig(tol=0)


def test_triangle_value_q1(g3):
    sol = solve(g3, q=1)
    assert sol.value == pytest.approx(2, abs=1e-6)
    assert sol.lower_bound == pytest.approx(2, abs=1e-6)
    assert check_feasible(sol, g3) == []


@pytest.mark.parametrize("q", [1, 1.5, 2, 3, INF])
def test_consistent_instance_has_zero_value(q):
    g = two_cliques(3)
    sol = solve(g, q=q)
    assert sol.value == pytest.approx(0, abs=1e-9)
    assert set(np.unique(np.round(sol.x, 9))) <= {0.0, 1.0}
    assert check_feasible(sol, g) == []


def test_single_edge_inf():
    g = SignedGraph(2, [(0, 1, 1.0)], [])
    sol = solve(g, q=INF)
    assert sol.value == 0 and sol.x[0, 1] == 0


def test_check_feasible_reports(g3):
    x = np.zeros((3, 3))
    x[0, 1] = x[1, 0] = 1.0
    bad = FractionalSolution(x=x, y=y_from_x(g3, x), z=None, value=0, lower_bound=0)
    viol = check_feasible(bad, g3)
    tri = [v for v in viol if v.kind == "triangle"]
    assert len(tri) == 1 and tri[0].magnitude == pytest.approx(1.0)
    sol = solve(g3, q=1)
    nudged = FractionalSolution(x=sol.x, y=sol.y + np.array([0.1, 0, 0]), z=None, value=0, lower_bound=0)
    assert [v.kind for v in check_feasible(nudged, g3)] == ["P1"]


def test_embed_integral_examples(g3):
    assert embed_integral(Clustering.single(3), g3, 1).value == 2
    assert embed_integral(Clustering.singletons(4), SignedGraph(4, [], []), 2).value == 0
    e = embed_integral(Clustering((0, 0, 1)), g3, INF)
    assert e.value == 1 and check_feasible(e, g3) == []
    assert embed_integral(Clustering((0, 0, 1)), g3, 2).z is not None


@pytest.mark.parametrize("seed", range(12))
def test_relaxation_is_lower_bound_on_every_clustering(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    g = gen_random(n, 0.5, float(rng.choice([0.6, 1.0])), seed=seed)
    for q in (1, 2, INF):
        lb = solve(g, q=q).lower_bound
        for row in set_partitions(n):
            c = Clustering(tuple(int(v) for v in row))
            assert lb <= embed_integral(c, g, q).value + 1e-7


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("q", [1.5, 2, 3])
def test_tangent_cuts_underestimate(seed, q):
    rng = np.random.default_rng(seed)
    n = 7
    g = gen_random(n, 0.5, 0.8, seed=seed)
    for k in (2, 4, 16):
        h = build_program(g, q, SolverConfig(breakpoints=k))
        for _ in range(10):
            x = random_metric(n, rng, scale=float(rng.uniform(0.1, 1.0)))
            x = np.minimum(x, 1.0)
            assert h.linearized_objective(x) <= np.sum(y_from_x(g, x) ** q) * (1 + 1e-12) + 1e-12


def test_tangent_points_nested():
    for k in (2, 3, 5, 9):
        coarse = tangent_points(4.0, k)
        fine = tangent_points(4.0, 2 * k - 1)
        assert np.allclose(fine[::2], coarse)
    y = np.linspace(0, 3, 31)
    lin = linearized_power(y, [tangent_points(3.0, 5)] * y.size, 2.5)
    assert np.all(lin <= y ** 2.5 + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_doubling_breakpoints(seed):
    g = gen_random(4 + seed % 5, 0.5, 1.0 if seed % 2 else 0.7, seed=seed)
    for q in (1.5, 2, 3):
        raw, refined = [], []
        for k in (3, 5, 9, 17):
            raw.append(solve(g, SolverConfig(breakpoints=k, refine=False), q=q))
            refined.append(solve(g, SolverConfig(breakpoints=k), q=q))
        # nested cut sets: the certified bound can only rise
        for a, b in zip(raw, raw[1:]):
            assert b.lower_bound >= a.lower_bound - 1e-9
        tol = SolverConfig().tol
        for a, b in zip(refined, refined[1:]):
            assert b.value - b.lower_bound <= a.value - a.lower_bound + tol * max(a.value, 1e-9) + 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_gap_shrinks_with_breakpoints_without_refinement(seed):
    g = gen_random(7, 0.5, 1.0, seed=seed)
    coarse = solve(g, SolverConfig(breakpoints=2, refine=False), q=2)
    fine = solve(g, SolverConfig(breakpoints=33, refine=False), q=2)
    assert fine.value - fine.lower_bound <= 0.01 * fine.value + 1e-9
    assert fine.lower_bound >= coarse.lower_bound - 1e-9


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("q", [1, 2, INF])
def test_simplex_backend_matches_highs(seed, q):
    g = gen_random(6, 0.5, 0.8, seed=seed)
    a = solve(g, SolverConfig(backend="highs"), q=q)
    b = solve(g, SolverConfig(backend="simplex"), q=q)
    assert b.lower_bound == pytest.approx(a.lower_bound, rel=1e-6, abs=1e-7)
    assert check_feasible(b, g) == []


@pytest.mark.parametrize("q", [1, 2, INF])
def test_lazy_triangles_match_eager(q):
    g = gen_random(9, 0.5, 1.0, seed=11)
    eager = solve(g, SolverConfig(), q=q)
    lazy = solve(g, SolverConfig(lazy_triangles=True), q=q)
    assert lazy.lower_bound == pytest.approx(eager.lower_bound, rel=1e-6, abs=1e-7)
    assert check_feasible(lazy, g) == []


@pytest.mark.parametrize("q", [1.5, 2, 4])
def test_full_program(q):
    g = gen_random(7, 0.5, 1.0, seed=5, weight_range=(0.5, 2.0))
    sol = solve(g, SolverConfig(use_z=True), q=q)
    assert sol.z is not None and check_feasible(sol, g) == []
    assert set(sol.branches) == {"y", "z"}
    assert sol.value == pytest.approx(max(sol.branches.values()) ** (1 / q))
    assert sol.value >= sol.lower_bound - 1e-9
    simple = solve(g, SolverConfig(), q=q)
    # the full program adds a branch to the max, so its bound is at least as large
    assert sol.lower_bound >= simple.lower_bound - 1e-6


def test_weighted_and_fractional_q():
    g = gen_random(8, 0.4, 0.9, seed=2, weight_range=(0.1, 3.0))
    sol = solve(g, q=1.5)
    assert check_feasible(sol, g) == []
    assert sol.lower_bound <= sol.value <= sol.lower_bound * (1 + 1e-5) + 1e-9


def test_terminals_are_separated():
    g = SignedGraph(3, [(0, 1, 1.0), (1, 2, 1.0)], [], terminals=(0, 2))
    sol = solve(g, q=1)
    assert sol.x[0, 2] == pytest.approx(1.0)
    assert sol.value == pytest.approx(2.0)
    assert check_feasible(embed_integral(Clustering.single(3), g, 1), g)[0].kind == "terminals"


def test_uncuttable_edges_pinned():
    g = SignedGraph(3, [(0, 1, math.inf), (1, 2, 1.0)], [(0, 2, 1.0)])
    sol = solve(g, q=2)
    assert sol.x[0, 1] == 0
    assert check_feasible(sol, g) == []


def test_json_round_trip():
    g = gen_random(6, 0.5, 1.0, seed=3)
    sol = solve(g, SolverConfig(use_z=True), q=2)
    back = FractionalSolution.from_json(sol.to_json())
    assert np.array_equal(back.x, sol.x)
    assert np.array_equal(back.y, sol.y) and np.array_equal(back.z, sol.z)
    assert back.value == sol.value and back.lower_bound == sol.lower_bound
    doc = json.loads(solve(g, q=INF).to_json())
    assert doc["q"] == "inf" and doc["z"] is None and doc["schema"] == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 8), st.floats(0, 1), st.floats(0.3, 1), st.integers(0, 10**6),
       st.sampled_from([1, 2, 3, INF]))
def test_solve_output_always_feasible(n, p_plus, p_edge, seed, q):
    g = gen_random(n, p_plus, p_edge, seed=seed)
    sol = solve(g, q=q)
    assert check_feasible(sol, g) == []
    assert sol.lower_bound <= sol.value + 1e-9
    assert sol.value == pytest.approx(lq_norm(sol.y, q))


def test_bipartite_solution_feasible():
    g = gen_bipartite(3, 4, 0.5, seed=1)
    sol = solve(g, q=2)
    assert check_feasible(sol, g) == []


@pytest.mark.parametrize("q", [1, 2, INF])
def test_left_scope_bounds_one_sided_optimum(q):
    for seed in range(6):
        g = gen_bipartite(3, 4, 0.5, seed=seed)
        sol = solve(g, SolverConfig(scope=L_SIDE), q=q)
        assert sol.scope == L_SIDE
        assert sol.lower_bound <= opt_clustering(g, q, L_SIDE).value + 1e-7
        left = sorted(g.bipartition[0])
        assert sol.value == pytest.approx(lq_norm(sol.y[left], q), rel=1e-6, abs=1e-9)


def test_left_scope_needs_bipartition():
    with pytest.raises(ContractError):
        solve(triangle(), SolverConfig(scope=L_SIDE), q=1)
