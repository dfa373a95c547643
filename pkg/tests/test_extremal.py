from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h4ham.core import Partition, SolverParams, build_graph, min_codegree, parse_comments, parse_graph, format_graph
from h4ham.extremal import (
    InstanceRecipe,
    build_benchmark,
    build_h0,
    build_h0_prime,
    complete_graph,
    compute_b,
    count_aabb,
    default_recipes,
    link_tables,
    planted_partition,
    swap_delta,
)
from h4ham.errors import TooFewVertices
from h4ham.typicality import Typicality

import brute


def test_h0_small_examples():
    assert build_h0(2, 2).edge_count == 0
    H = build_h0(4, 4)
    assert H.edge_count == 32
    assert min_codegree(H) == 2
    assert brute.edge_set(H) == set(map(frozenset, brute.h0_edges(range(4), range(4, 8))))


def test_h0_neutral_adds_pure_quadruples():
    H = build_h0(5, 5, include_neutral=True)
    assert H.edge_count == 2 * 5 * comb(5, 3) + 2 * comb(5, 4)


def test_h0_too_small():
    with pytest.raises(TooFewVertices):
        build_h0(1, 2)


def test_h0_prime():
    H = build_h0_prime(4, 4)
    assert H.vertex_count == 9
    v = 8
    for T in [(0, 1, v), (0, 5, v), (4, 5, v)]:
        assert H.codegree(*T) == 6
    # every H0 triple gains exactly the new vertex
    assert min_codegree(H) == 3


@pytest.mark.parametrize("m", range(2, 12))
def test_h0_edge_formula(m):
    assert build_h0(m, m).edge_count == 2 * m * comb(m, 3)


def test_count_aabb_examples():
    assert count_aabb(build_h0(4, 4), planted_partition(4, 4)) == 0
    assert count_aabb(complete_graph(8), Partition.from_side_a(8, range(4))) == 36
    b = build_benchmark(InstanceRecipe(10, medium_seeds=1))
    assert count_aabb(b.graph, b.partition) == brute.aabb_count(brute.edge_set(b.graph), b.partition.side_a)


def test_compute_b_examples():
    r = compute_b(build_h0(4, 4))
    assert r.value == 0 and r.exact
    assert r.partition.side_a in (frozenset(range(4)), frozenset(range(4, 8)))
    edges = brute.h0_edges(range(3), range(3, 6)) + [(0, 1, 3, 4)]
    H = build_graph(6, edges)
    assert compute_b(H).value == 1
    assert brute.exhaustive_b(set(map(frozenset, edges)), 6) == 1
    b = build_benchmark(InstanceRecipe(8, medium_seeds=1))
    exact = compute_b(b.graph)
    local = compute_b(b.graph, exact_threshold=0)
    assert exact.exact and not local.exact
    assert exact.value == local.value
    assert local.value == count_aabb(b.graph, local.partition)


def test_benchmark_examples():
    b = build_benchmark(InstanceRecipe(20, medium_seeds=1))
    n = 20
    assert b.min_codegree >= 19
    assert b.aabb <= 2 * 1 * n * comb(n, 2)
    b0 = build_benchmark(InstanceRecipe(20, medium_seeds=0))
    assert b0.min_codegree == 18
    bt = build_benchmark(InstanceRecipe(20, medium_seeds=1, anarchists=1))
    kinds = Typicality(bt.graph, bt.partition).vertex_kinds(SolverParams().eps5)
    planted = [v for v, c in bt.classes.items() if c == "anarchist"]
    assert [int(v) for v in np.flatnonzero(kinds == 2)] == planted


def test_benchmark_recipe_round_trip():
    r = InstanceRecipe(12, medium_seeds=2, anarchists=0, deletion_rate=0.01, rng_seed=5)
    b = build_benchmark(r)
    text = format_graph(b.graph, r.to_comments())
    again = InstanceRecipe.from_comments(parse_comments(text))
    assert again == r
    assert brute.edge_set(build_benchmark(again).graph) == brute.edge_set(parse_graph(text))


def test_recipe_validation():
    with pytest.raises(ValueError):
        InstanceRecipe(1).validate()
    with pytest.raises(ValueError):
        InstanceRecipe(20, anarchists=5).validate()


def test_default_recipes_shape():
    rs = default_recipes(60)
    assert len(rs) == 20
    assert {r.medium_seeds for r in rs} == {1, 2, 3}
    assert {r.anarchists for r in rs} == {0, 1, 2}
    assert all(r.deletion_rate == 0 for r in rs[0::2])
    assert all(r.deletion_rate == 0.01 for r in rs[1::2])
    assert {(r.medium_seeds, r.anarchists) for r in default_recipes(20)} == {(1, 0)}


def test_deletions_keep_codegree():
    for seed in range(3):
        b = build_benchmark(InstanceRecipe(12, medium_seeds=1, deletion_rate=0.01, rng_seed=seed))
        assert b.min_codegree >= (b.graph.vertex_count - 1) // 2
        assert b.min_codegree == brute.min_codegree(brute.edge_set(b.graph), b.graph.vertex_count)


@settings(max_examples=60, deadline=None)
@given(st.integers(6, 11), st.integers(0, 10_000))
def test_swap_gain_identity(N, seed):
    rng = np.random.default_rng(seed)
    edges = brute.random_edges(N, float(rng.uniform(0.2, 0.8)), seed)
    H = build_graph(N, edges)
    part = Partition.from_side_a(N, rng.permutation(N)[:(N + 1) // 2].tolist())
    a = int(rng.choice(sorted(part.side_a)))
    b = int(rng.choice(sorted(part.side_b)))
    after = count_aabb(H, part.moved([a, b]))
    assert after == count_aabb(H, part) + swap_delta(H, part, a, b, link_tables(H, part))


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 10), st.integers(0, 10_000))
def test_b_symmetric_and_consistent(N, seed):
    edges = brute.random_edges(N, 0.5, seed)
    H = build_graph(N, edges)
    exact = compute_b(H)
    assert exact.value == brute.exhaustive_b(set(map(frozenset, edges)), N)
    assert exact.value == count_aabb(H, exact.partition)
    local = compute_b(H, exact_threshold=0, rng=np.random.default_rng(seed))
    assert local.value >= exact.value
    assert local.value == count_aabb(H, local.partition)
    if N % 2 == 0:
        assert count_aabb(H, exact.partition.swapped()) == exact.value
