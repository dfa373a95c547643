import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h4ham.core import (
    Partition,
    SolverParams,
    TightCycle,
    TightPath,
    build_graph,
    format_certificate,
    format_graph,
    format_partition,
    is_hamiltonian_certificate,
    min_codegree,
    parse_certificate,
    parse_graph,
    parse_partition,
    verify_tight_cycle,
    verify_tight_path,
)
from h4ham.errors import DegenerateEdge, OutOfRange, ParseError, TooFewVertices, TooShort
from h4ham.extremal import build_h0, complete_graph, planted_partition

import brute


def test_single_edge():
    H = build_graph(4, [[0, 1, 2, 3]])
    assert H.edge_count == 1
    assert H.codegree(0, 1, 2) == 1


def test_dedup():
    H = build_graph(4, [[0, 1, 2, 3], [3, 2, 1, 0]])
    assert H.edge_count == 1


def test_neighbourhood_query():
    H = build_graph(6, [[0, 1, 2, 5]])
    assert H.codegree(0, 1, 5) == 1
    assert H.nb(0, 1, 5) == 1 << 2
    assert H.triple_index[(0, 1, 5)] == 1 << 2


def test_build_errors():
    with pytest.raises(OutOfRange):
        build_graph(4, [[0, 1, 2, 4]])
    with pytest.raises(DegenerateEdge):
        build_graph(5, [[0, 1, 1, 3]])


def test_min_codegree_values():
    assert min_codegree(build_h0(4, 4)) == 2
    assert min_codegree(complete_graph(8)) == 5
    # frozen from enumeration of H0(3,3) over its 20 triples
    assert min_codegree(build_h0(3, 3)) == 1
    assert brute.min_codegree(brute.edge_set(build_h0(3, 3)), 6) == 1
    with pytest.raises(TooFewVertices):
        min_codegree(build_graph(3, []))


def test_verify_path_examples():
    K8 = complete_graph(8)
    assert verify_tight_path(K8, list(range(8)))
    H = build_h0(4, 4)
    part = planted_partition(4, 4)
    a = sorted(part.side_a)
    b = sorted(part.side_b)
    assert not verify_tight_path(H, a)
    assert verify_tight_path(H, [a[0], a[1], a[2], b[0], a[3]])
    assert verify_tight_path(H, [])
    assert verify_tight_path(H, [0, 1, 2])
    assert not verify_tight_path(H, [0, 0, 1])


def test_verify_cycle_examples():
    K9 = complete_graph(9)
    rng = np.random.default_rng(3)
    assert verify_tight_cycle(K9, rng.permutation(9).tolist())
    assert not verify_tight_cycle(K9, [0, 1, 2, 3, 4, 0])
    with pytest.raises(TooShort):
        verify_tight_cycle(K9, [0, 1, 2, 3])
    H = build_h0(4, 4)
    part = planted_partition(4, 4)
    a = sorted(part.side_a)
    b = sorted(part.side_b)
    seq = [a[0], a[1], a[2], b[0], a[3], b[1], b[2], b[3]]
    # "aaab aaab" style: decided by the window scan
    expected = brute.windows_ok(brute.edge_set(H), seq, cyclic=True)
    assert bool(verify_tight_cycle(H, seq)) == expected


def test_hamiltonian_certificate():
    K9 = complete_graph(9)
    assert is_hamiltonian_certificate(K9, TightCycle(range(9)))
    assert not is_hamiltonian_certificate(K9, TightCycle(range(8)))
    H = build_h0(4, 4)
    for perm in itertools.islice(itertools.permutations(range(8)), 0, 40320, 97):
        assert not is_hamiltonian_certificate(H, TightPath(perm))


def test_cycle_equality_under_symmetry():
    C = TightCycle([0, 1, 2, 3, 4, 5])
    assert C == TightCycle([3, 4, 5, 0, 1, 2])
    assert C == TightCycle([5, 4, 3, 2, 1, 0])
    assert C != TightCycle([0, 2, 1, 3, 4, 5])


def test_graph_round_trip():
    H = build_h0(3, 4)
    text = format_graph(H, {"recipe": "h0"})
    assert brute.edge_set(parse_graph(text)) == brute.edge_set(H)


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_graph("h4 4 2\ne 0 1 2 3\n")
    with pytest.raises(ParseError):
        parse_graph("h4 4 1\ne 0 1 2 9\n")
    with pytest.raises(ParseError):
        parse_graph("")
    with pytest.raises(ParseError):
        parse_certificate("walk 0 1 2\n")
    with pytest.raises(ParseError):
        parse_partition("part 4\nA 0 7\n")


def test_partition_and_certificate_round_trip():
    part = Partition.from_side_a(6, [0, 2, 4])
    assert parse_partition(format_partition(part)) == part
    assert part.swapped().side_a == part.side_b
    C = TightCycle([4, 1, 2, 0, 3])
    assert parse_certificate(format_certificate(C)) == C
    P = TightPath([2, 0, 1])
    assert parse_certificate(format_certificate(P)) == P


def test_params_profiles():
    p = SolverParams.paper(1e-3)
    assert p.eps0 == pytest.approx(1e-12)
    assert p.eps3 == pytest.approx(1e-3)
    assert p.eps5 == pytest.approx(0.12)
    assert p.profile == "paper"
    # eps5 = 120 eps leaves (0, 1) once eps > 1/120
    with pytest.raises(ValueError):
        SolverParams.paper(0.01)
    with pytest.raises(ValueError):
        SolverParams(eps1=0)
    d = SolverParams.desk()
    assert d.working == (d.eps5, d.eps5 ** 0.75, d.eps5 ** 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 9), st.floats(0.2, 0.9), st.integers(0, 10_000))
def test_codegree_matches_scan(N, p, seed):
    edges = brute.random_edges(N, p, seed)
    H = build_graph(N, edges)
    E = set(map(frozenset, edges))
    for T in itertools.combinations(range(N), 3):
        assert H.codegree(*T) == brute.codegree(E, N, T)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 10), st.integers(0, 10_000), st.data())
def test_cycle_verdict_symmetric(N, seed, data):
    edges = brute.random_edges(N, 0.8, seed)
    H = build_graph(N, edges)
    seq = data.draw(st.permutations(list(range(N))))
    r = data.draw(st.integers(0, N - 1))
    base = bool(verify_tight_cycle(H, seq))
    assert bool(verify_tight_cycle(H, seq[r:] + seq[:r])) == base
    assert bool(verify_tight_cycle(H, seq[::-1])) == base
    assert base == brute.windows_ok(set(map(frozenset, edges)), seq, cyclic=True)


@pytest.mark.parametrize("m", range(2, 12))
def test_h0_min_codegree_formula(m):
    assert min_codegree(build_h0(m, m)) == m - 2
