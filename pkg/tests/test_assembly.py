from itertools import combinations

import numpy as np
import pytest

from h4ham.assembly import (
    MAX_BRIDGE,
    ABSORBER_SIZE,
    Graph3,
    Trace,
    Workspace,
    absorb_medium,
    build_bridge,
    build_disjoint_bridges,
    complete_path,
    dense3_hamiltonian_cycle,
    greedy_dense_path,
    residue_of,
    sequence_through,
    solve_ham_path,
    transfer_anarchists,
)
from h4ham.core import SolverParams, TightPath, build_graph, is_hamiltonian_certificate, verify_tight_path
from h4ham.errors import (
    BudgetExceeded,
    ConstructionFailed,
    DensityTooLow,
    EnvelopeViolated,
    HypothesisViolated,
    ThresholdNotMet,
)
from h4ham.extremal import InstanceRecipe, build_benchmark, build_h0, planted_partition
from h4ham.typicality import Typicality

DESK = SolverParams.desk()


def tight3(G3, seq, cyclic=False):
    s = list(seq) + (list(seq[:2]) if cyclic else [])
    return len(set(seq)) == len(seq) and all(G3.ok[s[i], s[i + 1], s[i + 2]] for i in range(len(s) - 2))


@pytest.fixture(scope="module")
def bench40():
    return build_benchmark(InstanceRecipe(40, medium_seeds=1))


@pytest.fixture(scope="module")
def h0_40():
    return build_h0(40, 40), planted_partition(40, 40)


def test_greedy_dense_path():
    K6 = Graph3.complete(6)
    P = greedy_dense_path(K6, 1.0)
    assert len(P) >= 2 and tight3(K6, P)
    assert len(greedy_dense_path(K6, 1.0, target=6)) == 6
    rng = np.random.default_rng(2)
    edges = [t for t in combinations(range(9), 3) if rng.random() < 0.8]
    G = Graph3.from_edges(9, edges)
    assert G.edge_count >= 2 / 3 * 84
    P = greedy_dense_path(G, 2 / 3, rng)
    assert len(P) >= 2 and tight3(G, P)
    with pytest.raises(DensityTooLow):
        greedy_dense_path(Graph3.from_edges(6, []), 0.5)


def test_dense3_cycle(h0_40):
    K7 = Graph3.complete(7)
    C = dense3_hamiltonian_cycle(K7)
    assert sorted(C) == list(range(7)) and tight3(K7, C, cyclic=True)
    # G_X on the B side of pure H0: triples whose neighbourhood covers A
    H, part = h0_40
    Bs = sorted(part.side_b)[:20]
    view = Typicality(H, part)
    edges = [(i, j, k) for i, j, k in combinations(range(20), 3)
             if view.triple(tuple(Bs[x] for x in (i, j, k))).d_a == 40]
    G = Graph3.from_edges(20, edges)
    C = dense3_hamiltonian_cycle(G)
    assert sorted(C) == list(range(20)) and tight3(G, C, cyclic=True)
    with pytest.raises(HypothesisViolated):
        dense3_hamiltonian_cycle(Graph3.from_edges(8, [(0, 1, 2), (1, 2, 3)]))


def test_sequence_through(h0_40):
    H, part = h0_40
    B = sorted(part.side_b)
    ws = Workspace(H, part, DESK, np.random.default_rng(0))
    X = B[6:36]
    S = sequence_through(H, part, DESK, tuple(B[:3]), tuple(B[3:6]), X, ws=ws)
    seq = S.vertices
    assert S.interior == frozenset(X)
    assert set(seq[3:-3]) == set(X) and len(seq) == len(X) + 6
    assert seq[:3] == tuple(B[:3]) and seq[-3:] == tuple(reversed(B[3:6]))
    assert all(ws.good[seq[i], seq[i + 1], seq[i + 2]] for i in range(1, len(seq) - 3))
    with pytest.raises(HypothesisViolated):
        sequence_through(H, part, DESK, tuple(B[:3]), tuple(B[3:6]), B[6:7], ws=ws)


def test_bridge_on_benchmark(bench40):
    H, part, _ = bench40
    ws = Workspace(H, part, DESK, np.random.default_rng(1))
    M = build_bridge(H, part, DESK, ws=ws)
    seq = M.path.sequence
    assert len(M) <= MAX_BRIDGE
    assert verify_tight_path(H, seq)
    assert part.count_a(seq[:3]) == 3 and part.count_a(seq[-3:]) == 0
    assert ws.good[seq[:3]] and ws.good[seq[-3:]]
    assert M.difference == residue_of(part, seq)


def test_bridge_with_one_aabb_edge():
    H = build_h0(30, 30)
    part = planted_partition(30, 30)
    H = H.modified(add=np.array([[0, 1, 30, 31]]))
    ws = Workspace(H, part, DESK, np.random.default_rng(2))
    M = build_bridge(H, part, DESK, ws=ws)
    assert len(M) <= 24 and verify_tight_path(H, M.path)
    assert {0, 1, 30, 31} <= M.vertices


def test_pure_h0_has_no_bridge():
    # every edge of a bridge crossing from AAA to BBB needs an AABB window
    H, part = build_h0(15, 15), planted_partition(15, 15)
    with pytest.raises(ConstructionFailed):
        build_bridge(H, part, DESK, rng=np.random.default_rng(0))


def test_disjoint_bridges(bench40):
    H, part, _ = bench40
    ws = Workspace(H, part, DESK, np.random.default_rng(3))
    M1, M2 = build_disjoint_bridges(H, part, DESK, ws=ws)
    assert not M1.vertices & M2.vertices
    ws2 = Workspace(H, part, DESK, np.random.default_rng(4))
    M3 = build_bridge(H, part, DESK, K=sorted(M1.vertices), ws=ws2)
    assert not M3.vertices & M1.vertices
    small = build_benchmark(InstanceRecipe(10, medium_seeds=1))
    with pytest.raises(ConstructionFailed):
        build_disjoint_bridges(small.graph, small.partition, DESK, rng=np.random.default_rng(0))


def test_absorb_medium(bench40):
    H, part, classes = bench40
    ws = Workspace(H, part, DESK, np.random.default_rng(5))
    M = build_bridge(H, part, DESK, ws=ws)
    Q = absorb_medium(H, part, DESK, M, ws=ws)
    mediums = [v for v, c in classes.items() if c == "medium"]
    assert set(mediums) <= Q.vertices
    assert verify_tight_path(H, Q.path)
    assert all(len(P) == ABSORBER_SIZE == 7 for P in Q.pieces)
    assert set(M.path.sequence) <= Q.vertices


def test_absorb_nothing(bench40):
    H, part, classes = bench40
    ws = Workspace(H, part, DESK, np.random.default_rng(6))
    M = build_bridge(H, part, DESK, ws=ws)
    Q = absorb_medium(H, part, DESK, M, ws=ws, mediums=[])
    assert Q.pieces == [] and Q.path.sequence == M.path.sequence


def test_transfer_anarchists():
    b = build_benchmark(InstanceRecipe(40, medium_seeds=2, anarchists=1))
    (v,) = [v for v, c in b.classes.items() if c == "anarchist"]
    new = transfer_anarchists(b.graph, b.partition, DESK, check=False)
    assert new.in_a(v) != b.partition.in_a(v)
    assert Typicality(b.graph, new).vertex_kinds(DESK.eps5)[v] == 0
    plain = build_benchmark(InstanceRecipe(40, medium_seeds=1))
    assert transfer_anarchists(plain.graph, plain.partition, DESK) == plain.partition
    # two vertices per side on the wrong side: four anarchists against a budget of one
    H = build_h0(20, 20)
    part = planted_partition(20, 20).moved([0, 1, 20, 21])
    assert (Typicality(H, part).vertex_kinds(DESK.eps5) == 2).sum() == 4
    with pytest.raises(BudgetExceeded):
        transfer_anarchists(H, part, DESK.with_(eps0=0.01))


def test_complete_path_envelope(bench40):
    H, part, _ = bench40
    A = sorted(part.side_a)
    B = sorted(part.side_b)
    # a "Q" that eats 30 B-vertices leaves m2 far below m1
    Q = tuple(A[:3] + B[:30] + B[30:33])
    with pytest.raises(EnvelopeViolated):
        complete_path(H, part, DESK, Q, np.random.default_rng(0))


@pytest.mark.parametrize("recipe", [InstanceRecipe(40, medium_seeds=1), InstanceRecipe(60, medium_seeds=2, anarchists=1)])
def test_solve_path_benchmarks(recipe):
    b = build_benchmark(recipe)
    trace = Trace()
    P = solve_ham_path(b.graph, DESK, trace)
    assert is_hamiltonian_certificate(b.graph, TightPath(P.sequence))
    assert sorted(P.sequence) == list(range(b.graph.vertex_count))
    assert trace.grep("done")


def test_solve_path_odd():
    b = build_benchmark(InstanceRecipe(20, medium_seeds=1, odd=True))
    assert b.graph.vertex_count == 41
    P = solve_ham_path(b.graph, DESK)
    assert is_hamiltonian_certificate(b.graph, P)


def test_h0_threshold_not_met():
    with pytest.raises(ThresholdNotMet) as info:
        solve_ham_path(build_h0(20, 20), DESK)
    assert info.value.stage == "threshold"


def test_trace_records():
    t = Trace()
    t.add("bridge", size=12, stage_name="x")
    t.raw("case 3")
    assert t.grep("bridge")[0].startswith("bridge size=12")
    assert t.text().endswith("case 3\n")


def test_residue_of():
    from h4ham.core import Partition
    part = Partition.from_side_a(8, range(4))
    assert residue_of(part, [0, 1, 2, 4]) == 0
    assert residue_of(part, [0, 4, 5, 6]) == 0
    assert residue_of(part, [0, 1, 4, 5]) == 4
    assert (residue_of(part, [0, 1]) + residue_of(part, [4, 5])) % 8 == residue_of(part, [0, 1, 4, 5])
