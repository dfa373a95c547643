"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import math
import re
import time
from itertools import combinations

import numpy as np
import pytest

from h4ham.assembly import Trace, solve_ham_path
from h4ham.connector import ConnectorRequest, connect_triples, sample_connector_set
from h4ham.core import Partition, SolverParams, build_graph, is_hamiltonian_certificate, min_codegree
from h4ham.errors import BudgetExhausted, H4Error
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
from h4ham.oracle import exact_ham_cycle, exact_ham_path, exhaustive_b
from h4ham.parity import RESIDUE_TABLE, solve_ham_cycle
from h4ham.typicality import Typicality, check_counting_claims, double_count

import brute

DESK = SolverParams.desk()
SIZES = (20, 40, 60)


# ---------------------------------------------------------------------
# shared solver runs for criteria 5, 6 and 8


def _run(H, mode, params=DESK):
    trace = Trace()
    t0 = time.perf_counter()
    solver = solve_ham_path if mode == "path" else solve_ham_cycle
    try:
        W = solver(H, params, trace)
        ok, error = bool(is_hamiltonian_certificate(H, W)), ""
    except H4Error as exc:
        ok, error = False, f"{type(exc).__name__}@{exc.stage}"
    return {"mode": mode, "ok": ok, "error": error, "seconds": time.perf_counter() - t0, "trace": list(trace.lines)}


@pytest.fixture(scope="module")
def family_runs():
    runs = []
    for n in SIZES:
        for recipe in default_recipes(n):
            H = build_benchmark(recipe).graph
            for mode in ("path", "cycle"):
                row = _run(H, mode)
                row.update(n=n, recipe=recipe)
                runs.append(row)
    return runs


@pytest.fixture(scope="module")
def switcher_run():
    # benchmarks carry no seeds, so switchers are exercised on the pair-cover instance
    H = build_benchmark(InstanceRecipe(60, medium_seeds=0, pair_cover=True, rng_seed=2)).graph
    return _run(H, "cycle")


def _success_bar(runs):
    rate = sum(r["ok"] for r in runs) / len(runs)
    clean = [r for r in runs if r["recipe"].deletion_rate == 0]
    return rate, all(r["ok"] for r in clean), len(clean)


# ---------------------------------------------------------------------


def test_criterion_1_extremal_values(record):
    t0 = time.perf_counter()
    bad = []
    for m in range(2, 31):
        H = build_h0(m, m)
        if min_codegree(H) != m - 2 or H.edge_count != 2 * m * math.comb(m, 3):
            bad.append(m)
    # independent enumeration on the small cases
    for m in range(2, 7):
        E = brute.edge_set(build_h0(m, m))
        if brute.min_codegree(E, 2 * m) != m - 2:
            bad.append(m)
    seconds = time.perf_counter() - t0
    ok = not bad and seconds < 10
    record(1, ok, f"H0(m,m) m=2..30: codegree m-2 and 2m*C(m,3) edges, mismatches={bad}, {seconds:.1f}s")
    assert ok


def test_criterion_2_tightness(record):
    t0 = time.perf_counter()
    found = []
    for N in (8, 10, 12, 13, 14):
        H = build_h0(N // 2, N - N // 2)
        if exact_ham_path(H) is not None:
            found.append(("H0 path", N))
        if N <= 10 and brute.hamiltonian(brute.edge_set(H), N) is not None:
            found.append(("H0 path, reference search", N))
    for N in (7, 9, 11, 13):
        H = build_h0_prime(N // 2, N // 2)
        if exact_ham_cycle(H) is not None:
            found.append(("H0' cycle", N))
        if N <= 9 and brute.hamiltonian(brute.edge_set(H), N, cycle=True) is not None:
            found.append(("H0' cycle, reference search", N))
    seconds = time.perf_counter() - t0
    ok = not found and seconds < 300
    record(2, ok, f"no H0 path at N=8,10,12,13,14 and no H0' cycle at N=7,9,11,13; found={found}, {seconds:.1f}s")
    assert ok


def test_criterion_3_counting_claims(record):
    t0 = time.perf_counter()
    failed = []
    checked = 0
    for n in SIZES:
        claims = check_counting_claims(build_h0(n, n), planted_partition(n, n), DESK, codegree_floor=n - 2)
        failed += [("h0", n, c.name) for c in claims if not c.passed]
        checked += 1
        for recipe in default_recipes(n):
            b = build_benchmark(recipe)
            claims = check_counting_claims(b.graph, b.partition, DESK)
            failed += [(n, recipe.rng_seed, c.name) for c in claims if not c.passed]
            checked += 1
    identity_bad = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(6, 13))
        edges = brute.random_edges(N, float(rng.uniform(0.1, 0.9)), seed)
        H = build_graph(N, edges)
        part = Partition.from_side_a(N, rng.permutation(N)[: (N + 1) // 2].tolist())
        lhs, rhs = double_count(H, part)
        E = set(map(frozenset, edges))
        A = part.side_a
        direct = 2 * brute.aabb_count(E, A) + 3 * sum(1 for e in E if len(e & A) == 1)
        identity_bad += not (lhs == rhs == direct)
    seconds = time.perf_counter() - t0
    ok = not failed and identity_bad == 0 and seconds < 120
    record(3, ok, f"{checked} graphs, failed claims={failed[:5]}, identity mismatches={identity_bad}/200, "
                  f"{seconds:.1f}s")
    assert ok


def test_criterion_4_connector_statistics(record):
    t0 = time.perf_counter()
    H, part = build_h0(40, 40), planted_partition(40, 40)
    view = Typicality(H, part)
    A, B = sorted(part.side_a), sorted(part.side_b)
    rng = np.random.default_rng(0)
    patterns = ["AAA", "AAB", "ABA", "BAA", "BBB", "BBA", "BAB", "ABB"]

    def triples(pat1, pat2, avoid):
        pa = [v for v in rng.permutation(A) if v not in avoid]
        pb = [v for v in rng.permutation(B) if v not in avoid]
        side = lambda pat: tuple(int(pa.pop() if s == "A" else pb.pop()) for s in pat)
        return side(pat1), side(pat2)

    attempts = successes = exhausted = 0
    while attempts < 1000:
        major = patterns[int(rng.integers(2))] if rng.random() < 0.5 else patterns[4 + int(rng.integers(2))]
        t1, t2 = triples(major, major, set())
        try:
            T = sample_connector_set(H, part, ConnectorRequest(t1, t2), rng, view=view)
            attempts += T.attempts
            successes += 1
        except BudgetExhausted as exc:
            attempts += sum(exc.details["failures"].values())
            exhausted += 1
    rate = 1 - successes / attempts
    sigma = math.sqrt(rate * (1 - rate) / attempts)

    contract_bad = 0
    for i in range(200):
        avoid = {int(v) for v in rng.choice(80, 10, replace=False)}
        pat1 = patterns[i % 4] if i % 2 else patterns[4 + i % 4]
        pat2 = patterns[(i + 1) % 4] if i % 2 else patterns[4 + (i + 1) % 4]
        t1, t2 = triples(pat1, pat2, avoid)
        P = connect_triples(H, part, ConnectorRequest(t1, t2, frozenset(avoid)), np.random.default_rng(i),
                            view=view).sequence
        windows = [P[j:j + 4] for j in range(len(P) - 3)]
        contract_bad += not (
            len(P) <= 12 and len(set(P)) == len(P) and P[:3] == t1 and P[-3:] == t2 and not set(P) & avoid
            and all(H.has_edge(*w) and part.count_a(w) in (1, 3) for w in windows))
    seconds = time.perf_counter() - t0
    ok = rate + 3 * sigma < 0.75 and contract_bad == 0 and seconds < 60
    record(4, ok, f"per-attempt failure rate {rate:.3f} (+3 sigma {rate + 3 * sigma:.3f}) over {attempts} "
                  f"attempts, {contract_bad}/200 connector contract violations, {seconds:.1f}s")
    assert ok


def test_criterion_5_hamiltonian_path(record, family_runs):
    runs = [r for r in family_runs if r["mode"] == "path"]
    rate, clean_ok, clean = _success_bar(runs)
    slowest = max(r["seconds"] for r in runs if r["n"] == 60)
    errors = sorted({r["error"] for r in runs if not r["ok"]})
    ok = rate >= 0.95 and clean_ok and slowest < 30
    record(5, ok, f"path success {rate:.1%} of {len(runs)}, deletion-free {clean} all ok={clean_ok}, "
                  f"slowest n=60 run {slowest:.1f}s, errors={errors}")
    assert ok


_RESIDUE = re.compile(r"^residue (\d) = (\d)\+(\d) \(mod 8\)$")
_INTEGRALITY = re.compile(r"^integrality 3n1'-n2'\+6 = (-?\d+) = 0 \(mod 8\)$")


def _cycle_log_ok(lines):
    """An integrality line with V = 0 mod 8 and a chosen residue that matches the table."""
    integral = [int(m.group(1)) for m in map(_INTEGRALITY.match, lines) if m]
    chosen = [tuple(map(int, m.groups())) for m in map(_RESIDUE.match, lines) if m]
    case3 = "case 3" in lines
    hits = sum(1 for ln in lines if ln.endswith("table hit"))
    if not integral or any(v % 8 for v in integral) or not chosen:
        return False
    for a, x, y in chosen:
        if (x + y) % 8 != a or (case3 and RESIDUE_TABLE[a] != (x, y)):
            return False
    return hits == 8 if case3 else True


def test_criterion_6_hamiltonian_cycle(record, family_runs):
    runs = [r for r in family_runs if r["mode"] == "cycle"]
    rate, clean_ok, clean = _success_bar(runs)
    slowest = max(r["seconds"] for r in runs if r["n"] == 60)
    unlogged = sum(1 for r in runs if r["ok"] and not _cycle_log_ok(r["trace"]))
    errors = sorted({r["error"] for r in runs if not r["ok"]})
    ok = rate >= 0.95 and clean_ok and slowest < 30 and unlogged == 0
    record(6, ok, f"cycle success {rate:.1%} of {len(runs)}, deletion-free {clean} all ok={clean_ok}, "
                  f"runs missing integrality/table lines={unlogged}, slowest n=60 run {slowest:.1f}s, errors={errors}")
    assert ok


def _raised_h0(a, b, seed, target):
    """H0 plus random AABB quadruples until the minimum codegree reaches target."""
    rng = np.random.default_rng(seed)
    N = a + b
    edges = brute.h0_edges(range(a), range(a, N))
    extra = [p + q for p in combinations(range(a), 2) for q in combinations(range(a, N), 2)]
    order = rng.permutation(len(extra))
    H = build_graph(N, edges)
    for i in order:
        if min_codegree(H) >= target:
            break
        edges.append(extra[i])
        H = build_graph(N, edges)
    return H


def test_criterion_7_oracle_cross_check(record):
    t0 = time.perf_counter()
    params = DESK.with_(min_solver_n=6)
    suite = []
    for N in range(8, 15):
        suite.append(build_h0(N // 2, N - N // 2))
        suite.append(_raised_h0(N // 2, N - N // 2, N, (N - 1) // 2))
        suite.append(complete_graph(N))
        suite.append(build_graph(N, brute.random_edges(N, 0.3, N)))
    for N in (7, 9, 11, 13):
        suite.append(build_h0_prime(N // 2, N // 2))
    for n in range(4, 8):
        suite.append(build_benchmark(InstanceRecipe(n, medium_seeds=1, rng_seed=n)).graph)
    runs = certificates = no_instances = violations = 0
    for H in suite:
        for solver, oracle in ((solve_ham_path, exact_ham_path), (solve_ham_cycle, exact_ham_cycle)):
            truth = oracle(H)
            no_instances += truth is None
            runs += 1
            try:
                W = solver(H, params)
            except H4Error:
                continue
            certificates += 1
            if truth is None or not is_hamiltonian_certificate(H, W):
                violations += 1
    seconds = time.perf_counter() - t0
    ok = violations == 0
    record(7, ok, f"{runs} solver runs at N<=14 ({no_instances} oracle-NO), {certificates} certificates emitted, "
                  f"{violations} violations, {seconds:.1f}s")
    assert ok


def _structure_problems(lines):
    problems = []
    for ln in lines:
        word, _, rest = ln.partition(" ")
        fields = dict(kv.split("=", 1) for kv in rest.split() if "=" in kv)
        if word == "bridge" and int(fields["size"]) > 25:
            problems.append(ln)
        elif word == "pair":
            for size, switched in zip(fields["sizes"].split(","), fields["switched"].split(",")):
                if switched == "0" and int(size) > 25:
                    problems.append(ln)
        elif word == "absorb":
            pieces = [int(p) for p in fields.get("pieces", "").split(",") if p.isdigit()]
            if len(pieces) != int(fields["mediums"]) or any(p != 7 for p in pieces):
                problems.append(ln)
        elif word == "switcher" and rest.startswith("diff "):
            parts = rest.split()
            diff, size = int(parts[1]), int(parts[-1])
            if diff % 2 == 0 or size > 100:
                problems.append(ln)
        elif word == "good_set" and int(fields["size"]) >= 1600:
            problems.append(ln)
    return problems


def test_criterion_8_structure_sizes(record, family_runs, switcher_run):
    runs = family_runs + [switcher_run]
    lines = [ln for r in runs for ln in r["trace"]]
    counts = {w: sum(1 for ln in lines if ln.startswith(w + " ")) for w in ("bridge", "pair", "absorb", "good_set")}
    counts["switcher"] = sum(1 for ln in lines if ln.startswith("switcher diff "))
    problems = _structure_problems(lines)
    ok = not problems and all(counts.values())
    record(8, ok, f"checked {counts} trace records over {len(runs)} runs, violations={problems[:3]}")
    assert ok


def test_criterion_9_b_search(record):
    t0 = time.perf_counter()
    mismatches = 0
    for i in range(50):
        rng = np.random.default_rng(1000 + i)
        N = int(rng.integers(8, 17))
        if i % 2 == 0:
            edges = brute.random_edges(N, float(rng.uniform(0.2, 0.8)), 1000 + i)
        else:
            # near-extremal: H0 on a random side with a few flipped quadruples
            A = set(rng.permutation(N)[: (N + 1) // 2].tolist())
            flip = rng.uniform(0.0, 0.15)
            edges = [q for q in combinations(range(N), 4) if (len(A & set(q)) in (1, 3)) != (rng.random() < flip)]
        H = build_graph(N, edges)
        local = compute_b(H, exact_threshold=0, rng=np.random.default_rng(i)).value
        mismatches += local != exhaustive_b(H).value
    swap_bad = 0
    for i in range(500):
        rng = np.random.default_rng(5000 + i)
        N = int(rng.integers(6, 14))
        H = build_graph(N, brute.random_edges(N, float(rng.uniform(0.2, 0.8)), 5000 + i))
        part = Partition.from_side_a(N, rng.permutation(N)[: (N + 1) // 2].tolist())
        a = int(rng.choice(sorted(part.side_a)))
        b = int(rng.choice(sorted(part.side_b)))
        after = count_aabb(H, part.moved([a, b]))
        swap_bad += after != count_aabb(H, part) + swap_delta(H, part, a, b, link_tables(H, part))
    seconds = time.perf_counter() - t0
    ok = mismatches == 0 and swap_bad == 0 and seconds < 120
    record(9, ok, f"compute_b vs exhaustive_b mismatches {mismatches}/50, swap-gain mispredictions {swap_bad}/500, "
                  f"{seconds:.1f}s")
    assert ok
