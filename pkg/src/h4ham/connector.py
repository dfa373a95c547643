"""Short tight paths between typical triples using only typical edges.

Along a tight path whose every edge meets A in 1 or 3 vertices the side
sequence is 4-periodic, so the first triple fixes the whole pattern and
the last triple fixes the length modulo 4.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import Hypergraph4, Partition, SolverParams, TightPath, mask_words, verify_tight_path
from .errors import BudgetExhausted, ConstructionFailed, HypothesisViolated
from .typicality import Typicality

MAX_CONNECTOR = 12
MIN_SIDE = 5


@dataclass(frozen=True)
class ConnectorRequest:
    triple_from: tuple
    triple_to: tuple
    avoid: frozenset = frozenset()
    params: SolverParams = field(default_factory=SolverParams)
    # (vertex, pair, triple) scale the end triples must be typical at;
    # None means (eps1, eps2, eps3)
    scale: tuple | None = None
    cap_avoid: bool = True

    def __post_init__(self):
        object.__setattr__(self, "triple_from", tuple(int(v) for v in self.triple_from))
        object.__setattr__(self, "triple_to", tuple(int(v) for v in self.triple_to))
        object.__setattr__(self, "avoid", frozenset(int(v) for v in self.avoid))

    @property
    def thresholds(self) -> tuple:
        p = self.params
        return self.scale if self.scale is not None else (p.eps1, p.eps2, p.eps3)


@dataclass(frozen=True)
class ConnectorSet:
    vertices: frozenset
    attempts: int
    failures: dict


def is_h0_connected(part: Partition, t1, t2) -> bool:
    """Both triples have two A-vertices, or both have two B-vertices."""
    return (part.count_a(t1) >= 2) == (part.count_a(t2) >= 2)


def is_h0_complete(H: Hypergraph4, part: Partition, S) -> bool:
    """Every AAAB / ABBB quadruple inside S is an edge of H."""
    S = np.array(sorted(set(int(v) for v in S)), dtype=np.int64)
    if len(S) < 4:
        return True
    in_a = part.a_array()
    sa = [int(v) for v in S if in_a[v]]
    sb = [int(v) for v in S if not in_a[v]]
    N = H.vertex_count
    wa, wb = mask_words(N, sa), mask_words(N, sb)
    i, j, k = _sorted_triples(len(S))
    i, j, k = S[i], S[j], S[k]
    c = in_a[i].astype(np.int8) + in_a[j] + in_a[k]
    # AAA and ABB triples need all of S_B, BBB and AAB all of S_A, minus
    # their own members, which never lie in the neighbourhood
    need = np.where((c % 2 == 1)[:, None], wb[None, :], wa[None, :])
    missing = np.bitwise_count(need & ~H.words[i, j, k]).sum(axis=1)
    own = np.where((c == 1) | (c == 2), 2, 0)
    return bool((missing == own).all())


def _sorted_triples(k: int):
    r = np.arange(k)
    return np.nonzero((r[:, None, None] < r[None, :, None]) & (r[None, :, None] < r[None, None, :]))


def side_pattern(part: Partition, first, length: int) -> str:
    """The forced A/B string of a typical-only tight path starting with `first`."""
    head = part.pattern(first)
    # the fourth vertex makes the A-count odd
    period = head + ("B" if head.count("A") % 2 else "A")
    return "".join(period[i % 4] for i in range(length))


def connector_lengths(part: Partition, t1, t2, low: int = 6, high: int = MAX_CONNECTOR) -> list[int]:
    """Lengths in [low, high] whose forced pattern ends in t2's pattern."""
    want = part.pattern(t2)
    out = []
    for L in range(max(low, 6), high + 1):
        if side_pattern(part, t1, L)[-3:] == want:
            out.append(L)
    return out


def _check_request(H: Hypergraph4, part: Partition, req: ConnectorRequest, view: Typicality | None):
    t1, t2, K = req.triple_from, req.triple_to, req.avoid
    if len(set(t1)) != 3 or len(set(t2)) != 3 or set(t1) & set(t2):
        raise HypothesisViolated("end triples must be disjoint triples", t1=t1, t2=t2)
    if (set(t1) | set(t2)) & K:
        raise HypothesisViolated("end triples meet the avoid set", t1=t1, t2=t2)
    n = H.vertex_count // 2
    if req.cap_avoid and len(K) > (2 * n) // 3:
        raise HypothesisViolated(f"|K| = {len(K)} > floor(2n/3) = {(2 * n) // 3}", avoid=len(K))
    if not is_h0_connected(part, t1, t2):
        raise HypothesisViolated(f"triples {part.pattern(t1)} and {part.pattern(t2)} are not H0-connected",
                                 t1=t1, t2=t2)
    view = view or Typicality(H, part)
    good = view.good_triples(*req.thresholds)
    for T in (t1, t2):
        if not good[T]:
            raise HypothesisViolated(f"triple {T} is not typical at scale {req.thresholds}", triple=T)
    return view


def sample_connector_set(H: Hypergraph4, part: Partition, req: ConnectorRequest, rng,
                         view: Typicality | None = None, check: bool = True) -> ConnectorSet:
    """Random vertex set T making both end-triple unions H0-complete."""
    if check:
        view = _check_request(H, part, req, view)
    N = H.vertex_count
    p = req.params.sample_rate(N // 2)
    blocked = np.zeros(N, dtype=bool)
    blocked[list(req.avoid | set(req.triple_from) | set(req.triple_to))] = True
    in_a = part.a_array()
    tally = Counter()
    budget = req.params.connector_retry_budget
    for attempt in range(1, budget + 1):
        # full-length draw each attempt keeps the stream independent of K
        draw = rng.random(N) < p
        chosen = draw & ~blocked
        T = np.flatnonzero(chosen)
        failed = False
        if int(in_a[T].sum()) < MIN_SIDE:
            tally["few_a"] += 1
            failed = True
        if int((~in_a[T]).sum()) < MIN_SIDE:
            tally["few_b"] += 1
            failed = True
        if not failed and not is_h0_complete(H, part, list(T) + list(req.triple_from)):
            tally["incomplete_from"] += 1
            failed = True
        if not failed and not is_h0_complete(H, part, list(T) + list(req.triple_to)):
            tally["incomplete_to"] += 1
            failed = True
        if not failed:
            return ConnectorSet(frozenset(int(v) for v in T), attempt, dict(tally))
    raise BudgetExhausted(f"no connector set in {budget} attempts", failures=dict(tally))


def _fill_from_set(part: Partition, req: ConnectorRequest, T: frozenset, rng) -> TightPath:
    t1, t2 = req.triple_from, req.triple_to
    lengths = connector_lengths(part, t1, t2, low=9)
    if not lengths:
        raise ConstructionFailed("no pattern of at most 12 vertices joins these triples",
                                 t1=part.pattern(t1), t2=part.pattern(t2))
    L = lengths[0]
    pat = side_pattern(part, t1, L)[3:L - 3]
    pool_a = [v for v in sorted(T) if part.in_a(v)]
    pool_b = [v for v in sorted(T) if not part.in_a(v)]
    pick_a = list(rng.permutation(pool_a))[:pat.count("A")]
    pick_b = list(rng.permutation(pool_b))[:pat.count("B")]
    middle = [int(pick_a.pop() if s == "A" else pick_b.pop()) for s in pat]
    return TightPath(t1 + tuple(middle) + t2)


class _Filler:
    """Backtracking fill of a forced side pattern, windows checked directly."""

    def __init__(self, H, part, t1, t2, L, pool_a, pool_b, rng, node_budget):
        self.H, self.t1, self.t2, self.L = H, t1, t2, L
        self.pattern = side_pattern(part, t1, L)
        self.pool = {"A": pool_a, "B": pool_b}
        self.rng = rng
        self.budget = node_budget
        self.seq = list(t1) + [None] * (L - 6) + list(t2)

    def _allowed(self, i: int, used: int) -> int:
        L, seq = self.L, self.seq
        mask = self.pool[self.pattern[i]] & ~used
        for s in range(max(0, i - 3), min(i, L - 4) + 1):
            others = [j for j in range(s, s + 4) if j != i]
            if all(j < i or j >= L - 3 for j in others):
                a, b, c = (seq[j] for j in others)
                mask &= self.H.nb(a, b, c)
                if not mask:
                    return 0
        return mask

    def run(self):
        used = 0
        for v in self.seq:
            if v is not None:
                used |= 1 << v
        if self.L == 6:
            return self.seq if verify_tight_path(self.H, self.seq) else None
        return self._go(3, used)

    def _go(self, i: int, used: int):
        if i == self.L - 3:
            return list(self.seq)
        mask = self._allowed(i, used)
        cands = []
        while mask:
            low = mask & -mask
            cands.append(low.bit_length() - 1)
            mask ^= low
        for v in self.rng.permutation(cands) if len(cands) > 1 else cands:
            if self.budget <= 0:
                return None
            self.budget -= 1
            self.seq[i] = int(v)
            out = self._go(i + 1, used | (1 << int(v)))
            if out is not None:
                return out
        self.seq[i] = None
        return None


def search_connector(H: Hypergraph4, part: Partition, req: ConnectorRequest, rng,
                     pool: int, node_budget: int = 20000, min_length: int = 6) -> TightPath:
    """Shortest typical-edge path between the triples with interior drawn from `pool`.

    `pool` is a vertex bitset; K and the end triples are removed from it.
    """
    t1, t2 = req.triple_from, req.triple_to
    block = 0
    for v in set(t1) | set(t2) | req.avoid:
        block |= 1 << v
    pool &= ~block
    mask_a = pool & part.mask_a
    mask_b = pool & part.mask_b
    for L in connector_lengths(part, t1, t2, low=min_length):
        out = _Filler(H, part, t1, t2, L, mask_a, mask_b, rng, node_budget).run()
        if out is not None:
            return TightPath(tuple(out))
    raise BudgetExhausted("connector search found no path of at most 12 vertices",
                          t1=t1, t2=t2, avoid=len(req.avoid))


def connect_triples(H: Hypergraph4, part: Partition, req: ConnectorRequest, rng,
                    view: Typicality | None = None, strategy: str = "sample",
                    pool: int | None = None) -> TightPath:
    """K-avoiding tight path of at most 12 vertices from triple_from to triple_to.

    strategy "sample" draws a connector set and fills the forced pattern
    inside it; "search" backtracks over typical vertices and checks every
    window against H.
    """
    view = _check_request(H, part, req, view)
    if strategy == "sample":
        T = sample_connector_set(H, part, req, rng, view, check=False).vertices
        P = _fill_from_set(part, req, T, rng)
    elif strategy == "search":
        if pool is None:
            typical = view.vertex_typical(req.thresholds[0])
            pool = 0
            for v in np.flatnonzero(typical):
                pool |= 1 << int(v)
        P = search_connector(H, part, req, rng, pool)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    check_connector(H, part, req, P)
    return P


def check_connector(H: Hypergraph4, part: Partition, req: ConnectorRequest, P) -> None:
    """Raise ConstructionFailed unless P meets the connector contract."""
    seq = tuple(P)
    problems = []
    if len(seq) > MAX_CONNECTOR:
        problems.append(f"{len(seq)} vertices")
    if seq[:3] != req.triple_from or seq[-3:] != req.triple_to:
        problems.append("wrong end triples")
    if set(seq) & req.avoid:
        problems.append("meets K")
    if set(seq[3:-3]) & (set(req.triple_from) | set(req.triple_to)):
        problems.append("interior meets an end triple")
    verdict = verify_tight_path(H, seq)
    if not verdict:
        problems.append(verdict.reason)
    for i in range(len(seq) - 3):
        if part.count_a(seq[i:i + 4]) not in (1, 3):
            problems.append(f"window {i} is not typical")
            break
    if problems:
        raise ConstructionFailed("connector contract broken: " + "; ".join(problems), path=seq)
