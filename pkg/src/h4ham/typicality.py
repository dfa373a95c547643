"""Vertex, pair and triple classes and checkers for the counting claims.

All counts are exact. The class `Typicality` computes side-split
codegrees once per (graph, partition) and answers every threshold
query by array comparisons; the itemwise functions recompute from
scratch and serve as the cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from .core import Hypergraph4, Partition, SolverParams, min_codegree
from .errors import HypothesisViolated
from .extremal import LinkTables, compute_b, count_aabb, link_tables


class VertexKind(str, Enum):
    TYPICAL = "typical"
    MEDIUM = "medium"
    ANARCHIST = "anarchist"


@dataclass(frozen=True)
class VertexClass:
    kind: VertexKind
    eps: float
    ambiguous: bool = False

    def __str__(self):
        return self.kind.value


@dataclass(frozen=True)
class LinkProfile:
    l_aaa: int
    l_aab: int
    l_abb: int
    l_bbb: int

    @property
    def total(self) -> int:
        return self.l_aaa + self.l_aab + self.l_abb + self.l_bbb


@dataclass(frozen=True)
class PairProfile:
    l_aa: int
    l_ab: int
    l_bb: int

    @property
    def total(self) -> int:
        return self.l_aa + self.l_ab + self.l_bb


@dataclass(frozen=True)
class TripleProfile:
    d_a: int
    d_b: int


# ---------------------------------------------------------------------
# itemwise definitions (direct scans)


def link_profile(H: Hypergraph4, part: Partition, v: int) -> LinkProfile:
    counts = [0, 0, 0, 0]
    for e in H.edge_array():
        if v in e:
            k = sum(part.in_a(int(x)) for x in e if x != v)
            counts[3 - k] += 1
    return LinkProfile(*counts)


def pair_profile(H: Hypergraph4, part: Partition, u: int, v: int) -> PairProfile:
    counts = [0, 0, 0]
    for w, x in combinations(range(H.vertex_count), 2):
        if len({u, v, w, x}) == 4 and H.has_edge(u, v, w, x):
            counts[2 - part.in_a(w) - part.in_a(x)] += 1
    return PairProfile(*counts)


def triple_profile(H: Hypergraph4, part: Partition, T) -> TripleProfile:
    mask = H.nb(*T)
    d_a = bin(mask & part.mask_a).count("1")
    d_b = bin(mask & part.mask_b).count("1")
    return TripleProfile(d_a, d_b)


def _sizes(part: Partition):
    return len(part.side_a), len(part.side_b)


def vertex_thresholds(part: Partition, eps: float) -> tuple[float, float]:
    """(eps |A| C(|B|,2), eps C(|A|,2) |B|): the ABB and AAB cut-offs."""
    na, nb = _sizes(part)
    return eps * na * math.comb(nb, 2), eps * math.comb(na, 2) * nb


def _kind(cross: int, own: int, cut_cross: float, cut_own: float) -> tuple[VertexKind, bool]:
    typical = cross <= cut_cross
    anarchist = own <= cut_own
    if anarchist:
        return VertexKind.ANARCHIST, typical
    if typical:
        return VertexKind.TYPICAL, False
    return VertexKind.MEDIUM, False


def classify_vertex(H: Hypergraph4, part: Partition, v: int, eps: float) -> VertexClass:
    """Typical / medium / anarchist; anarchist wins when both tests pass."""
    prof = link_profile(H, part, v)
    cut_abb, cut_aab = vertex_thresholds(part, eps)
    if part.in_a(v):
        kind, amb = _kind(prof.l_abb, prof.l_aab, cut_abb, cut_aab)
    else:
        kind, amb = _kind(prof.l_aab, prof.l_abb, cut_aab, cut_abb)
    return VertexClass(kind, eps, amb)


def classify_pair(H: Hypergraph4, part: Partition, u: int, v: int, eps: float) -> bool:
    na, nb = _sizes(part)
    prof = pair_profile(H, part, u, v)
    k = part.in_a(u) + part.in_a(v)
    if k == 2:
        return prof.l_bb <= eps * math.comb(nb, 2)
    if k == 1:
        return prof.l_ab <= eps * na * nb
    return prof.l_aa <= eps * math.comb(na, 2)


def classify_triple(H: Hypergraph4, part: Partition, T, eps: float) -> bool:
    na, nb = _sizes(part)
    prof = triple_profile(H, part, T)
    k = part.count_a(T)
    if k == 3:
        return prof.d_b >= (1 - eps) * nb
    if k == 2:
        return prof.d_b <= eps * nb
    if k == 1:
        return prof.d_a <= eps * na
    return prof.d_a >= (1 - eps) * na


# ---------------------------------------------------------------------
# vectorised view


class Typicality:
    """All links of one (graph, partition) pair, with threshold queries."""

    def __init__(self, H: Hypergraph4, part: Partition, tables: LinkTables | None = None):
        self.H = H
        self.part = part
        self.t = tables if tables is not None else link_tables(H, part)
        self.in_a = self.t.in_a
        self.na, self.nb = _sizes(part)
        n = H.vertex_count
        r = np.arange(n)
        self.distinct3 = ((r[:, None, None] != r[None, :, None]) & (r[None, :, None] != r[None, None, :])
                          & (r[:, None, None] != r[None, None, :]))
        ia = self.in_a.astype(np.int8)
        self.count_a3 = ia[:, None, None] + ia[None, :, None] + ia[None, None, :]
        self.count_a2 = ia[:, None] + ia[None, :]
        self._cache = {}

    # links
    def link(self, v: int) -> LinkProfile:
        t = self.t
        return LinkProfile(int(t.l_aaa[v]), int(t.l_aab[v]), int(t.l_abb[v]), int(t.l_bbb[v]))

    def pair(self, u: int, v: int) -> PairProfile:
        t = self.t
        return PairProfile(int(t.p_aa[u, v]), int(t.p_ab[u, v]), int(t.p_bb[u, v]))

    def triple(self, T) -> TripleProfile:
        i, j, k = T
        return TripleProfile(int(self.t.da[i, j, k]), int(self.t.db[i, j, k]))

    @property
    def gain(self) -> np.ndarray:
        """I_v = l^AAB - l^ABB."""
        return self.t.gain

    # classes
    def vertex_kinds(self, eps: float) -> np.ndarray:
        """0 typical, 1 medium, 2 anarchist."""
        key = ("v", eps)
        if key not in self._cache:
            cut_abb, cut_aab = vertex_thresholds(self.part, eps)
            t = self.t
            cross = np.where(self.in_a, t.l_abb <= cut_abb, t.l_aab <= cut_aab)
            own = np.where(self.in_a, t.l_aab <= cut_aab, t.l_abb <= cut_abb)
            kinds = np.where(own, 2, np.where(cross, 0, 1))
            self._cache[key] = kinds
        return self._cache[key]

    def vertex_typical(self, eps: float) -> np.ndarray:
        return self.vertex_kinds(eps) == 0

    def ambiguous(self, eps: float) -> np.ndarray:
        cut_abb, cut_aab = vertex_thresholds(self.part, eps)
        t = self.t
        both = (t.l_abb <= cut_abb) & (t.l_aab <= cut_aab)
        return both

    def pair_typical(self, eps: float) -> np.ndarray:
        key = ("p", eps)
        if key not in self._cache:
            t = self.t
            na, nb = self.na, self.nb
            k = self.count_a2
            ok = np.where(k == 2, t.p_bb <= eps * math.comb(nb, 2),
                          np.where(k == 1, t.p_ab <= eps * na * nb, t.p_aa <= eps * math.comb(na, 2)))
            np.fill_diagonal(ok, False)
            self._cache[key] = ok
        return self._cache[key]

    def triple_typical(self, eps: float) -> np.ndarray:
        key = ("t", eps)
        if key not in self._cache:
            t = self.t
            na, nb = self.na, self.nb
            k = self.count_a3
            ok = np.select([k == 3, k == 2, k == 1],
                           [t.db >= (1 - eps) * nb, t.db <= eps * nb, t.da <= eps * na],
                           t.da >= (1 - eps) * na)
            self._cache[key] = ok & self.distinct3
        return self._cache[key]

    def good_triples(self, e1: float, e2: float, e3: float) -> np.ndarray:
        """(e1, e2, e3)-typical: vertices, pairs and the triple itself."""
        key = ("g", e1, e2, e3)
        if key not in self._cache:
            vt = self.vertex_typical(e1)
            pt = self.pair_typical(e2)
            ok = self.triple_typical(e3) & vt[:, None, None] & vt[None, :, None] & vt[None, None, :]
            ok &= pt[:, :, None] & pt[None, :, :] & pt[:, None, :]
            self._cache[key] = ok
        return self._cache[key]

    def good_pairs(self, e1: float, e2: float) -> np.ndarray:
        vt = self.vertex_typical(e1)
        return self.pair_typical(e2) & vt[:, None] & vt[None, :]


# ---------------------------------------------------------------------
# report


@dataclass
class ClaimResult:
    name: str
    lhs: float
    rhs: float
    passed: bool

    def line(self) -> str:
        return f"claim {self.name} {_num(self.lhs)} {_num(self.rhs)} {'pass' if self.passed else 'fail'}"


def _num(x) -> str:
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.6g}"


@dataclass
class TypicalityReport:
    eps: float
    classes: list
    links: list
    atypical_pairs: dict
    atypical_triples: dict
    gain: list
    claims: list = field(default_factory=list)

    def count(self, kind: VertexKind) -> int:
        return sum(1 for c in self.classes if c.kind == kind)

    def vertices(self, kind: VertexKind) -> list[int]:
        return [v for v, c in enumerate(self.classes) if c.kind == kind]

    def format(self) -> str:
        out = []
        for v, c in enumerate(self.classes):
            out.append(f"vclass {v} {c.kind.value}")
        for pat, k in sorted(self.atypical_pairs.items()):
            out.append(f"atypical_pairs {pat} {k}")
        for pat, k in sorted(self.atypical_triples.items()):
            out.append(f"atypical_triples {pat} {k}")
        for c in self.claims:
            out.append(c.line())
        return "\n".join(out) + "\n"


def _upper2(n):
    r = np.arange(n)
    return r[:, None] < r[None, :]


def _upper3(n):
    r = np.arange(n)
    return (r[:, None, None] < r[None, :, None]) & (r[None, :, None] < r[None, None, :])


_PAIR_NAMES = {2: "AA", 1: "AB", 0: "BB"}
_TRIPLE_NAMES = {3: "AAA", 2: "AAB", 1: "ABB", 0: "BBB"}


def classify_all(H: Hypergraph4, part: Partition, params: SolverParams | None = None,
                 eps: float | None = None, view: Typicality | None = None) -> TypicalityReport:
    """Classes at eps (default eps5), atypical pair/triple counts at eps2/eps3."""
    params = params or SolverParams()
    eps = params.eps5 if eps is None else eps
    view = view or Typicality(H, part)
    n = H.vertex_count
    kinds = view.vertex_kinds(eps)
    amb = view.ambiguous(eps)
    names = [VertexKind.TYPICAL, VertexKind.MEDIUM, VertexKind.ANARCHIST]
    classes = [VertexClass(names[int(k)], eps, bool(amb[v])) for v, k in enumerate(kinds)]
    links = [view.link(v) for v in range(n)]
    bad_p = ~view.pair_typical(params.eps2) & _upper2(n)
    bad_t = ~view.triple_typical(params.eps3) & _upper3(n)
    pairs = {_PAIR_NAMES[k]: int((bad_p & (view.count_a2 == k)).sum()) for k in (0, 1, 2)}
    triples = {_TRIPLE_NAMES[k]: int((bad_t & (view.count_a3 == k)).sum()) for k in range(4)}
    return TypicalityReport(eps, classes, links, pairs, triples, [int(x) for x in view.gain])


# ---------------------------------------------------------------------
# claim checkers


def _balanced_n(part: Partition) -> int:
    na, nb = _sizes(part)
    if na != nb:
        raise HypothesisViolated(f"claim needs |A| = |B|, got {na} and {nb}", hypothesis="balanced")
    return na


def double_count(H: Hypergraph4, part: Partition) -> tuple[int, int]:
    """(2|AABB| + 3|ABBB|, sum of d3 over ABB triples), by two routes."""
    e = H.edge_array()
    k = part.a_array()[e].sum(axis=1) if len(e) else np.zeros(0, dtype=np.int64)
    lhs = 2 * int((k == 2).sum()) + 3 * int((k == 1).sum())
    in_a = part.a_array()
    rhs = 0
    A = [v for v in range(H.vertex_count) if in_a[v]]
    B = [v for v in range(H.vertex_count) if not in_a[v]]
    for a in A:
        for b1, b2 in combinations(B, 2):
            rhs += bin(H.nb(a, b1, b2)).count("1")
    return lhs, rhs


def check_claim_edges(H: Hypergraph4, part: Partition, c: float, c1: float,
                      slack_c3: float = 1.0) -> tuple[bool, int, float]:
    """Missing H0 edges against (c1 + 4c) n^4 / 3 + slack_c3 n^3."""
    n = _balanced_n(part)
    aabb = count_aabb(H, part)
    problems = []
    if not aabb < c * n ** 4:
        problems.append(f"|AABB| = {aabb} >= c n^4 = {c * n ** 4:g}")
    delta = min_codegree(H)
    if delta < (1 - c1) * n:
        problems.append(f"min codegree {delta} < (1 - c1) n = {(1 - c1) * n:g}")
    if problems:
        raise HypothesisViolated("; ".join(problems), hypothesis="edges")
    e = H.edge_array()
    k = part.a_array()[e].sum(axis=1)
    typical = int(((k == 1) | (k == 3)).sum())
    lhs = 2 * n * math.comb(n, 3) - typical
    rhs = (c1 + 4 * c) * n ** 4 / 3 + slack_c3 * n ** 3
    return lhs <= rhs, lhs, rhs


def check_fact1(H: Hypergraph4, part: Partition, eps: float, exact_threshold: int = 20,
                verify_minimal: bool = True) -> bool:
    """An eps-anarchist on one side forces the other side to be 3eps-typical."""
    _balanced_n(part)
    if verify_minimal:
        b = compute_b(H, exact_threshold=exact_threshold, start=part)
        have = count_aabb(H, part)
        if have != b.value:
            raise HypothesisViolated(f"partition has {have} AABB edges, b(H) = {b.value}",
                                     hypothesis="b-minimal")
    view = Typicality(H, part)
    kinds = view.vertex_kinds(eps)
    typical3 = view.vertex_typical(3 * eps)
    in_a = view.in_a
    ok = True
    if ((kinds == 2) & ~in_a).any():
        ok &= bool(typical3[in_a].all())
    if ((kinds == 2) & in_a).any():
        ok &= bool(typical3[~in_a].all())
    return ok


def check_hypotheses(H: Hypergraph4, part: Partition, params: SolverParams,
                     codegree_floor: int | None = None) -> dict:
    """Evaluate codegree, side sizes and AABB count; raise on failure.

    The codegree floor defaults to n - 1; pure H0 sits at n - 2 and is
    admitted by passing that floor explicitly.
    """
    n = H.vertex_count // 2
    floor = n - 1 if codegree_floor is None else codegree_floor
    na = len(part.side_a)
    delta = min_codegree(H)
    aabb = count_aabb(H, part)
    e0 = params.eps0
    facts = {"min_codegree": delta, "n": n, "size_a": na, "aabb": aabb}
    problems = []
    if delta < floor:
        problems.append(f"min codegree {delta} < {floor}")
    if not (n - 5 * e0 * n <= na <= n + 5 * e0 * n):
        problems.append(f"|A| = {na} outside [n - 5 eps0 n, n + 5 eps0 n]")
    if aabb > e0 * n ** 4:
        problems.append(f"|AABB| = {aabb} > eps0 n^4 = {e0 * n ** 4:g}")
    if problems:
        raise HypothesisViolated("; ".join(problems), **facts)
    return facts


def coro1_eps4(params: SolverParams) -> float:
    """Smallest admissible eps4 for the triple-count corollary, or eps4 if larger."""
    e0, e1, e2, e3 = params.eps0, params.eps1, params.eps2, params.eps3
    return max(params.eps4, 16 * e0 / e1 + 4 * e1 / e2 + e1 / e3)


def check_counting_claims(H: Hypergraph4, part: Partition, params: SolverParams | None = None,
                          view: Typicality | None = None,
                          codegree_floor: int | None = None) -> list[ClaimResult]:
    """Every counting bound, evaluated by full enumeration."""
    params = params or SolverParams()
    facts = check_hypotheses(H, part, params, codegree_floor)
    n = facts["n"]
    e0, e1, e2, e3 = params.eps0, params.eps1, params.eps2, params.eps3
    view = view or Typicality(H, part)
    N = H.vertex_count
    in_a = view.in_a
    out = []

    ok, lhs, rhs = check_claim_edges(H, part, c=max(e0, (facts["aabb"] + 1) / n ** 4), c1=max(1, n - facts["min_codegree"]) / n,
                                     slack_c3=params.slack_c3) if len(part.side_a) == len(part.side_b) \
        else (True, 0, 0)
    out.append(ClaimResult("edges", lhs, rhs, ok))

    kinds = view.vertex_kinds(e1)
    atyp = int((kinds != 0).sum())
    out.append(ClaimResult("claim1_atypical", atyp, 8 * e0 / e1 * n, atyp < 8 * e0 / e1 * n))
    for side, mask in (("A", in_a), ("B", ~in_a)):
        an = int(((kinds == 2) & mask).sum())
        out.append(ClaimResult(f"claim1_anarchists_{side}", an, 5 * e0 * n, an < 5 * e0 * n or e1 >= 0.2))

    vt = view.vertex_typical(e1)
    bad_p = ~view.pair_typical(e2)
    np.fill_diagonal(bad_p, False)
    worst = 0
    for side_mask, patterns in ((in_a, (2, 1)), (~in_a, (0, 1))):
        for k in patterns:
            sel = bad_p & (view.count_a2 == k)
            counts = sel.sum(axis=1)[vt & side_mask]
            if len(counts):
                worst = max(worst, int(counts.max()))
    out.append(ClaimResult("claim2", worst, e1 / e2 * n, worst <= e1 / e2 * n))

    bad_t = ~view.triple_typical(e3) & view.distinct3
    worst = 0
    for side_mask, patterns in ((in_a, (2, 1, 3)), (~in_a, (2, 1, 0))):
        for k in patterns:
            # ordered triples through v: each unordered triple appears twice
            counts = (bad_t & (view.count_a3 == k)).sum(axis=(1, 2)) // 2
            counts = counts[vt & side_mask]
            if len(counts):
                worst = max(worst, int(counts.max()))
    out.append(ClaimResult("claim3", worst, e1 / e3 * n * n, worst <= e1 / e3 * n * n))

    pt = view.pair_typical(e2)
    worst = 0
    for k in range(4):
        counts = (bad_t & (view.count_a3 == k)).sum(axis=2)[pt]
        if len(counts):
            worst = max(worst, int(counts.max()))
    out.append(ClaimResult("claim4", worst, e2 / e3 * n, worst <= e2 / e3 * n))

    good = view.good_triples(e1, e2, e3)
    not_good = int((~good & _upper3(N)).sum())
    e4 = coro1_eps4(params)
    out.append(ClaimResult("coro1", not_good, e4 * n ** 3, not_good < e4 * n ** 3))
    return out


def derived_bounds(H: Hypergraph4, part: Partition, item, eps: float,
                   require_threshold: bool = True) -> list[ClaimResult]:
    """Lower bounds that typicality plus the codegree bound force on an item."""
    n = _balanced_n(part)
    if require_threshold:
        delta = min_codegree(H)
        if delta < n - 1:
            raise HypothesisViolated(f"min codegree {delta} < n - 1", hypothesis="codegree")
    item = tuple(int(v) for v in item)
    view = Typicality(H, part)
    k = part.count_a(item)
    out = []
    if len(item) == 1:
        v = item[0]
        if not view.vertex_typical(eps)[v]:
            raise HypothesisViolated(f"vertex {v} is not {eps}-typical", hypothesis="typical")
        p = view.link(v)
        cross, full = (p.l_aab, p.l_bbb) if k else (p.l_abb, p.l_aaa)
        out.append(ClaimResult("link_two_one", cross, 0.5 * n * (n - 1) ** 2 - 0.5 * eps * n ** 3,
                               cross >= 0.5 * n * (n - 1) ** 2 - 0.5 * eps * n ** 3))
        out.append(ClaimResult("link_opposite", full, (n * (n - 1) ** 2 - eps * n ** 3) / 6,
                               full >= (n * (n - 1) ** 2 - eps * n ** 3) / 6))
    elif len(item) == 2:
        if not view.pair_typical(eps)[item]:
            raise HypothesisViolated(f"pair {item} is not {eps}-typical", hypothesis="typical")
        p = view.pair(*item)
        if k == 1:
            val, rhs = p.l_aa + p.l_bb, (n - 1) ** 2 - eps * n * n
        else:
            val, rhs = p.l_ab, n * (n - 1) - eps * n * n
        out.append(ClaimResult("pair_link", val, rhs, val >= rhs))
    elif len(item) == 3:
        if not view.triple_typical(eps)[item]:
            raise HypothesisViolated(f"triple {item} is not {eps}-typical", hypothesis="typical")
        p = view.triple(item)
        val = p.d_b if k in (3, 1) else p.d_a
        rhs = n - 1 - eps * n
        out.append(ClaimResult("triple_side_degree", val, rhs, val >= rhs))
    else:
        raise ValueError("item must be a vertex, pair or triple")
    return out
