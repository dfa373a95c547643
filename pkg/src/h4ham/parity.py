"""Tight Hamiltonian cycles: mod-8 differences, seeds, switchers, good sets.

A cycle closes only when (3 n1 - n2 + 6) / 8 is an integer for the
vertices left outside the two bridges, so the bridges are picked from a
good set that realises every residue of m1* + m2* modulo 8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (Bridge, Trace, Workspace, _free_end_triple, _interleave, _mask, _match_slots,
                       _slot_masks, absorb_medium, bridge_from_core, build_disjoint_bridges, path_threshold,
                       residue_of, sequence_through, slot_windows, staged, transfer_anarchists, _partition)
from .core import (Hypergraph4, Partition, SolverParams, TightCycle, TightPath, bits_of, is_hamiltonian_certificate,
                   mask_words, min_codegree, verify_tight_cycle, verify_tight_path)
from .errors import (BudgetExhausted, CaseExhausted, ConstructionFailed, EnvelopeViolated, H4Error,
                     HypothesisViolated, MatchingFailed, NotIntegral, SearchExhausted, ThresholdNotMet)

# residue a -> (difference of the u-bridge, difference of the v-bridge)
RESIDUE_TABLE = {0: (0, 0), 1: (3, 6), 2: (3, 7), 3: (0, 3), 4: (6, 6), 5: (6, 7), 6: (0, 6), 7: (0, 7)}
ANCHOR_DIFFERENCES = (0, 3, 6, 7)
MAX_SWITCHER = 100
MAX_GOOD_SET = 1600
MAX_LONG_BRIDGE = 800
SEED_TARGET = 14

_RECOVERABLE = (ConstructionFailed, HypothesisViolated, BudgetExhausted, MatchingFailed, SearchExhausted)


class Difference(int):
    """Residue modulo 8; addition stays modulo 8."""

    def __new__(cls, value: int):
        return super().__new__(cls, int(value) % 8)

    @property
    def residue(self) -> int:
        return int(self)

    def __add__(self, other):
        return Difference(int(self) + int(other))

    __radd__ = __add__

    def __repr__(self):
        return f"Difference({int(self)})"


def path_difference(part: Partition, P) -> Difference:
    """3|V(P) ∩ A| - |V(P) ∩ B| mod 8."""
    return Difference(residue_of(part, P))


def mirror_residue(d: int) -> int:
    """Difference of the same path after swapping the sides: -3 d mod 8."""
    return (-3 * d) % 8


# ---------------------------------------------------------------------
# seeds


@dataclass(frozen=True)
class Seed:
    """(a, a', b, w) with w in B (kind "A"), or (b, b', a, w) with w in A (kind "B")."""

    quad: tuple
    kind: str

    @property
    def vertices(self) -> frozenset:
        return frozenset(self.quad)


def check_seed(ws: Workspace, s: Seed) -> None:
    x, x2, y, w = s.quad
    major = s.kind == "A"
    problems = []
    if not ws.H.has_edge(x, x2, y, w):
        problems.append("not an edge")
    if not ws.good[x, x2, y]:
        problems.append("first triple not typical")
    if not ws.typical[w]:
        problems.append("w not typical")
    if bool(ws.in_a[x]) != major or bool(ws.in_a[x2]) != major or bool(ws.in_a[y]) == major \
            or bool(ws.in_a[w]) == major:
        problems.append("side pattern")
    if problems:
        raise ConstructionFailed("seed contract broken: " + ", ".join(problems), stage="seed")


def find_disjoint_seeds(H: Hypergraph4, part: Partition, params: SolverParams, K=(), count: int = SEED_TARGET,
                        kind: str = "A", rng=None, ws: Workspace | None = None) -> list[Seed]:
    """Greedy pairwise-disjoint seeds avoiding K, with the link-exclusion rule.

    A triple is skipped once its neighbourhood meets the exclusion set,
    which starts as the minor-side part of K and gains b and w of every
    chosen seed; this keeps each later w away from earlier seeds.
    """
    if count <= 0:
        return []
    ws = ws or Workspace(H, part, params, rng)
    rng = ws.rng
    major_a = kind == "A"
    avoid = _mask(K)
    free = ws.free_typical(avoid)
    major = [v for v in bits_of(free) if bool(ws.in_a[v]) == major_a]
    minor = [v for v in bits_of(free) if bool(ws.in_a[v]) != major_a]
    if len(major) < 2 or len(minor) < 2:
        return []
    X = np.array(major, dtype=np.int64)
    Y = np.array(minor, dtype=np.int64)
    ii, jj = np.triu_indices(len(X), 1)
    i = np.repeat(X[ii], len(Y))
    j = np.repeat(X[jj], len(Y))
    k = np.tile(Y, len(ii))
    keep = ws.good[i, j, k]
    i, j, k = i[keep], j[keep], k[keep]
    if len(i) == 0:
        return []
    words = H.words[i, j, k]
    N = H.vertex_count
    minor_side = [v for v in range(N) if bool(ws.in_a[v]) != major_a]
    excl = mask_words(N, [v for v in bits_of(avoid) if v in set(minor_side)])
    wpool = mask_words(N, minor)
    alive = np.ones(len(i), dtype=bool)
    out: list[Seed] = []
    while len(out) < count:
        ok = alive & ~(words & excl).any(axis=1) & (words & wpool).any(axis=1)
        idx = np.flatnonzero(ok)
        if len(idx) == 0:
            break
        c = int(rng.choice(idx))
        a, a2, b = int(i[c]), int(j[c]), int(k[c])
        ws_row = words[c] & wpool
        cands = [w for w in range(N) if (int(ws_row[w >> 6]) >> (w & 63)) & 1]
        w = int(rng.choice(cands))
        s = Seed((a, a2, b, w), kind)
        check_seed(ws, s)
        out.append(s)
        used = [a, a2, b, w]
        alive &= ~np.isin(i, used) & ~np.isin(j, used) & ~np.isin(k, used)
        for v in (b, w):
            excl[v >> 6] |= np.uint64(1 << (v & 63))
            wpool[v >> 6] &= ~np.uint64(1 << (v & 63))
    return out


# ---------------------------------------------------------------------
# switchers


@dataclass(frozen=True)
class Switcher:
    path: TightPath
    start: tuple
    end: tuple
    difference: int
    branch: str = ""

    @property
    def vertices(self) -> frozenset:
        return frozenset(self.path.sequence)

    def __len__(self):
        return len(self.path)


def check_switcher(ws: Workspace, S: Switcher) -> None:
    part = ws.part
    seq = S.path.sequence
    problems = []
    head, tail = part.pattern(seq[:3]), part.pattern(seq[-3:])
    if (head, tail) not in (("BAA", "AAA"), ("ABB", "BBB")):
        problems.append(f"end patterns {head}/{tail}")
    if not (ws.good[tuple(seq[:3])] and ws.good[tuple(seq[-3:])]):
        problems.append("end triples not typical")
    if len(seq) > MAX_SWITCHER:
        problems.append(f"{len(seq)} > {MAX_SWITCHER} vertices")
    if S.difference != residue_of(part, seq) or S.difference % 2 == 0:
        problems.append("difference")
    if any(ws.kinds[v] == 2 for v in seq):
        problems.append("contains an anarchist")
    v = verify_tight_path(ws.H, seq)
    if not v:
        problems.append(v.reason)
    if problems:
        raise ConstructionFailed("switcher contract broken: " + ", ".join(problems), stage="switcher")


class _Branches:
    """Ordered decision list for one pair of seeds; every attempt is logged."""

    def __init__(self, ws: Workspace, avoid: int):
        self.ws = ws
        self.avoid = avoid
        self.log: list[str] = []

    def note(self, name: str, outcome: str):
        self.log.append(f"{name}:{outcome}")
        self.ws.trace.add("branch", name=name, outcome=outcome)

    def attempt(self, name: str, fn):
        snap = self.ws.used
        try:
            out = fn()
        except _RECOVERABLE as exc:
            self.ws.used = snap
            self.note(name, f"failed({type(exc).__name__}: {str(exc)[:60]})")
            return None
        if out is None:
            self.ws.used = snap
            self.note(name, "none")
        else:
            self.note(name, f"diff={out.difference}")
        return out


def _pick_bit(rng, mask: int):
    vs = bits_of(mask)
    return None if not vs else int(vs[int(rng.integers(len(vs)))])


def _extensions(ws: Workspace, seed: Seed, avoid: int, limit: int = 40) -> dict:
    """Extensions a a' b w u v grouped by the side pattern of (u, v)."""
    a, a2, b, w = seed.quad
    H = ws.H
    pairs = ws.view.good_pairs(*ws.params.working[:2])
    half = ws.view.triple_typical(ws.params.working[2])
    free = ws.free_typical(avoid) & ~_mask(seed.quad)
    out: dict[str, list] = {}
    us = bits_of(H.nb(a2, b, w) & free)
    for idx in ws.rng.permutation(len(us))[:limit]:
        u = us[idx]
        for v in bits_of(H.nb(b, w, u) & free & ~(1 << u)):
            if pairs[u, v] and half[w, u, v] and ws.good[b, u, v]:
                out.setdefault(ws.part.pattern((u, v)), []).append((u, v))
    return out


def _major(ws: Workspace, v: int) -> bool:
    return bool(ws.in_a[v])


def _aa_landing(ws: Workspace, seed: Seed, uv, avoid: int) -> Switcher | None:
    """abar a a' b w u v a'' b' read backwards: BAA ... AAA with difference 7."""
    a, a2, b, w = seed.quad
    u, v = uv
    H, rng = ws.H, ws.rng
    free = ws.free_typical(avoid) & ~_mask((a, a2, b, w, u, v))
    A = ws.part.mask_a
    for _ in range(20):
        abar = _pick_bit(rng, H.nb(a, a2, b) & free & A)
        if abar is None or not ws.good[abar, a, a2]:
            continue
        a3 = _pick_bit(rng, H.nb(w, u, v) & free & A & ~(1 << abar))
        if a3 is None or not ws.good[u, v, a3]:
            continue
        b2 = _pick_bit(rng, H.nb(u, v, a3) & free & ws.part.mask_b & ~(1 << abar))
        if b2 is None or not ws.good[v, a3, b2]:
            continue
        seq = [b2, a3, v, u, w, b, a2, a, abar]
        if verify_tight_path(H, seq):
            ws.claim(seq)
            return Switcher(TightPath(tuple(seq)), tuple(seq[:3]), tuple(seq[-3:]), residue_of(ws.part, seq),
                            "aa_landing")
    return None


def _switcher_with_tail(ws: Workspace, core, avoid: int, name: str) -> Switcher | None:
    """core starts with a typical BAA triple; extend the back to a fresh AAA triple."""
    core = [int(v) for v in core]
    if ws.part.pattern(core[:3]) != "BAA" or not ws.good[tuple(core[:3])]:
        return None
    if not verify_tight_path(ws.H, core):
        return None
    tail = tuple(core[-3:])
    if ws.part.count_a(tail) < 2 or not ws.good[tail]:
        return None
    for _ in range(8):
        T = ws.random_good_triple("AAA", avoid=avoid | _mask(core))
        if T is None:
            return None
        try:
            C = ws.connect(tail, T, avoid=avoid | _mask(core[:-3]))
        except (BudgetExhausted, HypothesisViolated):
            continue
        seq = core + list(C.sequence[3:])
        d = residue_of(ws.part, seq)
        if d % 2 == 0:
            return None
        ws.claim(seq)
        return Switcher(TightPath(tuple(seq)), tuple(seq[:3]), tuple(seq[-3:]), d, name)
    return None


def join_bridges(ws: Workspace, R1: Bridge, R2: Bridge, avoid: int = 0, name: str = "join") -> Switcher | None:
    """x R1 C rev(R2): BAA ... AAA with difference r1* + r2* + 2 (both bridges claimed)."""
    s1, s2 = list(R1.path.sequence), list(R2.path.sequence)
    t_from = tuple(s1[-3:])
    t_to = (s2[-1], s2[-2], s2[-3])
    C = ws.connect(t_from, t_to, avoid=avoid)
    mid = list(C.sequence[3:-3])
    body = s1 + mid + s2[::-1]
    free = ws.free_typical(avoid) & ~_mask(body) & ws.part.mask_b
    cands = bits_of(ws.H.nb(body[0], body[1], body[2]) & free)
    for x in (cands[i] for i in ws.rng.permutation(len(cands))):
        if ws.good[x, body[0], body[1]]:
            seq = [x] + body
            d = residue_of(ws.part, seq)
            expect = (R1.difference + R2.difference + 2) % 8
            if d != expect:
                raise ConstructionFailed(f"joined difference {d} != r1 + r2 + 2 = {expect}", stage="switcher")
            if len(seq) > MAX_SWITCHER or d % 2 == 0:
                return None
            ws.claim(mid + [x])
            return Switcher(TightPath(tuple(seq)), tuple(seq[:3]), tuple(seq[-3:]), d, name)
    return None


def _seed_bridge(ws: Workspace, core, avoid: int) -> Bridge:
    return bridge_from_core(ws, core, avoid)


def build_switcher(H: Hypergraph4, part: Partition, params: SolverParams, seed1: Seed, seed2: Seed, K=(),
                   rng=None, ws: Workspace | None = None) -> Switcher:
    """Odd-difference switcher of at most 100 vertices from two disjoint seeds.

    Seeds of kind "B" are handled on the swapped partition; the result
    is then an ABB ... BBB path of odd difference.
    """
    if seed1.kind != seed2.kind:
        raise HypothesisViolated("seeds must have the same kind", kinds=(seed1.kind, seed2.kind))
    if seed1.vertices & seed2.vertices:
        raise HypothesisViolated("seeds must be disjoint")
    if (seed1.vertices | seed2.vertices) & set(int(v) for v in K):
        raise HypothesisViolated("seeds meet K")
    ws = ws or Workspace(H, part, params, rng)
    if seed1.kind == "B":
        mirror = Workspace(H, part.swapped(), params, ws.rng, ws.trace)
        mirror.used = ws.used
        S = _switcher_on(mirror, Seed(seed1.quad, "A"), Seed(seed2.quad, "A"), _mask(K))
        ws.used = mirror.used
        S = Switcher(S.path, S.start, S.end, residue_of(part, S.path), S.branch)
    else:
        S = _switcher_on(ws, seed1, seed2, _mask(K))
    check_switcher(ws, S)
    ws.trace.raw(f"switcher diff {S.difference} branch {S.branch} size {len(S)}")
    return S


def _switcher_on(ws: Workspace, s1: Seed, s2: Seed, avoid: int) -> Switcher:
    n = ws.H.vertex_count // 2
    H = ws.H
    dl = _Branches(ws, avoid)
    seeds_mask = _mask(s1.quad) | _mask(s2.quad)
    base = ws.used
    ws.used |= seeds_mask
    exts = {}
    for s in (s1, s2):
        ws.release(s.quad)
        exts[s] = _extensions(ws, s, avoid | (seeds_mask & ~_mask(s.quad)))
        ws.claim(s.quad)
    ws.used = base

    def finish(S: Switcher) -> Switcher:
        # keep only the switcher's vertices
        ws.used = base | _mask(S.path.sequence)
        return S

    # direct 9-vertex switcher when some extension lands in AA
    for s in (s1, s2):
        for uv in exts[s].get("AA", [])[:4]:
            other = _mask(s2.quad if s is s1 else s1.quad)
            S = dl.attempt("aa_landing", lambda: _aa_landing(ws, s, uv, avoid | other))
            if S is not None:
                return finish(S)

    # one bridge from each seed; different parities join to an odd switcher
    def seed_bridges(s: Seed, other: int):
        a, a2, b, w = s.quad
        for pat in ("BA", "AB", "BB"):
            for (u, v) in exts[s].get(pat, [])[:3]:
                name = {"BA": "bridge_ba", "AB": "bridge_ab", "BB": "bridge_bb"}[pat]
                R = dl.attempt(name, lambda: _seed_bridge(ws, [a, a2, b, w, u, v], avoid | other))
                if R is not None:
                    return R, pat
        return None, None

    R1, p1 = seed_bridges(s1, _mask(s2.quad))
    R2, p2 = seed_bridges(s2, _mask(R1.path.sequence) if R1 else _mask(s1.quad))
    if R1 is not None and R2 is not None and (R1.difference + R2.difference) % 2 == 1:
        S = dl.attempt("join_mixed", lambda: join_bridges(ws, R1, R2, avoid, "join_mixed"))
        if S is not None:
            return finish(S)

    # same parity: alternative bridges or direct switchers from the seed links
    for s, R_other in ((s1, R2), (s2, R1)):
        a, a2, b, w = s.quad
        mine = exts[s]
        own_bridge = R1 if s is s1 else R2
        if own_bridge is not None:
            ws.release(set(own_bridge.path.sequence) - set(s.quad))
        ws.used |= _mask(s.quad)
        ws.release(s.quad)
        keep = _mask(R_other.path.sequence) if R_other is not None else _mask((s2 if s is s1 else s1).quad)
        lB = bits_of(H.nb(a, a2, w) & ws.part.mask_b)
        lA = bits_of(H.nb(a, a2, w) & ws.part.mask_a)
        options = []
        if len(lB) >= n / 2 and mine.get("BA"):
            options.append("even_b_half")
        if len(lA) >= n / 2:
            options.append("even_a_half")
        if len(lB) >= n / 3 and (mine.get("AB") or mine.get("BB")):
            options.append("odd_b_third")
        options.append("odd_a_fifth")
        if mine.get("BB") or mine.get("AB"):
            options.append("bb_zero")
        options.append("ab_even")
        for name in options:
            out = dl.attempt(name, lambda: _secondary(ws, name, s, mine, avoid | keep))
            if out is None:
                continue
            if isinstance(out, Switcher):
                return finish(out)
            if R_other is not None and (out.difference + R_other.difference) % 2 == 1:
                pair = (out, R_other) if s is s1 else (R_other, out)
                S = dl.attempt("join_" + name, lambda: join_bridges(ws, pair[0], pair[1], avoid, "join_" + name))
                if S is not None:
                    return finish(S)
            ws.release(set(out.path.sequence))
    ws.used = base
    raise CaseExhausted("no odd switcher from these seeds", stage="switcher", branches=";".join(dl.log))


def _secondary(ws: Workspace, name: str, s: Seed, exts: dict, avoid: int):
    a, a2, b, w = s.quad
    H, rng = ws.H, ws.rng
    free = ws.free_typical(avoid) & ~_mask(s.quad)
    A, B = ws.part.mask_a, ws.part.mask_b
    if name == "even_b_half":
        for (u, v) in exts.get("BA", [])[:3]:
            for _ in range(6):
                x = _pick_bit(rng, H.nb(a, a2, w) & free & B & ~_mask((u, v)))
                if x is not None and ws.good[x, a, a2]:
                    return _seed_bridge(ws, [x, a, a2, w, b, u, v], avoid)
        return None
    if name == "even_a_half":
        for _ in range(6):
            x = _pick_bit(rng, H.nb(a, a2, w) & free & A)
            if x is None:
                return None
            S = _switcher_with_tail(ws, [b, a, a2, w, x], avoid, name)
            if S is not None:
                return S
            y = _pick_bit(rng, H.nb(a2, w, x) & free & B & ~(1 << x))
            if y is not None:
                try:
                    return _seed_bridge(ws, [b, a, a2, w, x, y], avoid)
                except ConstructionFailed:
                    continue
        return None
    if name == "odd_b_third":
        for pat in ("AB", "BB"):
            for (u, v) in exts.get(pat, [])[:3]:
                try:
                    return _seed_bridge(ws, [a, a2, w, b, u, v], avoid)
                except ConstructionFailed:
                    continue
        return None
    if name == "odd_a_fifth":
        for _ in range(6):
            x = _pick_bit(rng, H.nb(a, a2, w) & H.nb(a2, b, w) & free & A)
            if x is None:
                return None
            S = _switcher_with_tail(ws, [b, a, a2, w, x], avoid, name)
            if S is not None:
                return S
        return None
    if name == "bb_zero":
        for _ in range(6):
            u = _pick_bit(rng, H.nb(a2, b, w) & free & B)
            if u is None:
                return None
            try:
                return _seed_bridge(ws, [a, b, a2, w, u], avoid)
            except ConstructionFailed:
                continue
        return None
    if name == "ab_even":
        for _ in range(6):
            x = _pick_bit(rng, H.nb(a, a2, w) & H.nb(a2, b, w) & free & A)
            if x is None:
                return None
            y = _pick_bit(rng, H.nb(a2, w, x) & free & B)
            if y is None:
                continue
            try:
                return _seed_bridge(ws, [a, b, a2, w, x, y], avoid)
            except ConstructionFailed:
                continue
        return None
    raise ValueError(name)


def attach_switchers(ws: Workspace, M: Bridge, switchers, avoid: int = 0) -> Bridge:
    """Bridge of difference m* + sum of s* : rev(M) C S1 C S2 ... read backwards.

    Each AAA -> BAA connector adds nothing modulo 8. Switchers and M must
    already be claimed.
    """
    seq = list(M.path.sequence[::-1])
    for S in switchers:
        C = ws.connect(tuple(seq[-3:]), tuple(S.path.sequence[:3]), avoid=avoid)
        mid = list(C.sequence[3:-3])
        if residue_of(ws.part, mid):
            raise ConstructionFailed("AAA to BAA connector changed the difference", stage="good_set")
        ws.claim(mid)
        seq = seq + mid + list(S.path.sequence)
    seq = seq[::-1]
    P = TightPath(tuple(seq))
    v = verify_tight_path(ws.H, P)
    if not v:
        raise ConstructionFailed(f"extended bridge does not verify: {v.reason}", stage="good_set")
    d = residue_of(ws.part, seq)
    expect = (M.difference + sum(S.difference for S in switchers)) % 8
    if d != expect:
        raise ConstructionFailed(f"extended difference {d} != {expect}", stage="good_set")
    if len(seq) > MAX_LONG_BRIDGE:
        raise ConstructionFailed(f"extended bridge has {len(seq)} vertices", stage="good_set")
    return Bridge(P, tuple(seq[:3]), tuple(seq[-3:]), d, M.core)


# ---------------------------------------------------------------------
# good sets


@dataclass
class GoodSet:
    vertices: frozenset
    pairs: dict
    case: int
    switchers: list = field(default_factory=list)
    note: str = ""

    def pair_for(self, residue: int) -> tuple[Bridge, Bridge]:
        return self.pairs[residue % 8]

    def __len__(self):
        return len(self.vertices)


def check_good_set(ws: Workspace, G: GoodSet) -> None:
    part = ws.part
    problems = []
    if len(G.vertices) >= MAX_GOOD_SET:
        problems.append(f"|X| = {len(G.vertices)}")
    if any(ws.kinds[v] == 2 for v in G.vertices):
        problems.append("contains an anarchist")
    for a in range(8):
        if a not in G.pairs:
            problems.append(f"residue {a} missing")
            continue
        M1, M2 = G.pairs[a]
        if M1.vertices & M2.vertices:
            problems.append(f"residue {a}: bridges overlap")
        if not (M1.vertices | M2.vertices) <= G.vertices:
            problems.append(f"residue {a}: bridges leave X")
        d = (residue_of(part, M1.path) + residue_of(part, M2.path)) % 8
        if d != a:
            problems.append(f"residue {a}: recomputed {d}")
        for M in (M1, M2):
            seq = M.path.sequence
            if part.count_a(seq[:3]) != 3 or part.count_a(seq[-3:]) != 0 or not verify_tight_path(ws.H, seq):
                problems.append(f"residue {a}: bridge broken")
    if problems:
        raise ConstructionFailed("good set contract broken: " + "; ".join(problems), stage="good_set")
    carried = frozenset().union(*(S.vertices for S in G.switchers))
    for a in range(8):
        M1, M2 = G.pairs[a]
        ws.trace.add("pair", residue=a, sizes=f"{len(M1)},{len(M2)}",
                     switched=f"{int(bool(M1.vertices & carried))},{int(bool(M2.vertices & carried))}")


def _subset_sums(diffs: list[int]) -> dict:
    """residue -> list of switcher indices whose differences sum to it."""
    best = {0: []}
    for i, d in enumerate(diffs):
        for r, used in list(best.items()):
            t = (r + d) % 8
            if t not in best:
                best[t] = used + [i]
    return best


def _case1(ws: Workspace, M1: Bridge, M2: Bridge, kind: str, avoid: int, force_none=False) -> GoodSet | None:
    """Seeds on the all-typical side -> odd switchers -> every residue by subset sums."""
    switchers = []
    # one refill round per batch: consumed seeds are replaced by fresh ones
    for _round in range(3):
        if force_none:
            break
        K = bits_of(avoid | _mask(M1.path.sequence) | _mask(M2.path.sequence) | ws.used)
        seeds = find_disjoint_seeds(ws.H, ws.part, ws.params, K, SEED_TARGET, kind, ws=ws)
        ws.trace.add("seeds", kind=kind, count=len(seeds))
        if len(seeds) < 2:
            break
        built = len(switchers)
        for s1, s2 in zip(seeds[0::2], seeds[1::2]):
            # later seeds are not reserved; a pair is skipped once it was consumed
            if _mask(s1.quad + s2.quad) & ws.used:
                continue
            others = 0
            for s in seeds:
                if s not in (s1, s2) and not _mask(s.quad) & ws.used:
                    others |= _mask(s.quad)
            S = None
            # keep clear of the unused seeds first, then drop that restriction
            for extra in (others, 0):
                try:
                    S = build_switcher(ws.H, ws.part, ws.params, s1, s2, bits_of(avoid | extra), ws=ws)
                    break
                except (CaseExhausted, HypothesisViolated) as exc:
                    ws.trace.add("switcher_failed", reason=type(exc).__name__, reserved=int(extra != 0))
            if S is None:
                continue
            switchers.append(S)
            if len(_subset_sums([x.difference for x in switchers])) == 8:
                break
        if len(_subset_sums([x.difference for x in switchers])) == 8 or len(switchers) == built:
            break
    base = (M1.difference + M2.difference) % 8
    sums = _subset_sums([S.difference for S in switchers])
    if len(sums) < 8:
        ws.trace.add("case1_short", switchers=len(switchers), residues=len(sums))
        return None
    pairs = {}
    X = set(M1.vertices | M2.vertices)
    for S in switchers:
        X |= S.vertices
    snap = ws.used
    for a in range(8):
        chosen = [switchers[i] for i in sums[(a - base) % 8]]
        ws.used = snap
        try:
            M1a = attach_switchers(ws, M1, chosen, avoid) if chosen else M1
        except _RECOVERABLE as exc:
            ws.trace.add("attach_failed", residue=a, reason=type(exc).__name__)
            ws.used = snap
            return None
        pairs[a] = (M1a, M2)
        X |= M1a.vertices
        ws.trace.raw(f"residue {a} = {M1.difference}+{M2.difference}+" + "+".join(str(S.difference) for S in chosen)
                     + " (mod 8)" if chosen else f"residue {a} = {M1.difference}+{M2.difference} (mod 8)")
    ws.used = snap | _mask(X)
    return GoodSet(frozenset(X), pairs, 1, switchers)


class _AnchorScan:
    """Quadruple tables for one anchor vertex u.

    Roles: "p" vertices lie on the side opposite u and "q" vertices on u's
    side. one[i, j, k] says u ∈ N(p_i, p_j, q_k) with a typical triple,
    two[j, k, l] says u ∈ N(p_j, q_k, q_l) likewise.
    """

    def __init__(self, ws: Workspace, u: int, pool: int, exclusion: int):
        self.ws = ws
        self.u = u
        side_u = bool(ws.in_a[u])
        vs = [v for v in bits_of(pool & ~(1 << u))]
        self.P = np.array([v for v in vs if bool(ws.in_a[v]) != side_u], dtype=np.int64)
        self.Q = np.array([v for v in vs if bool(ws.in_a[v]) == side_u], dtype=np.int64)
        self.flip = side_u  # u on side A: cores are written with sides swapped
        P, Q = self.P, self.Q
        H = ws.H
        good = ws.good
        word, bit = u >> 6, np.uint64(u & 63)
        ex_q = mask_words(H.vertex_count, [v for v in bits_of(exclusion) if bool(ws.in_a[v]) == side_u])
        ex_p = mask_words(H.vertex_count, [v for v in bits_of(exclusion) if bool(ws.in_a[v]) != side_u])
        if len(P) < 4 or len(Q) < 4:
            self.one = np.zeros((len(P), len(P), len(Q)), dtype=bool)
            self.two = np.zeros((len(P), len(Q), len(Q)), dtype=bool)
            return
        w1 = H.words[np.ix_(P, P, Q)]
        w2 = H.words[np.ix_(P, Q, Q)]
        one = ((w1[..., word] >> bit) & np.uint64(1)).astype(bool) & good[np.ix_(P, P, Q)]
        one &= ~(w1 & ex_q).any(axis=-1)
        one &= ~np.eye(len(P), dtype=bool)[:, :, None]
        two = ((w2[..., word] >> bit) & np.uint64(1)).astype(bool) & good[np.ix_(P, Q, Q)]
        two &= ~(w2 & ex_p).any(axis=-1)
        two &= ~np.eye(len(Q), dtype=bool)[None, :, :]
        self.one, self.two = one, two

    def count(self) -> int:
        return int(np.einsum("ijk,jkl->", self.one.astype(np.int64), self.two.astype(np.int64)))

    def quads(self) -> np.ndarray:
        """adj[i, j, k, l]: (p_i, p_j, q_k, q_l) in T with u in both neighbourhoods."""
        return self.one[:, :, :, None] & self.two[None, :, :, :]

    def orient(self, core):
        core = [int(v) for v in core]
        return core[::-1] if self.flip else core


def dense_core(adj: np.ndarray) -> np.ndarray:
    """Subgraph of a bipartite graph with minimum degree >= |E| / |V|, by peeling."""
    adj = adj.copy()
    rows = adj.sum(axis=1)
    cols = adj.sum(axis=0)
    live = int((rows > 0).sum() + (cols > 0).sum())
    if live == 0:
        return adj
    need = adj.sum() / live
    while True:
        rows = adj.sum(axis=1)
        cols = adj.sum(axis=0)
        bad_r = (rows > 0) & (rows < need)
        bad_c = (cols > 0) & (cols < need)
        if not bad_r.any() and not bad_c.any():
            return adj
        adj[bad_r, :] = False
        adj[:, bad_c] = False


def _anchor_cores(scan: _AnchorScan, target: int, rng, limit: int = 60):
    """Yield 7-vertex cores around u whose bridges should have the target difference."""
    P, Q, u = scan.P, scan.Q, scan.u
    nP, nQ = len(P), len(Q)
    if nP < 4 or nQ < 4:
        return
    key = mirror_residue(target) if scan.flip else target
    quad = scan.quads()
    if key in (0, 3, 6):
        G = dense_core(quad.reshape(nP * nP, nQ * nQ))
        rows = np.flatnonzero(G.any(axis=1))
        made = 0
        for r in rng.permutation(rows):
            i1, i2 = divmod(int(r), nP)
            cols = np.flatnonzero(G[r])
            ks, ls = cols // nQ, cols % nQ
            for l3 in rng.permutation(np.unique(ls)):
                kk = ks[ls == l3]
                if len(kk) < 2:
                    continue
                k1, k2 = (int(x) for x in rng.choice(kk, 2, replace=False))
                col = k2 * nQ + int(l3)
                rr = np.flatnonzero(G[:, col])
                rr = [x for x in rng.permutation(rr) if not {x // nP, x % nP} & {i1, i2}]
                if not rr:
                    continue
                i3, i4 = divmod(int(rr[0]), nP)
                a1, a2, a3, a4 = (int(P[x]) for x in (i1, i2, i3, i4))
                b1, b2, b3 = int(Q[k1]), int(Q[k2]), int(Q[l3])
                core = {0: [a1, b1, a2, u, b3, b2, a4],
                        3: [b1, a1, a2, u, b2, b3, a4],
                        6: [a3, a4, b2, u, b3, a2, b1]}[key]
                yield scan.orient(core)
                made += 1
                if made >= limit:
                    return
                break
        return
    # difference 7: pairs (a_i, b_k) ~ (a_j, b_l)
    Hx = dense_core(quad.transpose(0, 2, 1, 3).reshape(nP * nQ, nP * nQ))
    rows = np.flatnonzero(Hx.any(axis=1))
    made = 0
    for r in rng.permutation(rows):
        i1, k1 = divmod(int(r), nQ)
        cols = np.flatnonzero(Hx[r])
        if len(cols) < 2:
            continue
        js = cols // nQ
        for c2 in rng.permutation(cols):
            i2, k2 = divmod(int(c2), nQ)
            others = cols[js != i2]
            if len(others) == 0:
                continue
            i3, _ = divmod(int(rng.choice(others)), nQ)
            back = np.flatnonzero(Hx[:, c2])
            back = [x for x in rng.permutation(back) if x % nQ not in (k1, k2)]
            if not back:
                continue
            _, k4 = divmod(int(back[0]), nQ)
            if len({i1, i2, i3}) < 3:
                continue
            a1, a2, a3 = int(P[i1]), int(P[i2]), int(P[i3])
            b1, b2, b4 = int(Q[k1]), int(Q[k2]), int(Q[k4])
            yield scan.orient([a3, a1, b1, u, a2, b2, b4])
            made += 1
            if made >= limit:
                return
            break


def anchor_bridge(ws: Workspace, scan: _AnchorScan, target: int, avoid: int, tries: int = 12) -> Bridge | None:
    """Bridge through the anchor with the target difference (claims it)."""
    count = 0
    for core in _anchor_cores(scan, target, ws.rng):
        if _mask(core) & (ws.used | avoid):
            continue
        if not verify_tight_path(ws.H, core):
            continue
        snap = ws.used
        try:
            B = bridge_from_core(ws, core, avoid)
        except _RECOVERABLE:
            ws.used = snap
            count += 1
            if count >= tries:
                return None
            continue
        if B.difference != target:
            ws.trace.add("anchor_mismatch", target=target, got=B.difference)
            ws.used = snap
            count += 1
            if count >= tries:
                return None
            continue
        return B
    return None


def _pick_anchors(ws: Workspace, pool: int, exclusion: int, candidates) -> list[tuple[int, int]]:
    scores = []
    for u in candidates:
        s = _AnchorScan(ws, u, pool, exclusion).count()
        if s > 0:
            scores.append((s, u))
    scores.sort(reverse=True)
    return [(u, s) for s, u in scores]


def _case3(ws: Workspace, avoid: int, exclusion: int) -> GoodSet:
    """Two anchors u, v with bridges of difference 0, 3, 6, 7 through each."""
    kinds = ws.kinds
    pool = ws.free_typical(avoid | exclusion)
    candidates = [int(v) for v in np.flatnonzero(kinds == 1) if not ((avoid | ws.used | exclusion) >> int(v)) & 1]
    if len(candidates) < 2:
        candidates = [v for v in range(ws.H.vertex_count)
                      if kinds[v] != 2 and not ((avoid | ws.used | exclusion) >> v) & 1]
    anchors = _pick_anchors(ws, pool, exclusion, candidates)
    ws.trace.add("anchors", found=len(anchors), top=",".join(f"{u}:{s}" for u, s in anchors[:3]))
    if len(anchors) < 2:
        raise ConstructionFailed("fewer than two anchor vertices", stage="good_set", case=3)
    u, v = anchors[0][0], anchors[1][0]
    snap = ws.used
    # full family: four bridges through u, then four through v avoiding them
    fam_u, fam_v = {}, {}
    scan_u = _AnchorScan(ws, u, pool & ~(1 << v), exclusion)
    for d in ANCHOR_DIFFERENCES:
        ws.used = snap
        B = anchor_bridge(ws, scan_u, d, avoid | (1 << v))
        if B is not None:
            fam_u[d] = B
    union_u = 0
    for B in fam_u.values():
        union_u |= _mask(B.path.sequence)
    ws.used = snap | union_u
    if len(fam_u) == 4:
        scan_v = _AnchorScan(ws, v, pool & ~union_u, exclusion)
        for d in ANCHOR_DIFFERENCES:
            ws.used = snap | union_u
            B = anchor_bridge(ws, scan_v, d, avoid | union_u)
            if B is not None:
                fam_v[d] = B
    pairs = {}
    if len(fam_u) == 4 and len(fam_v) == 4:
        for a, (i, j) in RESIDUE_TABLE.items():
            pairs[a] = (fam_u[i], fam_v[j])
            ws.trace.raw(f"residue {a} = {i}+{j} (mod 8) table hit")
        mode = "families"
    else:
        # desk scale: one disjoint pair per residue
        mode = "pairs"
        for a, (i, j) in RESIDUE_TABLE.items():
            found = None
            for (x, dx), (y, dy) in (((u, i), (v, j)), ((u, j), (v, i)), ((v, i), (u, j)), ((v, j), (u, i))):
                ws.used = snap
                sx = _AnchorScan(ws, x, pool & ~(1 << y), exclusion)
                Bx = anchor_bridge(ws, sx, dx, avoid | (1 << y))
                if Bx is None:
                    continue
                mx = _mask(Bx.path.sequence)
                sy = _AnchorScan(ws, y, pool & ~mx, exclusion)
                By = anchor_bridge(ws, sy, dy, avoid | mx)
                if By is None:
                    continue
                found = (Bx, By)
                break
            if found is None:
                ws.used = snap
                raise ConstructionFailed(f"no disjoint bridge pair for residue {a}", stage="good_set", case=3,
                                         residue=a)
            pairs[a] = found
            ws.trace.raw(f"residue {a} = {found[0].difference}+{found[1].difference} (mod 8) table hit")
    X = set()
    for M1, M2 in pairs.values():
        X |= M1.vertices | M2.vertices
    ws.used = snap | _mask(X)
    return GoodSet(frozenset(X), pairs, 3, [], note=f"anchors {u},{v} mode {mode}")


def find_good_set(H: Hypergraph4, part: Partition, params: SolverParams, rng=None, force_case3: bool = False,
                  ws: Workspace | None = None) -> GoodSet:
    """Good set: every residue of m1* + m2* realised by disjoint bridges inside X."""
    ws = ws or Workspace(H, part, params, rng)
    kinds = ws.kinds
    anarchists = [int(v) for v in np.flatnonzero(kinds == 2)]
    avoid = _mask(anarchists)
    snap = ws.used
    try:
        M1, M2 = build_disjoint_bridges(H, part, params, ws=ws, K=anarchists)
    except ConstructionFailed as exc:
        exc.details["case"] = 0
        raise staged("good_set", exc)
    ws.trace.add("base_bridges", m1=len(M1), m2=len(M2), d1=M1.difference, d2=M2.difference)
    typical = kinds == 0
    in_a = ws.in_a
    if force_case3:
        case = 3
    elif anarchists:
        case = 2
    elif typical[~in_a].all() or typical[in_a].all():
        case = 1
    else:
        case = 3
    ws.trace.raw(f"case {case}")
    G = None
    if case == 1:
        kind = "A" if typical[~in_a].all() else "B"
        G = _case1(ws, M1, M2, kind, avoid)
    elif case == 2:
        # one side is entirely typical at three times the scale
        t3 = ws.view.vertex_typical(3 * params.eps5)
        sides = [k for k, ok in (("A", t3[~in_a].all()), ("B", t3[in_a].all())) if ok]
        for kind in sides:
            G = _case1(ws, M1, M2, kind, avoid)
            if G is not None:
                break
    if G is None:
        if case != 3:
            ws.trace.raw("case 3")
            ws.trace.add("fallback", from_case=case)
        ws.used = snap
        exclusion = 0
        if not force_case3:
            for kind in ("A", "B"):
                for s in find_disjoint_seeds(H, part, params, anarchists, 28, kind, ws=ws):
                    exclusion |= _mask(s.quad)
        G = _case3(ws, avoid, exclusion)
        G.case = 3
    check_good_set(ws, G)
    ws.trace.add("good_set", case=G.case, size=len(G), note=G.note.replace(" ", "_") or "-")
    return G


# ---------------------------------------------------------------------
# completion


def cycle_shape(n1: int, n2: int) -> tuple[int, int]:
    """(m, k): P_top takes 3m - 3 new A- and m B-vertices, P_zig the other k A-vertices."""
    num = 3 * n1 - n2 + 6
    if num % 8:
        raise NotIntegral(f"(3 n1 - n2 + 6) / 8 = {num}/8 is not an integer", n1=n1, n2=n2)
    m = num // 8
    return m, n1 - 3 * m + 3


def complete_cycle(H: Hypergraph4, part: Partition, params: SolverParams, Q, M2: Bridge, rng=None,
                   trace: Trace | None = None) -> TightCycle:
    """Close Q and M2 into a tight Hamiltonian cycle through all remaining vertices."""
    Qs = tuple(Q.path.sequence if hasattr(Q, "path") else Q)
    Ms = tuple(M2.path.sequence if hasattr(M2, "path") else M2)
    if set(Qs) & set(Ms):
        raise HypothesisViolated("Q and M2 must be disjoint")
    rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
    trace = trace or Trace()
    inside = set(Qs) | set(Ms)
    free = [v for v in range(H.vertex_count) if v not in inside]
    n1 = sum(1 for v in free if part.in_a(v))
    n2 = len(free) - n1
    m, k = cycle_shape(n1, n2)
    trace.add("cycle_shape", n1=n1, n2=n2, m=m, k=k)
    if m < 1 or k < 0 or m > n2:
        raise EnvelopeViolated(f"side counts n1={n1}, n2={n2} give m={m}, k={k}", n1=n1, n2=n2)
    last = None
    for attempt in range(params.attempts):
        try:
            seq = _complete_cycle_once(H, part, params, Qs, Ms, n1, n2, m, k, rng, trace)
        except (MatchingFailed, SearchExhausted, HypothesisViolated) as exc:
            last = exc
            trace.add("cycle_retry", attempt=attempt, reason=type(exc).__name__)
            continue
        C = TightCycle(tuple(seq))
        v = is_hamiltonian_certificate(H, C)
        if not v:
            raise ConstructionFailed(f"assembled cycle fails verification: {v.reason}", stage="complete")
        return C
    raise last


def _complete_cycle_once(H, part, params, Qs, Ms, n1, n2, m, k, rng, trace):
    ws = Workspace(H, part, params, rng, trace)
    in_a = ws.in_a
    inside = set(Qs) | set(Ms)
    free = [v for v in range(H.vertex_count) if v not in inside]
    A1 = [v for v in free if in_a[v]]
    B1 = [v for v in free if not in_a[v]]
    end_b = (Ms[-3], Ms[-2], Ms[-1])
    PB = list(sequence_through(H, part, params, tuple(Qs[-3:]), end_b, B1, rng, ws, enforce_size=False).vertices)
    # A-vertices with few zig slots available go on top
    slots_b = list(range(2, len(PB) - 3, 3))
    masks = _slot_masks(H, slot_windows(PB, slots_b), _mask(A1))
    deg = {a: sum(1 for x in masks if (x >> a) & 1) for a in A1}
    small = [a for a in A1 if deg[a] < params.big_fraction * max(len(slots_b), 1)]
    n_top = 3 * m - 3
    if len(small) > n_top:
        raise MatchingFailed(f"{len(small)} low-degree A-vertices exceed {n_top} top places", side="A")
    rest = [a for a in A1 if a not in small]
    rest = [rest[i] for i in rng.permutation(len(rest))]
    A_S = small + rest[:n_top - len(small)]
    top_a = list(sequence_through(H, part, params, (Qs[2], Qs[1], Qs[0]), (Ms[2], Ms[1], Ms[0]), A_S, rng, ws,
                                  enforce_size=False).vertices)
    interior = PB[3:-3]
    p2 = min(max(math.ceil(params.tail_fraction * n1), m + 3), len(interior))
    tail = interior[len(interior) - p2:]
    slots_t = [3 * j - 1 for j in range(1, m + 1)]
    bbar = _match_slots(_slot_masks(H, slot_windows(top_a, slots_t), _mask(tail)), tail, rng)
    if bbar is None:
        raise MatchingFailed("no perfect matching for the top slots", side="B")
    top = _interleave(top_a, slots_t, bbar)
    prefix = PB[:3 + len(interior) - p2]
    left = [b for b in tail if b not in set(bbar)]
    seqB = sequence_through(H, part, params, tuple(prefix[-3:]), end_b, left, rng, ws, enforce_size=False).vertices
    zig_b = prefix[:-3] + list(seqB)
    if len(zig_b) != 3 * k + 3:
        raise ConstructionFailed(f"zig base has {len(zig_b)} != 3k + 3 = {3 * k + 3} vertices", stage="complete")
    Abar = [a for a in A1 if a not in set(A_S)]
    slots_z = [3 * i - 1 for i in range(1, k + 1)]
    abar = _match_slots(_slot_masks(H, slot_windows(zig_b, slots_z), _mask(Abar)), Abar, rng)
    if abar is None:
        raise MatchingFailed("no perfect matching for the zig slots", side="A")
    zig = _interleave(zig_b, slots_z, abar)
    # side counts of the two closing paths
    top_counts = (part.count_a(top), len(top) - part.count_a(top))
    zig_counts = (part.count_a(zig), len(zig) - part.count_a(zig))
    if top_counts != (3 * (m + 1), m) or zig_counts != (k, 3 * (k + 1)) or zig_counts[1] != 6 + n2 - m:
        raise ConstructionFailed(f"side counts top={top_counts} zig={zig_counts} for m={m}, k={k}",
                                 stage="complete")
    trace.add("matchings", top=m, zig=k)
    return list(Qs) + zig[3:] + list(Ms[::-1])[3:] + top[::-1][3:-3]


# ---------------------------------------------------------------------
# orchestration


def cycle_threshold(N: int) -> int:
    return (N - 1) // 2


def required_residue(part: Partition, vertices=None) -> int:
    """a with (3 n1' - n2' + 6) ≡ 0 once bridges of total difference a are removed."""
    na = len(part.side_a)
    nb = len(part.side_b)
    return (3 * na - nb + 6) % 8


def solve_ham_cycle(H: Hypergraph4, params: SolverParams | None = None, trace: Trace | None = None,
                    partition: Partition | None = None, force_case3: bool = False) -> TightCycle:
    """Tight Hamiltonian cycle of a near-extremal 4-graph, or a staged failure."""
    params = params or SolverParams()
    trace = trace if trace is not None else Trace()
    N = H.vertex_count
    delta = min_codegree(H)
    if delta < cycle_threshold(N):
        raise ThresholdNotMet(f"minimum codegree {delta} < {cycle_threshold(N)}", stage="threshold",
                              min_codegree=delta, threshold=cycle_threshold(N))
    if N < params.min_solver_n:
        raise ConstructionFailed(f"N = {N} below min_solver_n = {params.min_solver_n}", stage="setup")
    trace.add("threshold", N=N, delta3=delta)
    part = partition if partition is not None else _partition(H, params, trace)
    last = None
    for attempt in range(params.attempts):
        rng = np.random.default_rng([params.rng_seed, attempt])
        try:
            return _solve_cycle_once(H, part, params, rng, trace, force_case3)
        except (ConstructionFailed, MatchingFailed, SearchExhausted, BudgetExhausted, EnvelopeViolated,
                CaseExhausted, NotIntegral) as exc:
            last = exc
            trace.add("retry", attempt=attempt, stage=getattr(exc, "stage", "?"), reason=type(exc).__name__)
    raise last


def _solve_cycle_once(H, part, params, rng, trace, force_case3) -> TightCycle:
    ws0 = Workspace(H, part, params, rng, trace)
    kinds = ws0.kinds
    trace.add("classify", typical=int((kinds == 0).sum()), medium=int((kinds == 1).sum()),
              anarchist=int((kinds == 2).sum()))
    try:
        G = find_good_set(H, part, params, force_case3=force_case3, ws=ws0)
    except H4Error as exc:
        raise staged("good_set", exc)
    try:
        new = transfer_anarchists(H, part, params, protected=G.vertices, view=ws0.view)
    except H4Error as exc:
        raise staged("transfer", exc)
    trace.add("transfer", moved=len(set(part.side_a) ^ set(new.side_a)))
    a = required_residue(new)
    M1, M2 = G.pair_for(a)
    d1, d2 = residue_of(new, M1.path), residue_of(new, M2.path)
    trace.raw(f"residue {a} = {d1}+{d2} (mod 8)")
    used = M1.vertices | M2.vertices
    n1 = sum(1 for v in new.side_a if v not in used)
    n2 = sum(1 for v in new.side_b if v not in used)
    value = 3 * n1 - n2 + 6
    if value % 8:
        raise NotIntegral(f"3n1'-n2'+6 = {value} after bridge choice", stage="parity")
    trace.raw(f"integrality 3n1'-n2'+6 = {value} = 0 (mod 8)")
    ws = Workspace(H, new, params, rng, trace)
    ws.claim(M2.path.sequence)
    try:
        Q = absorb_medium(H, new, params, M1, ws=ws, K=M2.path.sequence)
    except H4Error as exc:
        raise staged("absorb", exc)
    if residue_of(new, Q.path) != d1:
        raise ConstructionFailed("Q - M1 changed the difference", stage="absorb")
    try:
        C = complete_cycle(H, new, params, Q, M2, rng, trace)
    except H4Error as exc:
        raise staged("complete", exc)
    v = is_hamiltonian_certificate(H, C)
    if not v:
        raise ConstructionFailed(f"certificate rejected: {v.reason}", stage="verify")
    trace.add("done", size=len(C))
    return C
