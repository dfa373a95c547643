"""Extremal constructions, benchmark families and b(H).

H0(A, B) has as edges exactly the quadruples meeting A in one or three
vertices. Benchmarks perturb it with planted medium and anarchist
vertices while keeping the minimum codegree at the Hamiltonicity
threshold.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from itertools import combinations, islice

import numpy as np

from .core import Hypergraph4, Partition, _bit_rows, bits_of, mask_words, min_codegree
from .errors import ThresholdUnreachable, TooFewVertices


@dataclass(frozen=True)
class BApproximation:
    value: int
    partition: Partition
    exact: bool


# ---------------------------------------------------------------------
# constructions


def _typed_words(in_a: np.ndarray, neutral: bool) -> np.ndarray:
    """Words of H0 for the side vector `in_a`, built per triple type."""
    n = len(in_a)
    wa = mask_words(n, np.flatnonzero(in_a))
    wb = mask_words(n, np.flatnonzero(~in_a))
    # indexed by the number of A-vertices in the triple
    table = np.stack([wa | wb if neutral else wa, wb, wa, wa | wb if neutral else wb])
    cnt = in_a.astype(np.int8)
    count = cnt[:, None, None] + cnt[None, :, None] + cnt[None, None, :]
    words = table[count]
    rows = ~_bit_rows(n)
    words &= rows[:, None, None, :]
    words &= rows[None, :, None, :]
    words &= rows[None, None, :, :]
    r = np.arange(n)
    rep = ((r[:, None, None] == r[None, :, None]) | (r[None, :, None] == r[None, None, :])
           | (r[:, None, None] == r[None, None, :]))
    words[rep] = 0
    return words


def h0_on(in_a, neutral: bool = False) -> Hypergraph4:
    """H0 for an arbitrary side assignment (True = side A)."""
    in_a = np.asarray(in_a, dtype=bool)
    return Hypergraph4(len(in_a), _typed_words(in_a, neutral))


def build_h0(a_size: int, b_size: int, include_neutral: bool = False) -> Hypergraph4:
    """H0 with A = 0..a_size-1 and B = the remaining b_size vertices."""
    if a_size < 0 or b_size < 0 or a_size + b_size < 4:
        raise TooFewVertices(f"H0 needs at least 4 vertices, got {a_size}+{b_size}")
    in_a = np.zeros(a_size + b_size, dtype=bool)
    in_a[:a_size] = True
    return h0_on(in_a, include_neutral)


def build_h0_prime(a_size: int, b_size: int) -> Hypergraph4:
    """H0 plus a universal vertex (the last one) joined to every triple."""
    if a_size < 0 or b_size < 0 or a_size + b_size < 4:
        raise TooFewVertices(f"H0' needs at least 4 base vertices, got {a_size}+{b_size}")
    m = a_size + b_size
    in_a = np.zeros(m + 1, dtype=bool)
    in_a[:a_size] = True
    # the extra vertex sits on side A but takes no H0 edges of its own
    words = _typed_words(in_a, False)
    vbit = mask_words(m + 1, [m])
    words &= ~vbit
    words[m] = 0
    words[:, m] = 0
    words[:, :, m] = 0
    H = Hypergraph4(m + 1, words)
    triples = np.array(list(combinations(range(m), 3)), dtype=np.int64)
    cone = np.concatenate([triples, np.full((len(triples), 1), m)], axis=1)
    return H.modified(add=cone)


def complete_graph(n: int) -> Hypergraph4:
    in_a = np.ones(n, dtype=bool)
    return h0_on(in_a, True) if n else Hypergraph4(0, np.zeros((0, 0, 0, 1), dtype=np.uint64))


def planted_partition(a_size: int, b_size: int) -> Partition:
    return Partition.from_side_a(a_size + b_size, range(a_size))


# ---------------------------------------------------------------------
# AABB counting and swap gains


def count_aabb(H: Hypergraph4, part: Partition) -> int:
    """Edges meeting A in exactly two vertices, by edge scan."""
    e = H.edge_array()
    if len(e) == 0:
        return 0
    in_a = part.a_array()
    return int((in_a[e].sum(axis=1) == 2).sum())


@dataclass
class LinkTables:
    """Side-split codegrees and the derived link counts for one partition."""

    in_a: np.ndarray
    da: np.ndarray  # |N(T) ∩ A| per ordered triple
    db: np.ndarray
    l_aab: np.ndarray
    l_abb: np.ndarray
    l_aaa: np.ndarray
    l_bbb: np.ndarray
    p_aa: np.ndarray  # pair links, per ordered pair
    p_ab: np.ndarray
    p_bb: np.ndarray

    @property
    def gain(self) -> np.ndarray:
        return self.l_aab - self.l_abb


def link_tables(H: Hypergraph4, part: Partition) -> LinkTables:
    in_a = part.a_array()
    sa = in_a.astype(np.int64)
    sb = (~in_a).astype(np.int64)
    da = H.split_degrees(part.words_a()).astype(np.int64)
    db = H.split_degrees(part.words_b()).astype(np.int64)
    # ordered (u, w) sums count each unordered link triple twice; AAA/BBB
    # triples are counted six times over ordered (u, w, x)
    l_aab = np.einsum("vuw,u,w->v", db, sa, sa) // 2
    l_abb = np.einsum("vuw,u,w->v", da, sb, sb) // 2
    l_aaa = np.einsum("vuw,u,w->v", da, sa, sa) // 6
    l_bbb = np.einsum("vuw,u,w->v", db, sb, sb) // 6
    p_aa = np.einsum("xyu,u->xy", da, sa) // 2
    p_bb = np.einsum("xyu,u->xy", db, sb) // 2
    p_ab = np.einsum("xyu,u->xy", db, sa)
    return LinkTables(in_a, da, db, l_aab, l_abb, l_aaa, l_bbb, p_aa, p_ab, p_bb)


def swap_correction(H: Hypergraph4, part: Partition, a: int, b: int) -> int:
    """Exact correction c(a, b) from edges containing both a and b, by scan.

    Such an edge keeps its pattern under the swap, but the vertex gains
    count it once: +1 or -2 for two or one A-vertices among the other two.
    """
    c = 0
    for u in range(H.vertex_count):
        if u in (a, b):
            continue
        mask = H.nb(a, b, u)
        for w in range(u + 1, H.vertex_count):
            if (mask >> w) & 1:
                c += 2 if part.in_a(u) + part.in_a(w) == 1 else -1
    return c


def swap_delta(H: Hypergraph4, part: Partition, a: int, b: int, tables: LinkTables | None = None) -> int:
    """Predicted change of |AABB| when a ∈ A and b ∈ B trade sides."""
    t = tables if tables is not None else link_tables(H, part)
    return int(t.gain[a] - t.gain[b] + swap_correction(H, part, a, b))


def _gain_matrix(t: LinkTables) -> np.ndarray:
    """Delta for every (a, b); rows and columns not in (A, B) are junk."""
    corr = 2 * t.p_ab - t.p_aa - t.p_bb
    return t.gain[:, None] - t.gain[None, :] + corr


def _local_descent(H: Hypergraph4, part: Partition, max_steps: int) -> Partition:
    for _ in range(max_steps):
        t = link_tables(H, part)
        delta = _gain_matrix(t)
        in_a = t.in_a
        delta = np.where(in_a[:, None] & ~in_a[None, :], delta, np.iinfo(np.int64).max)
        a, b = np.unravel_index(int(np.argmin(delta)), delta.shape)
        if delta[a, b] >= 0:
            break
        part = part.moved([int(a), int(b)])
    return part


def _exhaustive_min(H: Hypergraph4) -> BApproximation:
    """Scan every side A of size ceil(N/2) via membership-times-incidence."""
    n = H.vertex_count
    size_a = (n + 1) // 2
    e = H.edge_array()
    incidence = np.zeros((n, max(len(e), 1)), dtype=np.float32)
    if len(e):
        incidence[e, np.arange(len(e))[:, None]] = 1
    best = None
    it = combinations(range(n), size_a)
    while True:
        block = np.array(list(islice(it, 4096)), dtype=np.int64)
        if len(block) == 0:
            break
        member = np.zeros((len(block), n), dtype=np.float32)
        np.put_along_axis(member, block, 1, axis=1)
        hits = member @ incidence
        counts = (hits == 2).sum(axis=1) if len(e) else np.zeros(len(block), dtype=np.int64)
        i = int(np.argmin(counts))
        if best is None or counts[i] < best[0]:
            best = (int(counts[i]), block[i].tolist())
    return BApproximation(best[0], Partition.from_side_a(n, best[1]), True)


def _seeded_starts(H: Hypergraph4, rng, count: int) -> list[Partition]:
    """Starts taken from triple neighbourhoods, which are whole sides in H0."""
    n = H.vertex_count
    size_a = (n + 1) // 2
    out = []
    for _ in range(count):
        T = rng.choice(n, 3, replace=False)
        inside = np.zeros(n, dtype=bool)
        inside[bits_of(H.nb(*(int(v) for v in T)))] = True
        order = np.lexsort((rng.random(n), ~inside))
        out.append(Partition.from_side_a(n, order[:size_a].tolist()))
    return out


def compute_b(H: Hypergraph4, exact_threshold: int = 20, restarts: int | None = None,
              rng: np.random.Generator | None = None, start: Partition | None = None) -> BApproximation:
    """b(H) exactly for small N, otherwise by steepest-descent swaps."""
    n = H.vertex_count
    if n < 4:
        raise TooFewVertices(f"compute_b needs N >= 4, got {n}")
    if n <= exact_threshold:
        return _exhaustive_min(H)
    rng = rng if rng is not None else np.random.default_rng(0)
    if restarts is None:
        restarts = 48 if n <= 16 else 12 if n <= 40 else 0
    size_a = (n + 1) // 2
    best = None
    starts = [start] if start is not None else []
    starts += _seeded_starts(H, rng, 4)
    starts += [None] * restarts
    for s in starts:
        if s is None:
            s = Partition.from_side_a(n, rng.permutation(n)[:size_a].tolist())
        p = _local_descent(H, s, max_steps=4 * n)
        val = count_aabb(H, p)
        if best is None or val < best.value:
            best = BApproximation(val, p, False)
    return best


# ---------------------------------------------------------------------
# benchmarks


@dataclass(frozen=True)
class InstanceRecipe:
    """Benchmark recipe; serialised as `# key=value` lines.

    `pair_cover` adds AABB quadruples through a perfect matching on each
    side, which lifts the codegree without creating medium vertices.
    `demand_threshold` makes generation fail unless the minimum codegree
    reaches floor((N-1)/2).
    """

    half_size: int
    include_neutral: bool = False
    medium_seeds: int = 1
    anarchists: int = 0
    deletion_rate: float = 0.0
    rng_seed: int = 0
    pair_cover: bool = False
    odd: bool = False
    demand_threshold: bool = False
    shuffle: bool = True

    @property
    def vertex_count(self) -> int:
        return 2 * self.half_size + (1 if self.odd else 0)

    @property
    def anarchist_budget(self) -> int:
        return max(1, self.half_size // 20)

    def validate(self) -> None:
        n = self.half_size
        if n < 2:
            raise ValueError(f"half_size must be at least 2, got {n}")
        if not 0 <= self.medium_seeds <= n - 1:
            raise ValueError("medium_seeds out of range")
        if not 0 <= self.anarchists <= self.anarchist_budget:
            raise ValueError(f"anarchists must be at most {self.anarchist_budget}")
        if not 0 <= self.deletion_rate < 1:
            raise ValueError("deletion_rate must lie in [0, 1)")
        if self.anarchists + self.medium_seeds > n - 2:
            raise ValueError("too many planted vertices for the side size")

    def to_comments(self) -> dict:
        out = {"recipe": "benchmark"}
        for k, v in asdict(self).items():
            out[k] = int(v) if isinstance(v, bool) else v
        return out

    @classmethod
    def from_comments(cls, d: dict) -> "InstanceRecipe":
        kw = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            raw = d[f.name]
            if f.type in ("bool", bool):
                kw[f.name] = bool(int(raw))
            elif f.type in ("float", float):
                kw[f.name] = float(raw)
            else:
                kw[f.name] = int(raw)
        return cls(**kw)


@dataclass
class Benchmark:
    graph: Hypergraph4
    partition: Partition
    classes: dict
    min_codegree: int
    aabb: int
    recipe: InstanceRecipe
    deleted: int = 0

    def __iter__(self):
        return iter((self.graph, self.partition, self.classes))

    def report(self) -> str:
        cnt = {c: sum(1 for v in self.classes.values() if v == c) for c in ("typical", "medium", "anarchist")}
        return (f"N={self.graph.vertex_count} M={self.graph.edge_count} delta3={self.min_codegree} "
                f"aabb={self.aabb} deleted={self.deleted} typical={cnt['typical']} "
                f"medium={cnt['medium']} anarchist={cnt['anarchist']}")


def _quads_meeting(in_a_virtual: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Virtual-AABB quadruples containing at least one seed vertex."""
    A = np.flatnonzero(in_a_virtual)
    B = np.flatnonzero(~in_a_virtual)
    aa = np.array(list(combinations(A.tolist(), 2)), dtype=np.int64).reshape(-1, 2)
    bb = np.array(list(combinations(B.tolist(), 2)), dtype=np.int64).reshape(-1, 2)
    s = np.zeros(len(in_a_virtual), dtype=bool)
    s[seeds] = True
    hit_aa = s[aa].any(axis=1)
    hit_bb = s[bb].any(axis=1)
    out = []
    # pairs hitting a seed on the A side with any BB pair, then the rest
    for sel_aa, sel_bb in ((hit_aa, np.ones(len(bb), bool)), (~hit_aa, hit_bb)):
        x, y = aa[sel_aa], bb[sel_bb]
        if len(x) and len(y):
            out.append(np.concatenate([np.repeat(x, len(y), axis=0), np.tile(y, (len(x), 1))], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 4), dtype=np.int64)


def _pair_cover_quads(in_a_virtual: np.ndarray, rng) -> np.ndarray:
    """AABB quadruples {a, a', b, mu(b)} and {a, nu(a), b, b'}."""
    out = []
    for side, other in ((~in_a_virtual, in_a_virtual), (in_a_virtual, ~in_a_virtual)):
        S = rng.permutation(np.flatnonzero(side))
        O = np.flatnonzero(other)
        if len(S) < 2 or len(O) < 2:
            continue
        partner = {}
        for i in range(0, len(S) - 1, 2):
            partner[int(S[i])] = int(S[i + 1])
        if len(S) % 2:
            partner[int(S[-1])] = int(S[0])
        oo = np.array(list(combinations(O.tolist(), 2)), dtype=np.int64)
        for x, y in partner.items():
            out.append(np.concatenate([oo, np.tile([x, y], (len(oo), 1))], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 4), dtype=np.int64)


def _delete_typical(H: Hypergraph4, part: Partition, rate: float, floor: int, rng) -> tuple[np.ndarray, int]:
    """Random deletions of typical edges keeping every codegree >= floor.

    Codegrees only go down, so a single pass over a random order rejects
    exactly the edges that could never be removed later either.
    """
    e = H.edge_array()
    in_a = part.a_array()
    k = in_a[e].sum(axis=1)
    typical = e[(k == 1) | (k == 3)]
    target = int(round(rate * len(typical)))
    if target == 0:
        return np.zeros((0, 4), dtype=np.int64), 0
    deg = H.degrees.astype(np.int32).copy()
    removed = []
    order = rng.permutation(len(typical))
    # edges blocked at the start stay blocked, so drop them up front without changing the outcome
    t = typical.T
    free = np.ones(len(typical), dtype=bool)
    for x, y, z in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        free &= deg[t[x], t[y], t[z]] > floor
    for i in order[free[order]]:
        a, b, c, d = (int(x) for x in typical[i])
        subs = ((a, b, c), (a, b, d), (a, c, d), (b, c, d))
        if any(deg[t] <= floor for t in subs):
            continue
        for t in subs:
            deg[t] -= 1
        removed.append((a, b, c, d))
        if len(removed) == target:
            break
    if len(removed) < target:
        raise ThresholdUnreachable(
            f"only {len(removed)} of {target} deletions keep the codegree at {floor}",
            achieved=len(removed), target=target)
    return np.array(removed, dtype=np.int64), len(removed)


def default_recipes(n: int, reps: int = 20, seed: int = 0, deletion_rate: float = 0.01) -> list[InstanceRecipe]:
    """The standard family: s cycles through 1..max(1, n/20), t through 0..min(2, n/20 - 1).

    Even repetitions are deletion-free; odd ones delete typical edges at
    `deletion_rate` while keeping the codegree at floor((N-1)/2).
    """
    s_max = max(1, n // 20)
    t_max = max(0, min(2, n // 20 - 1))
    out = []
    for i in range(reps):
        out.append(InstanceRecipe(n, medium_seeds=1 + i % s_max, anarchists=i % (t_max + 1),
                                  deletion_rate=deletion_rate if i % 2 else 0.0, rng_seed=seed + i))
    return out


def build_benchmark(recipe: InstanceRecipe) -> Benchmark:
    """Near-H0 instance with planted medium and anarchist vertices."""
    recipe.validate()
    rng = np.random.default_rng(recipe.rng_seed)
    n = recipe.half_size
    N = recipe.vertex_count
    a_size = N - n
    labels = rng.permutation(N) if recipe.shuffle else np.arange(N)
    real_a = np.zeros(N, dtype=bool)
    real_a[labels[:a_size]] = True
    A = labels[:a_size]
    B = labels[a_size:]
    t, s = recipe.anarchists, recipe.medium_seeds
    anarch = A[:t]
    seeds_a = A[t:t + s]
    seeds_b = B[:s]
    virt_a = real_a.copy()
    virt_a[anarch] = False
    H = h0_on(virt_a, recipe.include_neutral)
    add = [_quads_meeting(virt_a, np.concatenate([seeds_a, seeds_b]))] if s else []
    if recipe.pair_cover:
        add.append(_pair_cover_quads(virt_a, rng))
    if t >= 2 and not recipe.include_neutral:
        # BBB triples of the virtual B side only see the n - t virtual A
        # vertices; t - 1 pad vertices restore the bound with neutral edges
        # vertex completes a real AABB edge on triples holding two
        # anarchists, so those triples draw random pads to spread the load
        pads = B[s:s + t - 1]
        vb = np.flatnonzero(~virt_a)
        triples = np.array(list(combinations(vb.tolist(), 3)), dtype=np.int64)
        is_anarch = np.zeros(N, dtype=bool)
        is_anarch[anarch] = True
        crowded = is_anarch[triples].sum(axis=1) >= 2
        for p in pads:
            tri = triples[~crowded & (triples != p).all(axis=1)]
            add.append(np.concatenate([tri, np.full((len(tri), 1), p)], axis=1))
        pool = B[s:]
        for tri in triples[crowded]:
            free = pool[~np.isin(pool, tri)]
            for p in rng.choice(free, size=t - 1, replace=False):
                add.append(np.array([[*tri, p]], dtype=np.int64))
    if add:
        H = H.modified(add=np.concatenate(add))
    part = Partition.from_side_a(N, A.tolist())
    floor = (N - 1) // 2
    deleted = 0
    if recipe.deletion_rate > 0:
        rem, deleted = _delete_typical(H, part, recipe.deletion_rate, floor, rng)
        H = H.modified(remove=rem)
    delta = min_codegree(H)
    if recipe.demand_threshold and delta < floor:
        raise ThresholdUnreachable(f"minimum codegree {delta} < {floor}", min_codegree=delta)
    classes = {int(v): "typical" for v in range(N)}
    for v in np.concatenate([seeds_a, seeds_b]):
        classes[int(v)] = "medium"
    for v in anarch:
        classes[int(v)] = "anarchist"
    return Benchmark(H, part, classes, delta, count_aabb(H, part), recipe, deleted)
