"""Tight Hamiltonian paths in near-extremal 4-graphs.

Pipeline: bridge, absorption of medium vertices, transfer of anarchists,
then completion through two sequencings glued by bipartite matchings.
Every intermediate path is verified when it is built.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .connector import ConnectorRequest, connect_triples
from .core import (Hypergraph4, Partition, SolverParams, TightPath, bits_of, is_hamiltonian_certificate, mask_words,
                   min_codegree, verify_tight_path)
from .errors import (BudgetExceeded, BudgetExhausted, ConstructionFailed, DensityTooLow, EnvelopeViolated,
                     H4Error, HypothesisViolated, MatchingFailed, ReclassificationFailed, SearchExhausted,
                     ThresholdNotMet, TooManyMediums)
from .extremal import compute_b, count_aabb
from .tight3 import exact_walk, max_matching, tight_walk
from .typicality import Typicality

MAX_BRIDGE = 25
ABSORBER_SIZE = 7


# ---------------------------------------------------------------------
# records


@dataclass(frozen=True)
class Bridge:
    path: TightPath
    end_aaa: tuple
    end_bbb: tuple
    difference: int
    core: tuple = ()

    @property
    def vertices(self) -> frozenset:
        return frozenset(self.path.sequence)

    def __len__(self):
        return len(self.path)


@dataclass
class AbsorberPath:
    path: TightPath
    bridge: Bridge
    absorbed: list
    pieces: list = field(default_factory=list)

    @property
    def vertices(self) -> frozenset:
        return frozenset(self.path.sequence)


@dataclass(frozen=True)
class Sequencing:
    vertices: tuple
    start: tuple
    end: tuple | None
    interior: frozenset


class Trace:
    """Stage log; one line per event."""

    def __init__(self, echo=None):
        self.lines: list[str] = []
        self.echo = echo
        self._t0 = time.perf_counter()

    def add(self, stage: str, /, **info):
        parts = [stage] + [f"{k}={v}" for k, v in info.items()]
        parts.append(f"t={time.perf_counter() - self._t0:.3f}")
        line = " ".join(parts)
        self.lines.append(line)
        if self.echo:
            self.echo(line)

    def raw(self, line: str):
        self.lines.append(line)
        if self.echo:
            self.echo(line)

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")

    def grep(self, prefix: str) -> list[str]:
        return [ln for ln in self.lines if ln.startswith(prefix)]


def residue_of(part: Partition, P) -> int:
    """3|V(P) ∩ A| - |V(P) ∩ B| mod 8."""
    seq = tuple(P)
    a = part.count_a(seq)
    return (3 * a - (len(seq) - a)) % 8


def _mask(vs) -> int:
    out = 0
    for v in vs:
        out |= 1 << int(v)
    return out


# ---------------------------------------------------------------------
# shared state of one construction


class Workspace:
    """Graph, partition, typicality view and the used-vertex ledger."""

    def __init__(self, H: Hypergraph4, part: Partition, params: SolverParams, rng=None,
                 trace: Trace | None = None, view: Typicality | None = None):
        self.H = H
        self.part = part
        self.params = params
        self.rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
        self.trace = trace or Trace()
        self.view = view or Typicality(H, part)
        self.used = 0
        e5 = params.eps5
        kinds = self.view.vertex_kinds(e5)
        self.kinds = kinds
        self.typical = kinds == 0
        self.typical_mask = _mask(np.flatnonzero(self.typical))
        self.good = self.view.good_triples(*params.working)
        self.in_a = part.a_array()

    # vertex pools
    def free_typical(self, avoid: int = 0) -> int:
        return self.typical_mask & ~self.used & ~avoid

    def claim(self, vs):
        m = _mask(vs)
        if m & self.used:
            clash = bits_of(m & self.used)
            raise ConstructionFailed(f"vertices {clash} already used", stage="ledger")
        self.used |= m

    def release(self, vs):
        self.used &= ~_mask(vs)

    def connect(self, t_from, t_to, avoid: int = 0) -> TightPath:
        """Search-mode connector inside free typical vertices."""
        req = ConnectorRequest(t_from, t_to, frozenset(bits_of(self.used | avoid)) - set(t_from) - set(t_to),
                               params=self.params, scale=self.params.working, cap_avoid=False)
        pool = self.free_typical(avoid)
        return connect_triples(self.H, self.part, req, self.rng, view=self.view,
                               strategy="search", pool=pool)

    def random_good_triple(self, pattern: str, avoid: int = 0, tries: int = 400):
        """A working-scale typical triple of the given side pattern (ordered)."""
        free = self.free_typical(avoid)
        A = [v for v in bits_of(free) if self.in_a[v]]
        B = [v for v in bits_of(free) if not self.in_a[v]]
        pools = {"A": A, "B": B}
        if any(pattern.count(s) > len(pools[s]) for s in "AB"):
            return None
        for _ in range(tries):
            picks = {s: list(self.rng.choice(pools[s], size=pattern.count(s), replace=False))
                     for s in "AB" if pattern.count(s)}
            T = tuple(int(picks[s].pop()) for s in pattern)
            if self.good[T]:
                return T
        return None


# ---------------------------------------------------------------------
# dense 3-graphs


@dataclass(frozen=True)
class Graph3:
    """3-graph on 0..m-1 as a symmetric boolean array."""

    ok: np.ndarray

    @property
    def vertex_count(self) -> int:
        return self.ok.shape[0]

    @classmethod
    def from_edges(cls, m: int, edges) -> "Graph3":
        ok = np.zeros((m, m, m), dtype=bool)
        for e in edges:
            a, b, c = e
            if len({a, b, c}) != 3:
                raise ValueError(f"degenerate triple {e}")
            for x, y, z in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
                ok[x, y, z] = True
        return cls(ok)

    @classmethod
    def complete(cls, m: int) -> "Graph3":
        r = np.arange(m)
        ok = ((r[:, None, None] != r[None, :, None]) & (r[None, :, None] != r[None, None, :])
              & (r[:, None, None] != r[None, None, :]))
        return cls(ok)

    @property
    def edge_count(self) -> int:
        return int(self.ok.sum()) // 6

    def degrees(self) -> np.ndarray:
        return self.ok.sum(axis=(1, 2)) // 2


def _is_tight3(ok, seq, cyclic=False) -> bool:
    s = list(seq)
    if cyclic:
        s = s + s[:2]
    return all(ok[s[i], s[i + 1], s[i + 2]] for i in range(len(s) - 2))


def greedy_dense_path(G3: Graph3, a: float, rng=None, target: int | None = None,
                      budget: int = 20000) -> list[int]:
    """Tight path with at least floor(a m / 3) vertices by greedy extension with backtracking."""
    m = G3.vertex_count
    if m < 3 or G3.edge_count < a * math.comb(m, 3) or G3.edge_count == 0:
        raise DensityTooLow(f"{G3.edge_count} edges < {a} * C({m},3)", edges=G3.edge_count)
    rng = rng if rng is not None else np.random.default_rng(0)
    need = max(target if target is not None else math.floor(a * m / 3), 2)
    ok = G3.ok
    best: list[int] = []
    edges = np.argwhere(ok)
    left = [budget]

    def extend(seq, used):
        nonlocal best
        if len(seq) > len(best):
            best = list(seq)
        if len(best) >= need or left[0] <= 0:
            return
        p, q = seq[-2], seq[-1]
        cand = np.flatnonzero(ok[p, q] & ~used)
        if len(cand) == 0:
            return
        onward = ok[q][cand][:, ~used].sum(axis=1)
        order = cand[np.lexsort((rng.random(len(cand)), -onward))]
        for v in order[:4]:
            left[0] -= 1
            used[v] = True
            seq.append(int(v))
            extend(seq, used)
            seq.pop()
            used[v] = False
            if len(best) >= need or left[0] <= 0:
                return

    for idx in rng.permutation(len(edges))[:64]:
        x, y, z = (int(v) for v in edges[idx])
        used = np.zeros(m, dtype=bool)
        used[[x, y, z]] = True
        extend([x, y, z], used)
        if len(best) >= need:
            break
    if len(best) < need:
        raise DensityTooLow(f"longest path found has {len(best)} < {need} vertices", found=len(best))
    return best if target is None else best[:need]


def dense3_hamiltonian_cycle(G3: Graph3, rng=None, check: bool = True, budget: int = 50000) -> list[int]:
    """Tight Hamiltonian cycle of a dense 3-graph (verified before return)."""
    m = G3.vertex_count
    if m < 4:
        raise HypothesisViolated("needs at least four vertices", m=m)
    deg = G3.degrees()
    bound = 2 / 3 * math.comb(m - 1, 2)
    if check and deg.min() <= bound:
        raise HypothesisViolated(f"minimum vertex degree {int(deg.min())} <= 2/3 C(m-1,2) = {bound:.1f}",
                                 min_degree=int(deg.min()))
    rng = rng if rng is not None else np.random.default_rng(0)
    ok = G3.ok
    starts = np.argwhere(ok)
    for idx in rng.permutation(len(starts))[:16]:
        x, y, _ = (int(v) for v in starts[idx])
        rest = [v for v in range(m) if v not in (x, y)]
        order = tight_walk(ok, [x, y], rest, [x, y], rng, budget=budget, restarts=2)
        if order is not None:
            cyc = [x, y] + order
            if _is_tight3(ok, cyc, cyclic=True):
                return cyc
    if m <= 16:
        for x in range(m):
            for y in range(m):
                if x == y or not ok[x, y].any():
                    continue
                rest = [v for v in range(m) if v not in (x, y)]
                order = exact_walk(ok, [x, y], rest, [x, y])
                if order is not None:
                    return [x, y] + order
            break
    raise SearchExhausted("no tight Hamiltonian cycle found", m=m)


# ---------------------------------------------------------------------
# sequencing


def _window_array(ws: Workspace, boundary) -> np.ndarray:
    """Relaxed-scale typical triples, with plain triple typicality on windows touching the boundary."""
    view, params = ws.view, ws.params
    rel = params.relaxed
    ok = view.good_triples(*rel).copy()
    tt = view.triple_typical(rel[2])
    for b in boundary:
        ok[b, :, :] |= tt[b, :, :]
        ok[:, b, :] |= tt[:, b, :]
        ok[:, :, b] |= tt[:, :, b]
    return ok


def sequence_through(H: Hypergraph4, part: Partition, params: SolverParams, t_from, t_to, X,
                     rng=None, ws: Workspace | None = None, enforce_size: bool = True) -> Sequencing:
    """Order X between t_from and the reversal of t_to with every window typical.

    The result reads x0 x1 x2 (X in some order) x2' x1' x0' where
    t_from = (x0, x1, x2) and t_to = (x0', x1', x2'); t_to may be None.
    """
    ws = ws or Workspace(H, part, params, rng)
    rng = rng if rng is not None else ws.rng
    X = [int(v) for v in X]
    t_from = tuple(int(v) for v in t_from)
    tail = [] if t_to is None else [int(v) for v in reversed(tuple(t_to))]
    n = H.vertex_count // 2
    if enforce_size and len(X) < params.seq_c * n:
        raise HypothesisViolated(f"|X| = {len(X)} below c n = {params.seq_c * n:g}", size=len(X))
    if set(X) & (set(t_from) | set(tail)) or (set(t_from) & set(tail)):
        raise HypothesisViolated("boundary triples must be disjoint from each other and from X")
    ok = _window_array(ws, set(t_from) | set(tail))
    order = tight_walk(ok, t_from, X, tail, rng, budget=20000, restarts=6)
    if order is None and len(X) <= 10:
        order = exact_walk(ok, t_from, X, tail)
    if order is None:
        raise SearchExhausted("no sequencing found", size=len(X))
    seq = t_from + tuple(order) + tuple(tail)
    return Sequencing(seq, t_from, None if t_to is None else tuple(t_to), frozenset(X))


# ---------------------------------------------------------------------
# bridges


def _pick(rng, mask: int, limit: int | None = None) -> list[int]:
    vs = bits_of(mask)
    if not vs:
        return []
    order = [vs[i] for i in rng.permutation(len(vs))]
    return order if limit is None else order[:limit]


def _extend_front(ws: Workspace, core: list, avoid: int) -> list:
    """Prefix the core with a connector from a fresh typical AAA triple, if needed."""
    head = tuple(core[:3])
    if ws.part.count_a(head) == 3 and ws.good[head]:
        return core
    if ws.part.count_a(head) < 2:
        head_kind = "BBB"
    else:
        head_kind = "AAA"
    for _ in range(12):
        T = ws.random_good_triple(head_kind, avoid=avoid | _mask(core))
        if T is None:
            break
        try:
            C = ws.connect(T, head, avoid=avoid | _mask(core[3:]))
        except (BudgetExhausted, HypothesisViolated):
            continue
        return list(C.sequence[:-3]) + core
    raise ConstructionFailed("could not extend the front of a core", stage="bridge", head=head)


def _extend_back(ws: Workspace, core: list, avoid: int) -> list:
    tail = tuple(core[-3:])
    if ws.part.count_a(tail) == 0 and ws.good[tail]:
        return core
    kind = "BBB" if ws.part.count_a(tail) <= 1 else "AAA"
    for _ in range(12):
        T = ws.random_good_triple(kind, avoid=avoid | _mask(core))
        if T is None:
            break
        try:
            C = ws.connect(tail, T, avoid=avoid | _mask(core[:-3]))
        except (BudgetExhausted, HypothesisViolated):
            continue
        return core + list(C.sequence[3:])
    raise ConstructionFailed("could not extend the back of a core", stage="bridge", tail=tail)


def bridge_from_core(ws: Workspace, core, avoid: int = 0) -> Bridge:
    """Extend a core path (AAV front, BBV back) to a bridge; claims its vertices."""
    core = [int(v) for v in core]
    if not verify_tight_path(ws.H, core):
        raise ConstructionFailed("core is not a tight path", stage="bridge", core=tuple(core))
    path = _extend_back(ws, _extend_front(ws, core, avoid), avoid)
    P = TightPath(tuple(path))
    v = verify_tight_path(ws.H, P)
    if not v:
        raise ConstructionFailed(f"bridge does not verify: {v.reason}", stage="bridge")
    if len(P) > MAX_BRIDGE:
        raise ConstructionFailed(f"bridge has {len(P)} > {MAX_BRIDGE} vertices", stage="bridge")
    B = Bridge(P, tuple(path[:3]), tuple(path[-3:]), residue_of(ws.part, P), tuple(core))
    check_bridge(ws, B)
    ws.claim(path)
    return B


def check_bridge(ws: Workspace, B: Bridge) -> None:
    part = ws.part
    problems = []
    if part.count_a(B.end_aaa) != 3 or part.count_a(B.end_bbb) != 0:
        problems.append("end patterns")
    if not (ws.good[B.end_aaa] and ws.good[B.end_bbb]):
        problems.append("end triples not typical")
    if len(B.path) > MAX_BRIDGE:
        problems.append("too long")
    if len(set(B.path.sequence)) != len(B.path):
        problems.append("repeated vertex")
    if B.difference != residue_of(part, B.path):
        problems.append("difference")
    if problems:
        raise ConstructionFailed("bridge contract broken: " + ", ".join(problems), stage="bridge")


def _direct_quads(ws: Workspace, A: list, B: list, good_pairs, limit: int = 64):
    """Up to `limit` AABB edges (a1, a2, b1, b2) on free vertices with good pairs, in random order."""
    H, rng = ws.H, ws.rng
    Aa = np.array(A, dtype=np.int64)
    Ba = np.array(B, dtype=np.int64)
    wb = mask_words(H.vertex_count, B)
    hit = (H.words[np.ix_(Aa, Aa, Ba)] & wb).any(axis=-1)
    hit &= (good_pairs[np.ix_(Aa, Aa)] & np.triu(np.ones((len(Aa), len(Aa)), dtype=bool), 1))[:, :, None]
    idx = np.argwhere(hit)
    out = []
    for i, j, k in idx[rng.permutation(len(idx))]:
        a1, a2, b1 = int(Aa[i]), int(Aa[j]), int(Ba[k])
        for b2 in _pick(rng, H.nb(a1, a2, b1) & _mask(B)):
            if good_pairs[b1, b2]:
                out.append((a1, a2, b1, b2))
                break
        if len(out) >= limit:
            break
    return out


def _bridge_cores(ws: Workspace, avoid: int, tries: int = 400):
    """Yield candidate cores x a2 a1 [z] b1 b2 y.

    Cores through an existing AABB edge come first; the remaining draws
    look for a middle vertex z completing AAB and ABB triples.
    """
    H, rng = ws.H, ws.rng
    free = ws.free_typical(avoid)
    A = [v for v in bits_of(free) if ws.in_a[v]]
    B = [v for v in bits_of(free) if not ws.in_a[v]]
    if len(A) < 3 or len(B) < 3:
        return
    good_pairs = ws.view.good_pairs(*ws.params.working[:2])
    blocked = ws.used | avoid
    direct = _direct_quads(ws, A, B, good_pairs)
    for t in range(len(direct) + tries):
        if t < len(direct):
            a1, a2, b1, b2 = direct[t]
        else:
            a1, a2 = (int(v) for v in rng.choice(A, 2, replace=False))
            b1, b2 = (int(v) for v in rng.choice(B, 2, replace=False))
            if not (good_pairs[a1, a2] and good_pairs[b1, b2]):
                continue
        if H.has_edge(a1, a2, b1, b2):
            xs = H.nb(a2, a1, b1) & free & ~_mask((b2,))
            ys = H.nb(a1, b1, b2) & free
            middle = [a2, a1, b1, b2]
        else:
            zs = H.nb(a1, a2, b1) & H.nb(a1, b1, b2) & ~blocked
            z = next(iter(_pick(rng, zs)), None)
            if z is None:
                continue
            xs = H.nb(a2, a1, z) & free
            ys = H.nb(z, b1, b2) & free
            middle = [a2, a1, z, b1, b2]
        mid = _mask(middle)
        for x in _pick(rng, xs & ~mid, 6):
            if not ws.good[x, a2, a1] or ws.part.count_a((x, a2, a1)) < 2:
                continue
            for y in _pick(rng, ys & ~mid & ~(1 << x), 6):
                if ws.good[b1, b2, y] and ws.part.count_a((b1, b2, y)) <= 1:
                    yield [x] + middle + [y]
                    break
            else:
                continue
            break


def build_bridge(H: Hypergraph4, part: Partition, params: SolverParams, K=(), rng=None,
                 ws: Workspace | None = None) -> Bridge:
    """Bridge of at most 25 vertices avoiding K (claims its vertices in ws)."""
    ws = ws or Workspace(H, part, params, rng)
    avoid = _mask(K)
    last = None
    for core in _bridge_cores(ws, avoid):
        try:
            B = bridge_from_core(ws, core, avoid)
        except ConstructionFailed as exc:
            last = exc
            continue
        ws.trace.add("bridge", size=len(B), diff=B.difference, core=len(core))
        return B
    raise ConstructionFailed("no bridge found", stage="bridge", cause=str(last) if last else "no core")


def build_disjoint_bridges(H: Hypergraph4, part: Partition, params: SolverParams, rng=None,
                           ws: Workspace | None = None, K=()) -> tuple[Bridge, Bridge]:
    if H.vertex_count < params.min_solver_n:
        raise ConstructionFailed(f"N = {H.vertex_count} below min_solver_n = {params.min_solver_n}",
                                 stage="bridge")
    ws = ws or Workspace(H, part, params, rng)
    M1 = build_bridge(H, part, params, K, ws=ws)
    M2 = build_bridge(H, part, params, set(K) | M1.vertices, ws=ws)
    assert not (M1.vertices & M2.vertices)
    return M1, M2


# ---------------------------------------------------------------------
# absorption


def medium_budget(params: SolverParams, n: int) -> float:
    return 8 * params.eps0 / params.eps5 * n


def _absorber(ws: Workspace, z: int, avoid: int) -> list[int] | None:
    """7-vertex path x1 x2 x3 z x4 x5 x6 from a 6-vertex path in z's typical link."""
    free = bits_of(ws.free_typical(avoid) & ~(1 << z))
    if len(free) < 6:
        return None
    vs = np.array(free, dtype=np.int64)
    in_a = ws.in_a[vs].astype(np.int8)
    k = in_a[:, None, None] + in_a[None, :, None] + in_a[None, None, :]
    want = 2 if ws.in_a[z] else 1
    words = ws.H.words[np.ix_(vs, vs, vs)]
    has_z = ((words[..., z >> 6] >> np.uint64(z & 63)) & np.uint64(1)).astype(bool)
    F = has_z & (k == want) & ws.good[np.ix_(vs, vs, vs)]
    if not F.any():
        return None
    try:
        local = greedy_dense_path(Graph3(F), a=0.0, rng=ws.rng, target=6, budget=4000)
    except DensityTooLow:
        return None
    if len(local) < 6:
        return None
    six = [int(vs[i]) for i in local[:6]]
    return six[:3] + [z] + six[3:]


def _chain(ws: Workspace, pieces: list, avoid: int) -> list:
    path = list(pieces[0])
    for nxt in pieces[1:]:
        C = ws.connect(tuple(path[-3:]), tuple(nxt[:3]), avoid=avoid | _mask(path[:-3]) | _mask(nxt[3:]))
        mid = list(C.sequence[3:-3])
        ws.claim(mid)
        path = path + mid + list(nxt)
    return path


def absorb_medium(H: Hypergraph4, part: Partition, params: SolverParams, M: Bridge, rng=None,
                  ws: Workspace | None = None, K=(), mediums=None) -> AbsorberPath:
    """Path Q ⊇ M through every medium vertex outside M, with AAA and BBB typical ends.

    Vertices of M must already be claimed in ws.
    """
    ws = ws or Workspace(H, part, params, rng)
    ws.used |= _mask(M.path.sequence)
    avoid = _mask(K)
    n = H.vertex_count // 2
    if mediums is None:
        mediums = [int(v) for v in np.flatnonzero(ws.kinds == 1)]
    mediums = [z for z in mediums if z not in M.vertices and not (avoid >> z) & 1]
    if len(mediums) > medium_budget(params, n):
        raise TooManyMediums(f"{len(mediums)} medium vertices exceed {medium_budget(params, n):.1f}",
                             count=len(mediums))
    # mediums may not serve as connector or absorber vertices
    block = avoid | _mask(mediums)
    tops, zigs = [], []
    for z in mediums:
        Qz = _absorber(ws, z, block)
        if Qz is None:
            raise ConstructionFailed(f"no absorber for medium vertex {z}", stage="absorb", vertex=z)
        if not verify_tight_path(H, Qz) or len(Qz) != ABSORBER_SIZE:
            raise ConstructionFailed("absorber does not verify", stage="absorb", vertex=z)
        ws.claim(Qz)
        (tops if ws.in_a[z] else zigs).append(Qz)
    block &= ~_mask(mediums)
    seq = list(M.path.sequence)
    if tops:
        top = _chain(ws, tops, block)
        C = ws.connect(tuple(top[-3:]), tuple(seq[:3]), avoid=block | _mask(top[:-3]) | _mask(seq[3:]))
        mid = list(C.sequence[3:-3])
        ws.claim(mid)
        seq = top + mid + seq
        seq = _cap_front(ws, seq, block)
    if zigs:
        zig = _chain(ws, zigs, block)
        C = ws.connect(tuple(seq[-3:]), tuple(zig[:3]), avoid=block | _mask(seq[:-3]) | _mask(zig[3:]))
        mid = list(C.sequence[3:-3])
        ws.claim(mid)
        seq = seq + mid + zig
        seq = _cap_back(ws, seq, block)
    Q = TightPath(tuple(seq))
    v = verify_tight_path(H, Q)
    if not v:
        raise ConstructionFailed(f"absorbing path does not verify: {v.reason}", stage="absorb")
    cap = params.absorber_cap * H.vertex_count
    if len(Q) > cap:
        raise ConstructionFailed(f"absorbing path has {len(Q)} > {cap:.0f} vertices", stage="absorb")
    out = AbsorberPath(Q, M, list(mediums), tops + zigs)
    check_absorber(ws, out)
    ws.trace.add("absorb", mediums=len(mediums), size=len(Q),
                 pieces=",".join(str(len(P)) for P in out.pieces) or "-")
    return out


def _cap_front(ws, seq, block):
    T = ws.random_good_triple("AAA", avoid=block | _mask(seq))
    for _ in range(12):
        if T is None:
            break
        try:
            C = ws.connect(T, tuple(seq[:3]), avoid=block | _mask(seq[3:]))
        except (BudgetExhausted, HypothesisViolated):
            T = ws.random_good_triple("AAA", avoid=block | _mask(seq))
            continue
        front = list(C.sequence[:-3])
        ws.claim(front)
        return front + seq
    raise ConstructionFailed("could not cap the absorbing path with an AAA triple", stage="absorb")


def _cap_back(ws, seq, block):
    T = ws.random_good_triple("BBB", avoid=block | _mask(seq))
    for _ in range(12):
        if T is None:
            break
        try:
            C = ws.connect(tuple(seq[-3:]), T, avoid=block | _mask(seq[:-3]))
        except (BudgetExhausted, HypothesisViolated):
            T = ws.random_good_triple("BBB", avoid=block | _mask(seq))
            continue
        back = list(C.sequence[3:])
        ws.claim(back)
        return seq + back
    raise ConstructionFailed("could not cap the absorbing path with a BBB triple", stage="absorb")


def check_absorber(ws: Workspace, Q: AbsorberPath) -> None:
    """Contract of the absorbing path, including the mod-8 neutrality of Q - M."""
    part = ws.part
    seq = Q.path.sequence
    m = Q.bridge.path.sequence
    start = next(i for i in range(len(seq)) if seq[i:i + len(m)] == m)
    front, back = seq[:start], seq[start + len(m):]
    problems = []
    if part.count_a(seq[:3]) != 3 or part.count_a(seq[-3:]) != 0:
        problems.append("end patterns")
    if not (ws.good[tuple(seq[:3])] and ws.good[tuple(seq[-3:])]):
        problems.append("end triples not typical")
    if residue_of(part, front) or residue_of(part, back):
        problems.append("Q - M has nonzero difference")
    for P in Q.pieces:
        if len(P) != ABSORBER_SIZE:
            problems.append("absorber size")
    for i in range(len(seq) - 3):
        inside_m = start <= i and i + 3 < start + len(m)
        if not inside_m and part.count_a(seq[i:i + 4]) not in (1, 3):
            problems.append(f"atypical edge at {i}")
            break
    if problems:
        raise ConstructionFailed("absorbing path contract broken: " + ", ".join(problems), stage="absorb")


# ---------------------------------------------------------------------
# anarchists


def anarchist_budget(params: SolverParams, n: int) -> float:
    return params.anarchist_budget * params.eps0 * n


def transfer_anarchists(H: Hypergraph4, part: Partition, params: SolverParams, protected=(),
                        view: Typicality | None = None, check: bool = True) -> Partition:
    """Move every eps5-anarchist to the other side; recheck the rest at the relaxed scale."""
    view = view or Typicality(H, part)
    n = H.vertex_count // 2
    anarchists = [int(v) for v in np.flatnonzero(view.vertex_kinds(params.eps5) == 2)]
    if len(anarchists) > anarchist_budget(params, n):
        raise BudgetExceeded(f"{len(anarchists)} anarchists exceed {anarchist_budget(params, n):.1f}",
                             count=len(anarchists))
    if not anarchists:
        return part
    new = part.moved(anarchists)
    if check:
        nv = Typicality(H, new)
        bad = [int(v) for v in np.flatnonzero(~nv.vertex_typical(params.relaxed[0]))
               if int(v) not in set(protected)]
        if bad:
            raise ReclassificationFailed(f"vertices {bad} stay atypical after the transfer", vertices=bad)
    drift = abs(len(new.side_a) - len(new.side_b))
    if drift > 10 * params.eps0 * n + 1:
        raise EnvelopeViolated(f"side sizes differ by {drift}", drift=drift)
    return new


# ---------------------------------------------------------------------
# completion


def slot_windows(base, slots, final_len=None):
    """For vertices inserted after base[k] (k in slots), the triples of base they must extend."""
    L = len(base)
    out = []
    for k in slots:
        tri = []
        for s in (k - 2, k - 1, k, k + 1):
            if s >= 0 and s + 2 < L:
                tri.append((base[s], base[s + 1], base[s + 2]))
        out.append(tri)
    return out


def _slot_masks(H, windows, allowed: int) -> list[int]:
    out = []
    for tri in windows:
        m = allowed
        for T in tri:
            m &= H.nb(*T)
        out.append(m)
    return out


def _match_slots(slot_masks: list[int], candidates: list[int], rng) -> list[int] | None:
    """Perfect matching of slots into candidate vertices; None if none exists."""
    index = {v: i for i, v in enumerate(candidates)}
    adj = []
    for m in slot_masks:
        row = [index[v] for v in bits_of(m) if v in index]
        adj.append([row[i] for i in rng.permutation(len(row))] if row else [])
    match = max_matching(adj, len(candidates))
    if any(j < 0 for j in match):
        return None
    return [candidates[j] for j in match]


def _interleave(base, slots, inserted):
    out = []
    pos = dict(zip(slots, inserted))
    for i, v in enumerate(base):
        out.append(v)
        if i in pos:
            out.append(pos[i])
    return out


def top_shape(m1: int, m2: int) -> tuple[int, int, int, int]:
    """(t, e, u, f) for the path completion with m1 free A- and m2 free B-vertices.

    The top path takes 3t - 3 + e new A-vertices and t B-vertices, the
    zig path takes u = m1 - 3t + 3 - e A-vertices and ends in f extra
    B-vertices; e is the largest value in 0..3 making f lie in 0..3.
    """
    D = 3 * m1 - m2
    t = -(-D // 8)
    delta = (-D) % 8
    for e in (3, 2, 1, 0):
        f = delta + 3 * e - 6
        if 0 <= f <= 3:
            return t, e, m1 - 3 * t + 3 - e, f
    raise EnvelopeViolated("no admissible top ending", m1=m1, m2=m2)


def complete_path(H: Hypergraph4, part: Partition, params: SolverParams, Q, rng=None,
                  trace: Trace | None = None) -> TightPath:
    """Extend Q = a2 a1 a0 ... b0 b1 b2 to a tight Hamiltonian path."""
    Qseq = tuple(Q.path.sequence if isinstance(Q, AbsorberPath) else tuple(Q))
    rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
    trace = trace or Trace()
    free = set(range(H.vertex_count)) - set(Qseq)
    m1 = sum(1 for v in free if part.in_a(v))
    m2 = len(free) - m1
    if m1 > m2:
        # mirror sides and direction; the construction is side-symmetric
        P = complete_path(H, part.swapped(), params, tuple(reversed(Qseq)), rng, trace)
        return P
    t, e, u, f = top_shape(m1, m2)
    trace.add("complete", m1=m1, m2=m2, t=t, e=e, u=u, f=f)
    if t < 1 or u < 0 or m2 - t < 0 or 3 * t - 3 + e > m1:
        raise EnvelopeViolated(f"side counts m1={m1}, m2={m2} outside the envelope", m1=m1, m2=m2)
    last = None
    for attempt in range(params.attempts):
        try:
            seq = _complete_path_once(H, part, params, Qseq, m1, m2, (t, e, u, f), rng, trace)
        except (MatchingFailed, SearchExhausted, HypothesisViolated) as exc:
            last = exc
            trace.add("complete_retry", attempt=attempt, reason=type(exc).__name__)
            continue
        P = TightPath(tuple(seq))
        v = is_hamiltonian_certificate(H, P)
        if not v:
            raise ConstructionFailed(f"assembled path fails verification: {v.reason}", stage="complete")
        return P
    if isinstance(last, H4Error):
        raise last
    raise ConstructionFailed("completion failed", stage="complete")


def _complete_path_once(H, part, params, Qseq, m1, m2, shape, rng, trace):
    t, e, u, f = shape
    ws = Workspace(H, part, params, rng, trace)
    in_a = ws.in_a
    free = [v for v in range(H.vertex_count) if v not in set(Qseq)]
    A1 = [v for v in free if in_a[v]]
    B1 = [v for v in free if not in_a[v]]
    a_start = (Qseq[2], Qseq[1], Qseq[0])
    b_start = tuple(Qseq[-3:])

    # B-sequencing through all free B-vertices
    end_b = _free_end_triple(ws, B1, "BBB", rng)
    PB = sequence_through(H, part, params, b_start, end_b, [v for v in B1 if v not in end_b],
                          rng, ws, enforce_size=False).vertices
    # degrees into the B-sequence slots decide which A-vertices go on top
    slots_b = list(range(2, len(PB), 3))
    masks = _slot_masks(H, slot_windows(PB, slots_b), _mask(A1))
    deg = {a: sum(1 for m in masks if (m >> a) & 1) for a in A1}
    p1 = len(slots_b)
    small = [a for a in A1 if deg[a] < params.big_fraction * p1]
    n_top = 3 * t - 3
    if len(small) > n_top:
        raise MatchingFailed(f"{len(small)} low-degree A-vertices exceed {n_top} top places", side="A")
    rest = [a for a in A1 if a not in small]
    rest = [rest[i] for i in rng.permutation(len(rest))]
    # A-vertices after the top section: prefer a typical end triple
    spare = rest[n_top - len(small):]
    end_a = _free_end_triple(ws, spare, "AAA", rng) if len(spare) >= 3 else None
    pool = [a for a in rest if end_a is None or a not in end_a]
    A_S = small + pool[:n_top - len(small)]
    if end_a is None:
        extra = [a for a in rest if a not in A_S][:e]
        X = A_S + extra
        seqA = sequence_through(H, part, params, a_start, None, X, rng, ws, enforce_size=False).vertices
        top_a = list(seqA)
    else:
        seqA = sequence_through(H, part, params, a_start, end_a, A_S, rng, ws, enforce_size=False).vertices
        top_a = list(seqA[:3 + n_top + e])
    if len(top_a) != 3 + n_top + e:
        raise MatchingFailed("top A-sequence too short", side="A")
    # match t top slots into the tail of the B-sequence
    p2 = min(max(math.ceil(params.tail_fraction * m1), t + 3), m2)
    tail = list(PB[len(PB) - p2:])
    slots_t = [3 * j - 1 for j in range(1, t + 1)]
    tmasks = _slot_masks(H, slot_windows(top_a, slots_t), _mask(tail))
    bbar = _match_slots(tmasks, tail, rng)
    if bbar is None:
        raise MatchingFailed("no perfect matching for the top slots", side="B")
    top = _interleave(top_a, slots_t, bbar)
    # resequence the B-vertices left in the tail
    prefix = list(PB[:len(PB) - p2])
    left = [b for b in tail if b not in set(bbar)]
    if left:
        if len(prefix) < 3:
            raise MatchingFailed("B prefix too short", side="B")
        end2 = _free_end_triple(ws, left, "BBB", rng) if len(left) >= 3 else None
        X2 = [b for b in left if end2 is None or b not in end2]
        seqB = sequence_through(H, part, params, tuple(prefix[-3:]), end2, X2, rng, ws,
                                enforce_size=False).vertices
        zig_b = prefix[:-3] + list(seqB)
    else:
        zig_b = prefix
    Abar = [a for a in A1 if a not in set(top_a)]
    slots_z = [3 * i - 1 for i in range(1, len(Abar) + 1)]
    if slots_z and slots_z[-1] >= len(zig_b):
        raise MatchingFailed("zig sequence has too few slots", side="A")
    zmasks = _slot_masks(H, slot_windows(zig_b, slots_z), _mask(Abar))
    abar = _match_slots(zmasks, Abar, rng)
    if abar is None:
        raise MatchingFailed("no perfect matching for the zig slots", side="A")
    zig = _interleave(zig_b, slots_z, abar)
    trace.add("matchings", top=t, zig=len(Abar))
    return list(reversed(top)) + list(Qseq[3:]) + zig[3:]


def _free_end_triple(ws: Workspace, verts, pattern, rng, tries: int = 300):
    verts = list(verts)
    if len(verts) < 3:
        raise MatchingFailed("too few vertices for an end triple", side=pattern[0])
    good = ws.view.good_triples(*ws.params.relaxed)
    for _ in range(tries):
        T = tuple(int(v) for v in rng.choice(verts, 3, replace=False))
        if good[T]:
            return T
    return tuple(int(v) for v in rng.choice(verts, 3, replace=False))


# ---------------------------------------------------------------------
# orchestration


def path_threshold(N: int) -> int:
    return -(-(N - 1) // 2) - 1


def staged(stage: str, exc: H4Error) -> H4Error:
    exc.stage = stage
    return exc


def solve_ham_path(H: Hypergraph4, params: SolverParams | None = None, trace: Trace | None = None,
                   partition: Partition | None = None) -> TightPath:
    """Tight Hamiltonian path of a near-extremal 4-graph, or a staged failure."""
    params = params or SolverParams()
    trace = trace if trace is not None else Trace()
    N = H.vertex_count
    delta = min_codegree(H)
    if delta < path_threshold(N):
        raise ThresholdNotMet(f"minimum codegree {delta} < {path_threshold(N)}", stage="threshold",
                              min_codegree=delta, threshold=path_threshold(N))
    if N < params.min_solver_n:
        raise ConstructionFailed(f"N = {N} below min_solver_n = {params.min_solver_n}", stage="setup")
    trace.add("threshold", N=N, delta3=delta)
    part = partition if partition is not None else _partition(H, params, trace)
    last = None
    for attempt in range(params.attempts):
        rng = np.random.default_rng([params.rng_seed, attempt])
        try:
            return _solve_path_once(H, part, params, rng, trace)
        except (ConstructionFailed, MatchingFailed, SearchExhausted, BudgetExhausted, EnvelopeViolated) as exc:
            last = exc
            trace.add("retry", attempt=attempt, stage=getattr(exc, "stage", "?"), reason=type(exc).__name__)
    raise last


def _partition(H, params, trace) -> Partition:
    b = compute_b(H)
    n = H.vertex_count // 2
    trace.add("compute_b", value=b.value, exact=int(b.exact))
    if b.value > params.eps0 * n ** 4:
        raise HypothesisViolated(f"b(H) = {b.value} exceeds eps0 n^4 = {params.eps0 * n ** 4:g}",
                                 stage="compute_b", b=b.value)
    return b.partition


def _solve_path_once(H, part, params, rng, trace) -> TightPath:
    ws = Workspace(H, part, params, rng, trace)
    kinds = ws.kinds
    trace.add("classify", typical=int((kinds == 0).sum()), medium=int((kinds == 1).sum()),
              anarchist=int((kinds == 2).sum()))
    try:
        M = build_bridge(H, part, params, ws=ws)
    except H4Error as exc:
        raise staged("bridge", exc)
    try:
        Q = absorb_medium(H, part, params, M, ws=ws)
    except H4Error as exc:
        raise staged("absorb", exc)
    try:
        new = transfer_anarchists(H, part, params, protected=Q.vertices, view=ws.view)
    except H4Error as exc:
        raise staged("transfer", exc)
    trace.add("transfer", moved=len(set(part.side_a) ^ set(new.side_a)))
    try:
        P = complete_path(H, new, params, Q, rng, trace)
    except H4Error as exc:
        raise staged("complete", exc)
    v = is_hamiltonian_certificate(H, P)
    if not v:
        raise ConstructionFailed(f"certificate rejected: {v.reason}", stage="verify")
    trace.add("done", size=len(P))
    return P
