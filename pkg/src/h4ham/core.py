"""4-uniform hypergraphs, partitions, certificates and file formats.

The triple index is a dense uint64 array of shape (N, N, N, W) with
W = ceil(N / 64); entry [i, j, k] holds the neighbourhood bitset of the
triple {i, j, k} and is filled for all six orderings. Bit x of the
packed row is set iff {i, j, k, x} is an edge.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DegenerateEdge,
    OutOfRange,
    ParseError,
    TooFewVertices,
    TooLarge,
    TooShort,
)

# eager dense index up to this many vertices (memory N^3 * W * 8 bytes)
DENSE_LIMIT = 256
_CHUNK = 1 << 18


def _nwords(n: int) -> int:
    return max(1, (n + 63) // 64)


def _bit_rows(n: int) -> np.ndarray:
    """(n, W) array; row x has only bit x set."""
    w = _nwords(n)
    rows = np.zeros((n, w), dtype=np.uint64)
    x = np.arange(n)
    rows[x, x // 64] = np.left_shift(np.uint64(1), (x % 64).astype(np.uint64))
    return rows


def mask_words(n: int, vertices: Iterable[int]) -> np.ndarray:
    """Pack a vertex set into a (W,) uint64 vector."""
    out = np.zeros(_nwords(n), dtype=np.uint64)
    for v in vertices:
        out[v >> 6] |= np.uint64(1) << np.uint64(v & 63)
    return out


def bits_of(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _or_into(flat: np.ndarray, n: int, edges: np.ndarray, clear: bool = False) -> None:
    """OR (or clear) the 24 (ordered triple, outsider) bits of each edge."""
    w = _nwords(n)
    for start in range(0, len(edges), _CHUNK):
        e = edges[start:start + _CHUNK].astype(np.int64)
        idx, val = [], []
        for o in range(4):
            x = e[:, o]
            rest = [c for c in range(4) if c != o]
            bit = np.left_shift(np.uint64(1), (x % 64).astype(np.uint64))
            for p in itertools.permutations(rest):
                i, j, k = e[:, p[0]], e[:, p[1]], e[:, p[2]]
                idx.append(((i * n + j) * n + k) * w + x // 64)
                val.append(bit)
        idx = np.concatenate(idx)
        val = np.concatenate(val)
        if clear:
            np.bitwise_and.at(flat, idx, ~val)
        else:
            np.bitwise_or.at(flat, idx, val)


def canonical_edges(n: int, edges) -> np.ndarray:
    """Validate, sort and deduplicate quadruples into an (M, 4) int array."""
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise DegenerateEdge("edges must be quadruples")
    if arr.min() < 0 or arr.max() >= n:
        bad = arr[(arr < 0).any(1) | (arr >= n).any(1)][0].tolist()
        raise OutOfRange(f"edge {bad} has a vertex outside [0, {n})", edge=bad)
    arr = np.sort(arr, axis=1)
    rep = (arr[:, 1:] == arr[:, :-1]).any(1)
    if rep.any():
        bad = arr[rep][0].tolist()
        raise DegenerateEdge(f"edge {bad} repeats a vertex", edge=bad)
    return np.unique(arr, axis=0)


class TripleIndex(Mapping):
    """Read-only mapping sorted triple -> neighbourhood bitset (python int)."""

    def __init__(self, graph: "Hypergraph4"):
        self._g = graph

    def __getitem__(self, key):
        i, j, k = key
        if len({i, j, k}) != 3 or not all(0 <= v < self._g.vertex_count for v in key):
            raise KeyError(key)
        return self._g.nb(i, j, k)

    def __iter__(self):
        return itertools.combinations(range(self._g.vertex_count), 3)

    def __len__(self):
        return math.comb(self._g.vertex_count, 3)


class Hypergraph4:
    """Immutable 4-uniform hypergraph on vertices 0..N-1.

    Build through `build_graph` (explicit edge list) or the generators in
    `extremal`. Queries go through the packed triple index.
    """

    def __init__(self, vertex_count: int, words: np.ndarray):
        self.vertex_count = int(vertex_count)
        self.W = _nwords(self.vertex_count)
        words.flags.writeable = False
        self._words = words
        self._deg = None
        self._edges = None
        self._edge_array = None

    # -- construction helpers -------------------------------------------
    @classmethod
    def _from_edge_array(cls, n: int, edges: np.ndarray) -> "Hypergraph4":
        if n > DENSE_LIMIT:
            raise TooLarge(f"dense index limited to {DENSE_LIMIT} vertices, got {n}")
        w = _nwords(n)
        flat = np.zeros(n * n * n * w, dtype=np.uint64)
        if len(edges):
            _or_into(flat, n, edges)
        return cls(n, flat.reshape(n, n, n, w))

    def modified(self, add=None, remove=None) -> "Hypergraph4":
        """New graph with canonical edge arrays added / removed."""
        n = self.vertex_count
        flat = self._words.reshape(-1).copy()
        if add is not None and len(add):
            _or_into(flat, n, canonical_edges(n, add))
        if remove is not None and len(remove):
            _or_into(flat, n, canonical_edges(n, remove), clear=True)
        return Hypergraph4(n, flat.reshape(self._words.shape))

    # -- queries -------------------------------------------------------
    @property
    def words(self) -> np.ndarray:
        return self._words

    def nb(self, i: int, j: int, k: int) -> int:
        """N_H({i,j,k}) as a python int bitset."""
        row = self._words[i, j, k]
        if self.W == 1:
            return int(row[0])
        out = 0
        for t in range(self.W - 1, -1, -1):
            out = (out << 64) | int(row[t])
        return out

    def codegree(self, i: int, j: int, k: int) -> int:
        return int(self.degrees[i, j, k])

    def has_edge(self, a: int, b: int, c: int, d: int) -> bool:
        if len({a, b, c, d}) != 4:
            return False
        return bool((int(self._words[a, b, c, d >> 6]) >> (d & 63)) & 1)

    @property
    def degrees(self) -> np.ndarray:
        """Codegree of every ordered triple, shape (N, N, N); 0 on repeats."""
        if self._deg is None:
            d = np.bitwise_count(self._words).sum(axis=-1, dtype=np.int32)
            d.flags.writeable = False
            self._deg = d
        return self._deg

    def split_degrees(self, side_words: np.ndarray) -> np.ndarray:
        """|N(T) ∩ S| for every ordered triple T, S given as packed words."""
        return np.bitwise_count(self._words & side_words).sum(axis=-1, dtype=np.int32)

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum(dtype=np.int64) // 24)

    def edge_array(self) -> np.ndarray:
        """All edges as a sorted (M, 4) int array."""
        if self._edge_array is None:
            n = self.vertex_count
            if n < 4:
                arr = np.zeros((0, 4), dtype=np.int64)
            else:
                r = np.arange(n)
                upper = (r[:, None, None] < r[None, :, None]) & (r[None, :, None] < r[None, None, :])
                parts = []
                for i in range(n - 3):
                    slab = np.ascontiguousarray(self._words[i, i + 1:])
                    bits = np.unpackbits(slab.view(np.uint8), axis=-1, bitorder="little")[..., :n]
                    j, k, x = np.nonzero(bits.astype(bool) & upper[i + 1:])
                    if len(j):
                        parts.append(np.stack([np.full_like(j, i), j + i + 1, k, x], axis=1))
                arr = np.concatenate(parts) if parts else np.zeros((0, 4), dtype=np.int64)
            arr = arr.astype(np.int64)
            arr.flags.writeable = False
            self._edge_array = arr
        return self._edge_array

    @property
    def edges(self) -> frozenset:
        if self._edges is None:
            self._edges = frozenset(map(tuple, self.edge_array().tolist()))
        return self._edges

    @property
    def triple_index(self) -> TripleIndex:
        return TripleIndex(self)

    def __eq__(self, other):
        return (isinstance(other, Hypergraph4) and other.vertex_count == self.vertex_count
                and np.array_equal(other._words, self._words))

    def __hash__(self):
        return hash((self.vertex_count, self.edge_count))

    def __repr__(self):
        return f"Hypergraph4(N={self.vertex_count}, M={self.edge_count})"


def build_graph(vertex_count: int, edges) -> Hypergraph4:
    """Graph from a list of quadruples (duplicates and any order allowed)."""
    if vertex_count < 0:
        raise OutOfRange("negative vertex count")
    arr = canonical_edges(vertex_count, edges)
    return Hypergraph4._from_edge_array(vertex_count, arr)


def min_codegree(H: Hypergraph4) -> int:
    n = H.vertex_count
    if n < 4:
        raise TooFewVertices(f"min codegree needs N >= 4, got {n}")
    r = np.arange(n)
    tri = (r[:, None, None] < r[None, :, None]) & (r[None, :, None] < r[None, None, :])
    return int(H.degrees[tri].min())


# ---------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class Partition:
    """Ordered bipartition (A, B) of 0..N-1.

    The solver also uses unbalanced partitions (after moving anarchists);
    `is_balanced` reports whether |A| - |B| is 0 or 1.
    """

    vertex_count: int
    side_a: frozenset
    side_b: frozenset
    mask_a: int = field(init=False, repr=False, compare=False)
    mask_b: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a, b = frozenset(self.side_a), frozenset(self.side_b)
        object.__setattr__(self, "side_a", a)
        object.__setattr__(self, "side_b", b)
        if a & b:
            raise ParseError("partition sides overlap")
        if a | b != frozenset(range(self.vertex_count)):
            raise ParseError("partition does not cover the vertex set")
        object.__setattr__(self, "mask_a", sum(1 << v for v in a))
        object.__setattr__(self, "mask_b", sum(1 << v for v in b))

    @classmethod
    def from_side_a(cls, n: int, side_a: Iterable[int]) -> "Partition":
        a = frozenset(side_a)
        return cls(n, a, frozenset(range(n)) - a)

    @classmethod
    def balanced(cls, n: int, side_a: Iterable[int]) -> "Partition":
        p = cls.from_side_a(n, side_a)
        if not p.is_balanced:
            raise ParseError(f"unbalanced partition |A|={len(p.side_a)} |B|={len(p.side_b)}")
        return p

    @property
    def n(self) -> int:
        return self.vertex_count // 2

    @property
    def is_balanced(self) -> bool:
        return len(self.side_a) - len(self.side_b) in (0, 1)

    def in_a(self, v: int) -> bool:
        return (self.mask_a >> v) & 1 == 1

    def side(self, v: int) -> str:
        return "A" if self.in_a(v) else "B"

    def pattern(self, vs: Sequence[int]) -> str:
        return "".join(self.side(v) for v in vs)

    def count_a(self, vs: Iterable[int]) -> int:
        return sum(1 for v in vs if self.in_a(v))

    def a_array(self) -> np.ndarray:
        out = np.zeros(self.vertex_count, dtype=bool)
        out[list(self.side_a)] = True
        return out

    def words_a(self) -> np.ndarray:
        return mask_words(self.vertex_count, self.side_a)

    def words_b(self) -> np.ndarray:
        return mask_words(self.vertex_count, self.side_b)

    def moved(self, vertices: Iterable[int]) -> "Partition":
        """Move each listed vertex to the other side."""
        a = set(self.side_a)
        for v in vertices:
            a ^= {v}
        return Partition.from_side_a(self.vertex_count, a)

    def swapped(self) -> "Partition":
        return Partition(self.vertex_count, self.side_b, self.side_a)


# ---------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class TightPath:
    sequence: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(v) for v in self.sequence))

    def __len__(self):
        return len(self.sequence)

    def __iter__(self):
        return iter(self.sequence)

    def reversed(self) -> "TightPath":
        return TightPath(self.sequence[::-1])


@dataclass(frozen=True, eq=False)
class TightCycle:
    """Cyclic sequence; rotations and reflections compare equal."""

    sequence: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(v) for v in self.sequence))

    def __len__(self):
        return len(self.sequence)

    def __iter__(self):
        return iter(self.sequence)

    def canonical(self) -> tuple:
        s = self.sequence
        if not s:
            return s
        best = None
        for seq in (s, s[::-1]):
            for r in range(len(seq)):
                cand = seq[r:] + seq[:r]
                if best is None or cand < best:
                    best = cand
        return best

    def __eq__(self, other):
        return isinstance(other, TightCycle) and self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())


class Verdict:
    """Boolean result that carries the first violation, if any."""

    __slots__ = ("ok", "reason")

    def __init__(self, ok: bool, reason: str = ""):
        self.ok = ok
        self.reason = reason

    def __bool__(self):
        return self.ok

    def __eq__(self, other):
        return bool(self) == bool(other)

    def __repr__(self):
        return f"Verdict({self.ok}{', ' + repr(self.reason) if self.reason else ''})"


def _seq(P) -> tuple:
    return tuple(P.sequence) if hasattr(P, "sequence") else tuple(P)


def verify_tight_path(H: Hypergraph4, P) -> Verdict:
    s = _seq(P)
    if len(set(s)) != len(s):
        return Verdict(False, "repeated vertex")
    if any(not 0 <= v < H.vertex_count for v in s):
        return Verdict(False, "vertex out of range")
    for i in range(len(s) - 3):
        if not H.has_edge(*s[i:i + 4]):
            return Verdict(False, f"window {i} {s[i:i + 4]} is not an edge")
    return Verdict(True)


def verify_tight_cycle(H: Hypergraph4, C) -> Verdict:
    s = _seq(C)
    if len(s) < 5:
        raise TooShort(f"a tight cycle needs at least 5 vertices, got {len(s)}")
    if len(set(s)) != len(s):
        return Verdict(False, "repeated vertex")
    if any(not 0 <= v < H.vertex_count for v in s):
        return Verdict(False, "vertex out of range")
    ell = len(s)
    for i in range(ell):
        win = tuple(s[(i + r) % ell] for r in range(4))
        if not H.has_edge(*win):
            return Verdict(False, f"window {i} {win} is not an edge")
    return Verdict(True)


def is_hamiltonian_certificate(H: Hypergraph4, C) -> Verdict:
    s = _seq(C)
    if len(s) != H.vertex_count:
        return Verdict(False, f"length {len(s)} != N={H.vertex_count}")
    if isinstance(C, TightCycle):
        if len(s) < 5:
            return Verdict(False, "cycle shorter than 5")
        return verify_tight_cycle(H, C)
    return verify_tight_path(H, C)


# ---------------------------------------------------------------------
# file formats


def _lines(text: str) -> Iterator[tuple[int, list[str]]]:
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield no, line.split()


def _ints(tokens: list[str], no: int) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"line {no}: expected integers, got {' '.join(tokens)!r}") from None


def _read_text(src) -> str:
    if isinstance(src, Path) or (isinstance(src, str) and "\n" not in src and Path(src).exists()):
        return Path(src).read_text()
    return src


def parse_comments(text: str) -> dict:
    """key=value pairs embedded in `#` comment lines."""
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    out[k] = v
    return out


def parse_graph(text: str) -> Hypergraph4:
    rows = list(_lines(text))
    if not rows:
        raise ParseError("empty graph file")
    no, head = rows[0]
    if head[0] != "h4" or len(head) != 3:
        raise ParseError(f"line {no}: expected header 'h4 <N> <M>'")
    n, m = _ints(head[1:], no)
    if n < 0 or m < 0:
        raise ParseError(f"line {no}: negative size")
    quads = []
    for no, tok in rows[1:]:
        if tok[0] != "e" or len(tok) != 5:
            raise ParseError(f"line {no}: expected 'e v1 v2 v3 v4'")
        quads.append(_ints(tok[1:], no))
    if len(quads) != m:
        raise ParseError(f"header declares {m} edges, found {len(quads)}")
    try:
        return build_graph(n, quads)
    except (OutOfRange, DegenerateEdge) as exc:
        raise ParseError(str(exc)) from exc


def read_graph(src) -> Hypergraph4:
    return parse_graph(_read_text(src))


def format_graph(H: Hypergraph4, comments: dict | None = None) -> str:
    edges = H.edge_array()
    out = []
    for k, v in (comments or {}).items():
        out.append(f"# {k}={v}")
    out.append(f"h4 {H.vertex_count} {len(edges)}")
    out.extend(f"e {a} {b} {c} {d}" for a, b, c, d in edges.tolist())
    return "\n".join(out) + "\n"


def write_graph(H: Hypergraph4, path, comments: dict | None = None) -> None:
    Path(path).write_text(format_graph(H, comments))


def parse_partition(text: str) -> Partition:
    rows = list(_lines(text))
    if len(rows) != 2:
        raise ParseError("partition file needs 'part <N>' and one 'A ...' line")
    (n1, head), (n2, body) = rows
    if head[0] != "part" or len(head) != 2:
        raise ParseError(f"line {n1}: expected 'part <N>'")
    if body[0] != "A":
        raise ParseError(f"line {n2}: expected 'A v1 v2 ...'")
    (n,) = _ints(head[1:], n1)
    side = _ints(body[1:], n2)
    if any(not 0 <= v < n for v in side) or len(set(side)) != len(side):
        raise ParseError(f"line {n2}: bad vertex list")
    return Partition.from_side_a(n, side)


def read_partition(src) -> Partition:
    return parse_partition(_read_text(src))


def format_partition(part: Partition) -> str:
    return f"part {part.vertex_count}\nA " + " ".join(map(str, sorted(part.side_a))) + "\n"


def write_partition(part: Partition, path) -> None:
    Path(path).write_text(format_partition(part))


def parse_certificate(text: str):
    rows = list(_lines(text))
    if len(rows) != 1:
        raise ParseError("certificate file needs exactly one 'path ...' or 'cycle ...' line")
    no, tok = rows[0]
    seq = _ints(tok[1:], no)
    if tok[0] == "path":
        return TightPath(seq)
    if tok[0] == "cycle":
        return TightCycle(seq)
    raise ParseError(f"line {no}: expected 'path' or 'cycle'")


def read_certificate(src):
    return parse_certificate(_read_text(src))


def format_certificate(C) -> str:
    kind = "cycle" if isinstance(C, TightCycle) else "path"
    return kind + " " + " ".join(map(str, C.sequence)) + "\n"


def write_certificate(C, path) -> None:
    Path(path).write_text(format_certificate(C))


# ---------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SolverParams:
    """Threshold profile and solver knobs.

    The desk profile decouples the thresholds; `paper(eps)` keeps the
    cascade eps0=eps^4, eps1=eps^3, eps2=eps^2, eps3=eps, eps4=40eps,
    eps5=120eps.
    """

    eps0: float = 0.1
    eps1: float = 0.1
    eps2: float = 0.1
    eps3: float = 0.1
    eps4: float = 0.15
    eps5: float = 0.2
    sample_rate_numerator: int = 60
    connector_retry_budget: int = 64
    slack_c2: float = 8.0
    slack_c3: float = 1.0
    min_solver_n: int = 24
    rng_seed: int = 0
    profile: str = "desk"
    # knobs of the completion step
    seq_c: float = 0.05
    absorber_cap: float = 0.75
    big_fraction: float = 0.9
    tail_fraction: float = 0.3
    anarchist_budget: float = 5.0
    search_connectors: bool = True
    attempts: int = 6

    def __post_init__(self):
        for name in ("eps1", "eps2", "eps3", "eps5"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("eps0", "eps4"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.sample_rate_numerator <= 0 or self.connector_retry_budget <= 0:
            raise ValueError("sample rate numerator and retry budget must be positive")

    @classmethod
    def desk(cls, **kw) -> "SolverParams":
        return cls(**kw)

    @classmethod
    def paper(cls, eps: float = 1e-3, **kw) -> "SolverParams":
        return cls(eps0=eps ** 4, eps1=eps ** 3, eps2=eps ** 2, eps3=eps,
                   eps4=40 * eps, eps5=120 * eps, profile="paper", **kw)

    def with_(self, **kw) -> "SolverParams":
        from dataclasses import replace
        return replace(self, **kw)

    @property
    def relaxed(self) -> tuple[float, float, float]:
        """Vertex/pair/triple scales used for sequencing after the transfer."""
        e5 = self.eps5
        return (min(4 * e5, 0.99), e5 ** 0.75, e5 ** 0.5)

    @property
    def working(self) -> tuple[float, float, float]:
        """Scale for end triples, connectors, bridges and absorbers."""
        e5 = self.eps5
        return (e5, e5 ** 0.75, e5 ** 0.5)

    def sample_rate(self, n: int) -> float:
        return min(1.0, self.sample_rate_numerator / max(n, 1))
