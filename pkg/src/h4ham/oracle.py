"""Exact ground truth at small N.

Hamiltonicity is decided by a depth-first search over states
(visited mask, ordered tail triple) with memoisation of dead states,
which is the subset DP explored in reachability order. Answers are
certified: a YES comes with a witness that passes the core verifier.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import (
    Hypergraph4,
    Partition,
    TightCycle,
    TightPath,
    min_codegree,
    verify_tight_cycle,
    verify_tight_path,
)
from .errors import TooLarge
from .extremal import BApproximation, build_h0, build_h0_prime, complete_graph

MAX_HAM_N = 16
MAX_B_N = 20
MAX_SCAN_N = 14


def _neighbour_table(H: Hypergraph4) -> list[int]:
    n = H.vertex_count
    words = H.words[..., 0].reshape(-1)  # n <= 64 here
    return [int(x) for x in words.tolist()]


class _Search:
    def __init__(self, H: Hypergraph4):
        self.n = H.vertex_count
        self.nb = _neighbour_table(H)
        self.full = (1 << self.n) - 1
        self.dead = set()
        self.states = 0

    def extend(self, mask: int, a: int, b: int, c: int, out: list) -> bool:
        """Try to cover all vertices starting from tail (a, b, c)."""
        if mask == self.full:
            return True
        n = self.n
        key = (mask << 12) | (a << 8) | (b << 4) | c
        if key in self.dead:
            return False
        self.states += 1
        cand = self.nb[(a * n + b) * n + c] & ~mask
        while cand:
            low = cand & -cand
            d = low.bit_length() - 1
            cand ^= low
            out.append(d)
            if self.extend(mask | low, b, c, d, out):
                return True
            out.pop()
        self.dead.add(key)
        return False


def _guard(H: Hypergraph4, cap: int, what: str) -> None:
    if H.vertex_count > cap:
        raise TooLarge(f"{what} supports N <= {cap}, got {H.vertex_count}")


def exact_ham_path(H: Hypergraph4) -> TightPath | None:
    """A tight Hamiltonian path, or None when none exists."""
    _guard(H, MAX_HAM_N, "exact_ham_path")
    n = H.vertex_count
    if n == 0:
        return TightPath(())
    if n < 4:
        # no window to check: any ordering is a path
        return TightPath(tuple(range(n)))
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 10 * n + 100))
    s = _Search(H)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if len({a, b, c}) < 3:
                    continue
                out = [a, b, c]
                if s.extend((1 << a) | (1 << b) | (1 << c), a, b, c, out):
                    P = TightPath(out)
                    assert verify_tight_path(H, P)
                    return P
    return None


def exact_ham_cycle(H: Hypergraph4) -> TightCycle | None:
    """A tight Hamiltonian cycle, or None when none exists (N >= 5)."""
    _guard(H, MAX_HAM_N, "exact_ham_cycle")
    n = H.vertex_count
    if n < 5:
        return None
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 10 * n + 100))
    nb = _neighbour_table(H)

    def has(a, b, c, d):
        return (nb[(a * n + b) * n + c] >> d) & 1

    # vertex 0 starts the sequence (rotation); one search per start pair,
    # since closing the cycle depends on it
    for b in range(1, n):
        for c in range(1, n):
            if b == c:
                continue
            s = _Search(H)
            start = 1 | (1 << b) | (1 << c)
            full = s.full

            def close(mask, x, y, z, out):
                if mask == full:
                    return has(x, y, z, 0) and has(y, z, 0, b) and has(z, 0, b, c)
                key = (mask << 12) | (x << 8) | (y << 4) | z
                if key in s.dead:
                    return False
                cand = nb[(x * n + y) * n + z] & ~mask
                while cand:
                    low = cand & -cand
                    d = low.bit_length() - 1
                    cand ^= low
                    out.append(d)
                    if close(mask | low, y, z, d, out):
                        return True
                    out.pop()
                s.dead.add(key)
                return False

            out = [0, b, c]
            if close(start, 0, b, c, out):
                C = TightCycle(out)
                assert verify_tight_cycle(H, C)
                return C
    return None


# ---------------------------------------------------------------------
# b(H)


def _edge_masks(H: Hypergraph4) -> np.ndarray:
    e = H.edge_array()
    if len(e) == 0:
        return np.zeros(0, dtype=np.uint32)
    return np.bitwise_or.reduce(np.left_shift(np.uint32(1), e.astype(np.uint32)), axis=1)


def exhaustive_b(H: Hypergraph4) -> BApproximation:
    """Minimum AABB count over all partitions with |A| = ceil(N/2)."""
    _guard(H, MAX_B_N, "exhaustive_b")
    n = H.vertex_count
    size_a = (n + 1) // 2
    em = _edge_masks(H)
    best_val, best_mask = None, None
    chunk = []

    def flush():
        nonlocal best_val, best_mask
        if not chunk:
            return
        pm = np.array(chunk, dtype=np.uint32)
        if len(em):
            counts = (np.bitwise_count(pm[:, None] & em[None, :]) == 2).sum(axis=1)
        else:
            counts = np.zeros(len(pm), dtype=np.int64)
        i = int(np.argmin(counts))
        if best_val is None or counts[i] < best_val:
            best_val, best_mask = int(counts[i]), int(pm[i])
        chunk.clear()

    for side in combinations(range(n), size_a):
        chunk.append(sum(1 << v for v in side))
        if len(chunk) >= 4096:
            flush()
    flush()
    if best_mask is None:
        return BApproximation(0, Partition.from_side_a(n, range(size_a)), True)
    side_a = [v for v in range(n) if (best_mask >> v) & 1]
    return BApproximation(best_val, Partition.from_side_a(n, side_a), True)


# ---------------------------------------------------------------------
# threshold tables


@dataclass(frozen=True)
class ScanRow:
    family: str
    vertex_count: int
    min_codegree: int
    b_value: int
    has_path: bool
    has_cycle: bool


def family_graph(family: str, n: int) -> Hypergraph4:
    if family == "h0":
        return build_h0((n + 1) // 2, n // 2, False)
    if family == "h0prime":
        m = n - 1
        return build_h0_prime((m + 1) // 2, m // 2)
    if family == "complete":
        return complete_graph(n)
    raise ValueError(f"unknown family {family!r}")


def threshold_scan(family, sizes) -> list[ScanRow]:
    """(codegree, b, path verdict, cycle verdict) for each N in `sizes`."""
    if isinstance(sizes, int):
        sizes = [sizes]
    rows = []
    for n in sizes:
        if n > MAX_SCAN_N:
            raise TooLarge(f"threshold_scan supports N <= {MAX_SCAN_N}, got {n}")
        H = family(n) if callable(family) else family_graph(family, n)
        name = getattr(family, "__name__", family)
        rows.append(ScanRow(
            family=str(name),
            vertex_count=n,
            min_codegree=min_codegree(H),
            b_value=exhaustive_b(H).value,
            has_path=exact_ham_path(H) is not None,
            has_cycle=exact_ham_cycle(H) is not None,
        ))
    return rows


def format_scan(rows) -> str:
    out = ["family,N,min_codegree,b,path,cycle"]
    for r in rows:
        out.append(f"{r.family},{r.vertex_count},{r.min_codegree},{r.b_value},"
                   f"{int(r.has_path)},{int(r.has_cycle)}")
    return "\n".join(out) + "\n"


__all__ = [
    "BApproximation",
    "ScanRow",
    "exact_ham_cycle",
    "exact_ham_path",
    "exhaustive_b",
    "format_scan",
    "threshold_scan",
]
