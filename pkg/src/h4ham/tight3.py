"""Tight walks in dense 3-graphs and bipartite matchings.

A 3-graph is given as a boolean array `ok` indexed by ordered vertex
triples (symmetric in its three arguments). The walk engine orders a
pool of vertices between a fixed head and a fixed tail so that every
three consecutive vertices form an edge.
"""

from __future__ import annotations

import numpy as np


class WalkBudget(Exception):
    pass


def _windows_ok(ok, seq) -> bool:
    return all(ok[seq[i], seq[i + 1], seq[i + 2]] for i in range(len(seq) - 2))


class _Walker:
    def __init__(self, ok, head, pool, tail, rng, budget):
        self.ok = ok
        self.head = list(head)
        self.pool = np.array(sorted(pool), dtype=np.int64)
        self.tail = list(tail)
        self.rng = rng
        self.budget = budget
        self.dead = set()
        self.index = {int(v): i for i, v in enumerate(self.pool)}

    def _closes(self, seq) -> bool:
        ok = self.ok
        full = seq[-2:] + self.tail
        return all(ok[full[i], full[i + 1], full[i + 2]] for i in range(len(full) - 2))

    def run(self):
        m = len(self.pool)
        free = np.ones(m, dtype=bool)
        seq = list(self.head)
        if m == 0:
            return [] if self._closes(seq) else None
        out = self._go(seq, free, 0)
        return None if out is None else out[len(self.head):]

    def _go(self, seq, free, mask):
        p, q = seq[-2], seq[-1]
        left = int(free.sum())
        if left == 0:
            return list(seq) if self._closes(seq) else None
        key = (mask, p, q)
        if key in self.dead:
            return None
        self.budget -= 1
        if self.budget < 0:
            raise WalkBudget
        ok = self.ok
        cand = self.pool[free & ok[p, q, self.pool]]
        if len(cand) == 0:
            self.dead.add(key)
            return None
        if left == 1:
            v = int(cand[0])
            seq.append(v)
            out = list(seq) if self._closes(seq) else None
            seq.pop()
            if out is None:
                self.dead.add(key)
            return out
        # fewest onward options first, random tie-break
        onward = np.array([int((free & ok[q, v, self.pool]).sum()) for v in cand])
        onward = onward - 1  # v itself is still marked free
        order = np.lexsort((self.rng.random(len(cand)), onward))
        if left > 2:
            order = [i for i in order if onward[i] > 0] or list(order)
        for i in order:
            v = int(cand[i])
            j = self.index[v]
            free[j] = False
            seq.append(v)
            out = self._go(seq, free, mask | (1 << j))
            seq.pop()
            free[j] = True
            if out is not None:
                return out
        self.dead.add(key)
        return None


def tight_walk(ok, head, pool, tail, rng, budget: int = 20000, restarts: int = 8):
    """Order `pool` so head + order + tail has every consecutive triple in `ok`.

    head needs at least two vertices. Returns the order or None when the
    search exhausted (None is definitive only if no budget ran out).
    """
    head = [int(v) for v in head]
    tail = [int(v) for v in tail]
    if len(head) < 2:
        raise ValueError("head needs two vertices")
    if not _windows_ok(ok, head) or not _windows_ok(ok, tail):
        return None
    exhausted = True
    for _ in range(max(1, restarts)):
        w = _Walker(ok, head, pool, tail, rng, budget)
        try:
            out = w.run()
        except WalkBudget:
            exhausted = False
            continue
        if out is not None or exhausted:
            return out
    return None


def exact_walk(ok, head, pool, tail):
    """Unbounded exact version of tight_walk (small pools only)."""
    rng = np.random.default_rng(0)
    w = _Walker(ok, [int(v) for v in head], pool, [int(v) for v in tail], rng, budget=1 << 62)
    return w.run()


# ---------------------------------------------------------------------
# bipartite matching


def max_matching(adj: list[list[int]], right_size: int) -> list[int]:
    """Maximum matching by augmenting paths; returns match of each left vertex (-1 if none)."""
    match_left = [-1] * len(adj)
    match_right = [-1] * right_size

    def augment(u, seen):
        for v in adj[u]:
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] < 0 or augment(match_right[v], seen):
                match_left[u] = v
                match_right[v] = u
                return True
        return False

    # cheap greedy start, then augment
    for u in sorted(range(len(adj)), key=lambda x: len(adj[x])):
        for v in adj[u]:
            if match_right[v] < 0:
                match_left[u] = v
                match_right[v] = u
                break
    for u in range(len(adj)):
        if match_left[u] < 0:
            augment(u, [False] * right_size)
    return match_left


def min_degree_core(adj_sets: dict) -> dict:
    """Largest subgraph in which every vertex keeps at least half its original degree.

    Peels vertices whose degree has fallen below half of the starting
    degree; `adj_sets` maps vertex -> set of neighbours (symmetric).
    """
    start = {v: len(nb) for v, nb in adj_sets.items()}
    live = {v: set(nb) for v, nb in adj_sets.items()}
    queue = [v for v in live if 2 * len(live[v]) < start[v] or not live[v]]
    gone = set()
    while queue:
        v = queue.pop()
        if v in gone:
            continue
        gone.add(v)
        for w in live[v]:
            if w in gone:
                continue
            live[w].discard(v)
            if 2 * len(live[w]) < start[w] or not live[w]:
                queue.append(w)
        live[v] = set()
    return {v: nb for v, nb in live.items() if v not in gone}
