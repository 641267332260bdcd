"""Multigraph two-factor decomposition.

A multigraph with maximum degree 2D splits into at most D spanning subgraphs
of maximum degree 2.  The construction here: pair odd-degree nodes with dummy
edges so every degree is even, orient edges along Euler circuits (so each
node's out- and in-degree are both half its degree, hence at most D), pad the
resulting bipartite out/in multigraph to D-regular with more dummies, then
peel off D perfect matchings.  Each matching touches every node at most once
on each side, so its real edges form a subgraph of degree at most 2.

Everything is deterministic: circuits start at the lowest node id and consume
edges in insertion order, so identical graphs decompose identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

from .core import EcfsError, Instance


@dataclass(frozen=True)
class MultiGraph:
    """Edges are (edge id, u, v); parallel edges allowed, self-loops rejected."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        node_set = set(self.nodes)
        seen = set()
        for eid, u, v in self.edges:
            if u == v:
                raise EcfsError(f"edge {eid}: self-loop")
            if u not in node_set or v not in node_set:
                raise EcfsError(f"edge {eid}: endpoint not in node set")
            if eid in seen:
                raise EcfsError(f"duplicate edge id {eid}")
            seen.add(eid)

    @classmethod
    def from_jobs(cls, jobs) -> "MultiGraph":
        nodes = sorted({n for j in jobs for n in (j.u, j.v)})
        return cls(tuple(nodes), tuple((j.id, j.u, j.v) for j in jobs))

    @classmethod
    def from_instance(cls, inst: Instance) -> "MultiGraph":
        return cls(tuple(nd.id for nd in inst.nodes), tuple((j.id, j.u, j.v) for j in inst.jobs))

    def degrees(self) -> dict[int, int]:
        deg = {n: 0 for n in self.nodes}
        for _, u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def max_degree(self) -> int:
        return max(self.degrees().values(), default=0)


@dataclass(frozen=True)
class TwoFactorSet:
    factors: tuple[frozenset[int], ...]


def verify_two_factorization(g: MultiGraph, tf: TwoFactorSet) -> None:
    """Brute-force invariant check; raises AssertionError on any violation."""
    all_ids = sorted(eid for eid, _, _ in g.edges)
    covered = sorted(eid for factor in tf.factors for eid in factor)
    assert covered == all_ids, "factors do not partition the edge set"
    by_id = {eid: (u, v) for eid, u, v in g.edges}
    for factor in tf.factors:
        deg: dict[int, int] = {}
        for eid in factor:
            u, v = by_id[eid]
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        assert all(d <= 2 for d in deg.values()), "factor has degree above 2"
    limit = ceil(g.max_degree() / 2)
    assert len(tf.factors) <= limit, f"{len(tf.factors)} factors exceed {limit}"


def _euler_orient(
    nodes: list[int], edges: list[tuple[int, int]]
) -> list[tuple[int, int, int]]:
    """Orient an even-degree multigraph along Euler circuits.

    ``edges`` are (u, v) indexed by position; returns (edge index, tail, head).
    """
    adj: dict[int, list[int]] = {n: [] for n in nodes}
    for idx, (u, v) in enumerate(edges):
        adj[u].append(idx)
        adj[v].append(idx)
    used = [False] * len(edges)
    ptr = {n: 0 for n in nodes}
    oriented: list[tuple[int, int, int]] = []

    for start in nodes:
        if ptr[start] >= len(adj[start]):
            continue
        stack: list[tuple[int, int]] = [(start, -1)]
        while stack:
            v, in_edge = stack[-1]
            advanced = False
            while ptr[v] < len(adj[v]):
                e = adj[v][ptr[v]]
                ptr[v] += 1
                if not used[e]:
                    used[e] = True
                    eu, ev = edges[e]
                    w = ev if eu == v else eu
                    stack.append((w, e))
                    advanced = True
                    break
            if advanced:
                continue
            stack.pop()
            if in_edge != -1:
                tail = stack[-1][0]
                oriented.append((in_edge, tail, v))
    return oriented


def _perfect_matching(
    lefts: list[int], adj: dict[int, list[int]], edge_head: dict[int, int]
) -> dict[int, int]:
    """Kuhn's algorithm; returns left node -> chosen edge index."""
    match_left: dict[int, int] = {}
    match_right: dict[int, int] = {}
    edge_tail = {}

    def try_augment(u: int, visited: set[int]) -> bool:
        for e in adj[u]:
            v = edge_head[e]
            if v in visited:
                continue
            visited.add(v)
            if v not in match_right or try_augment(edge_tail[match_right[v]], visited):
                match_left[u] = e
                match_right[v] = e
                edge_tail[e] = u
                return True
        return False

    for u in lefts:
        for e in adj[u]:
            edge_tail[e] = u
    for u in lefts:
        if not try_augment(u, set()):
            raise AssertionError("regular bipartite multigraph without perfect matching")
    return match_left


def two_factor_decomposition(g: MultiGraph) -> TwoFactorSet:
    """Split the edge set into at most ceil(max degree / 2) degree-2 subgraphs."""
    if not g.edges:
        return TwoFactorSet(())
    big_d = ceil(g.max_degree() / 2)

    # Work edges: real ones first (insertion order), then dummies pairing
    # odd-degree nodes so Euler circuits exist.
    work_edges: list[tuple[int, int]] = [(u, v) for _, u, v in g.edges]
    real_ids = [eid for eid, _, _ in g.edges]
    deg = g.degrees()
    odd = sorted(n for n in g.nodes if deg[n] % 2 == 1)
    for a, b in zip(odd[0::2], odd[1::2]):
        work_edges.append((a, b))

    nodes = sorted(g.nodes)
    oriented = _euler_orient(nodes, work_edges)

    out_deg = {n: 0 for n in nodes}
    in_deg = {n: 0 for n in nodes}
    # Bipartite edge tables: index -> (work edge index or -1 for padding), head, tail
    b_tail: dict[int, int] = {}
    b_head: dict[int, int] = {}
    b_source: dict[int, int] = {}
    for b_idx, (work_idx, tail, head) in enumerate(sorted(oriented)):
        b_tail[b_idx] = tail
        b_head[b_idx] = head
        b_source[b_idx] = work_idx
        out_deg[tail] += 1
        in_deg[head] += 1

    active_nodes = [n for n in nodes if deg[n] > 0]
    out_deficit: list[int] = []
    in_deficit: list[int] = []
    for n in active_nodes:
        out_deficit.extend([n] * (big_d - out_deg[n]))
        in_deficit.extend([n] * (big_d - in_deg[n]))
    next_idx = len(oriented)
    for tail, head in zip(out_deficit, in_deficit):
        b_tail[next_idx] = tail
        b_head[next_idx] = head
        b_source[next_idx] = -1
        next_idx += 1

    active = set(range(next_idx))
    factors: list[frozenset[int]] = []
    for _ in range(big_d):
        adj: dict[int, list[int]] = {n: [] for n in active_nodes}
        for e in sorted(active):
            adj[b_tail[e]].append(e)
        matching = _perfect_matching(active_nodes, adj, b_head)
        chosen = sorted(matching.values())
        factor_ids = []
        for e in chosen:
            active.discard(e)
            src = b_source[e]
            if src >= 0 and src < len(real_ids):
                factor_ids.append(real_ids[src])
        if factor_ids:
            factors.append(frozenset(factor_ids))
    assert not active, "matching peel left edges uncovered"
    return TwoFactorSet(tuple(factors))
