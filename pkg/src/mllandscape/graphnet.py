"""Unweighted, undirected network of minima linked by transition states."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MinimaGraph:
    nodes: tuple
    edges: tuple                 # sorted (a, b) pairs with a < b
    adjacency: dict

    @property
    def degrees(self) -> dict:
        return {n: len(self.adjacency[n]) for n in self.nodes}


def graph_from_edges(nodes, edges) -> MinimaGraph:
    nodes = tuple(sorted(set(nodes)))
    clean = set()
    for a, b in edges:
        if a == b:
            continue
        clean.add((min(a, b), max(a, b)))
    adj = {n: [] for n in nodes}
    for a, b in sorted(clean):
        adj[a].append(b)
        adj[b].append(a)
    adj = {n: tuple(sorted(v)) for n, v in adj.items()}
    return MinimaGraph(nodes, tuple(sorted(clean)), adj)


def build_graph(db) -> MinimaGraph:
    """One node per minimum; one edge per pair of minima joined by any TS."""
    return graph_from_edges(db.minima.keys(), (ts.min_pair for ts in db.transition_states.values()))


def bfs_distances(g: MinimaGraph, source) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def connected_components(g: MinimaGraph) -> list[list]:
    seen, comps = set(), []
    for n in g.nodes:
        if n in seen:
            continue
        comp = sorted(bfs_distances(g, n))
        seen.update(comp)
        comps.append(comp)
    return comps


def graph_stats(g: MinimaGraph) -> dict:
    """Degree, path-length and clustering statistics.

    Path averages run over connected (unordered) pairs only.  With no such
    pair the path entries are None.
    """
    n = len(g.nodes)
    deg = np.array([len(g.adjacency[v]) for v in g.nodes], dtype=int)
    total, count, diameter = 0, 0, 0
    for s in g.nodes:
        for t, d in bfs_distances(g, s).items():
            if t != s:
                total += d
                count += 1
                diameter = max(diameter, d)
    # ordered pairs double both sums, so the ratio is the unordered average
    avg_path = total / count if count else None

    closed, triples = 0, 0
    local = []
    for v in g.nodes:
        nb = g.adjacency[v]
        k = len(nb)
        links = sum(1 for i, a in enumerate(nb) for b in nb[i + 1:] if b in g.adjacency[a])
        closed += links
        pairs = k * (k - 1) // 2
        triples += pairs
        local.append(links / pairs if pairs else 0.0)
    # closed pairs summed over nodes = 3 * triangles
    clustering = closed / triples if triples else 0.0
    hist = np.bincount(deg).tolist() if n else []
    return {
        "n_nodes": n,
        "n_edges": len(g.edges),
        "avg_degree": float(deg.mean()) if n else 0.0,
        "avg_shortest_path": avg_path,
        "diameter": diameter if count else None,
        "global_clustering": float(clustering),
        "mean_local_clustering": float(np.mean(local)) if n else 0.0,
        "degree_histogram": hist,
        "n_components": len(connected_components(g)),
    }


def export_dot(g: MinimaGraph, path=None) -> str:
    lines = ["graph minima {"]
    for v in g.nodes:
        lines.append(f'  {v} [degree={len(g.adjacency[v])}];')
    for a, b in g.edges:
        lines.append(f"  {a} -- {b};")
    lines.append("}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
