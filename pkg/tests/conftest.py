from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import networkx as nx
import numpy as np
from hypothesis import strategies as st

from dummyless.graphs import OpenGraph

DATA = Path(__file__).resolve().parent.parent / "data"


@lru_cache(maxsize=None)
def atlas_graphs(max_n: int, min_n: int = 1) -> tuple[OpenGraph, ...]:
    """Every connected graph from the networkx atlas with min_n..max_n vertices (max_n <= 7)."""
    out = []
    for G in nx.graph_atlas_g()[1:]:
        n = G.number_of_nodes()
        if min_n <= n <= max_n and nx.is_connected(G):
            out.append(OpenGraph.from_edges(list(G.nodes), list(G.edges)))
    return tuple(out)


def random_connected_graph(rng: np.random.Generator, n: int, p_extra: float = 0.3) -> OpenGraph:
    """Random spanning tree plus independent extra edges."""
    edges = set()
    for v in range(1, n):
        edges.add((int(rng.integers(v)), v))
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in edges and rng.random() < p_extra:
                edges.add((a, b))
    return OpenGraph.from_edges(range(n), sorted(edges))


def random_bipartite_graph(rng: np.random.Generator, n: int, p_extra: float = 0.4) -> OpenGraph:
    """Connected bipartite graph: a random tree plus extra edges across a fixed bipartition."""
    while True:
        g = random_connected_graph(rng, n, 0.0)
        colour = g.two_coloring()
        extra = [
            (a, b)
            for a in range(n)
            for b in range(a + 1, n)
            if colour[a] != colour[b] and rng.random() < p_extra
        ]
        return OpenGraph.from_edges(range(n), sorted(set(g.edge_list) | set(extra)))


@st.composite
def connected_graphs(draw, min_n: int = 1, max_n: int = 7) -> OpenGraph:
    n = draw(st.integers(min_n, max_n))
    edges = set()
    for v in range(1, n):
        edges.add((draw(st.integers(0, v - 1)), v))
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in edges]
    if pairs:
        flags = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
        edges |= {p for p, f in zip(pairs, flags) if f}
    return OpenGraph.from_edges(range(n), sorted(edges))
