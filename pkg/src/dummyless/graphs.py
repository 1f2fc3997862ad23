"""Open graphs G = (V, E, I, O) and the JSON graph file format."""

from __future__ import annotations

import json
from collections import deque
from collections.abc import Hashable, Iterable
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

Vertex = Hashable


class GraphError(ValueError):
    """Raised for malformed or unsupported graphs."""


@dataclass(frozen=True)
class OpenGraph:
    """Undirected simple graph with input/output vertex sets and an optional partial order.

    Vertex order is the insertion order of ``vertices``; it fixes the qubit
    index of each vertex and the tensor-factor order of every Pauli string.
    """

    vertices: tuple[Vertex, ...]
    edges: frozenset[frozenset]
    inputs: tuple[Vertex, ...] = ()
    outputs: tuple[Vertex, ...] = ()
    order: tuple[tuple[Vertex, Vertex], ...] = ()
    _adj: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if len(set(self.vertices)) != len(self.vertices):
            raise GraphError("duplicate vertex labels")
        vset = set(self.vertices)
        adj: dict[Vertex, set] = {v: set() for v in self.vertices}
        for e in self.edges:
            if len(e) != 2:
                raise GraphError(f"self-loop or malformed edge {set(e)}")
            a, b = tuple(e)
            if a not in vset or b not in vset:
                raise GraphError(f"edge {a}-{b} references unknown vertex")
            adj[a].add(b)
            adj[b].add(a)
        for name, sub in (("inputs", self.inputs), ("outputs", self.outputs)):
            missing = [v for v in sub if v not in vset]
            if missing:
                raise GraphError(f"{name} not in V: {missing}")
        for a, b in self.order:
            if a not in vset or b not in vset:
                raise GraphError(f"order pair ({a}, {b}) references unknown vertex")
        object.__setattr__(self, "_adj", {v: frozenset(n) for v, n in adj.items()})
        if not self.vertices:
            raise GraphError("graph has no vertices")
        if not self.is_connected():
            raise GraphError("graph is disconnected")

    @classmethod
    def from_edges(
        cls,
        vertices: Iterable[Vertex],
        edges: Iterable[tuple[Vertex, Vertex]],
        inputs: Iterable[Vertex] = (),
        outputs: Iterable[Vertex] = (),
        order: Iterable[tuple[Vertex, Vertex]] = (),
    ) -> OpenGraph:
        es = set()
        for a, b in edges:
            if a == b:
                raise GraphError(f"self-loop at {a}")
            es.add(frozenset((a, b)))
        return cls(
            tuple(vertices),
            frozenset(es),
            tuple(inputs),
            tuple(outputs),
            tuple((a, b) for a, b in order),
        )

    # -- structure -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def index(self) -> dict[Vertex, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    def neighbors(self, v: Vertex) -> frozenset:
        try:
            return self._adj[v]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def degree(self, v: Vertex) -> int:
        return len(self.neighbors(v))

    @cached_property
    def odd_vertices(self) -> tuple[Vertex, ...]:
        return tuple(v for v in self.vertices if len(self._adj[v]) % 2 == 1)

    @cached_property
    def even_vertices(self) -> tuple[Vertex, ...]:
        return tuple(v for v in self.vertices if len(self._adj[v]) % 2 == 0)

    @cached_property
    def edge_list(self) -> tuple[tuple[Vertex, Vertex], ...]:
        """Edges as index-ordered pairs, sorted for deterministic iteration."""
        idx = self.index
        pairs = []
        for e in self.edges:
            a, b = sorted(e, key=idx.__getitem__)
            pairs.append((a, b))
        pairs.sort(key=lambda p: (idx[p[0]], idx[p[1]]))
        return tuple(pairs)

    def mask(self, subset: Iterable[Vertex]) -> int:
        """Bitmask (bit i = vertex i) of a vertex subset."""
        m = 0
        idx = self.index
        for v in subset:
            if v not in idx:
                raise GraphError(f"unknown vertex {v!r}")
            m |= 1 << idx[v]
        return m

    def subset(self, mask: int) -> frozenset:
        return frozenset(v for i, v in enumerate(self.vertices) if mask >> i & 1)

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        return tuple(self.mask(self._adj[v]) for v in self.vertices)

    def is_connected(self) -> bool:
        start = self.vertices[0]
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in self._adj[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == len(self.vertices)

    def is_bipartite(self) -> bool:
        return self.two_coloring() is not None

    def two_coloring(self) -> dict[Vertex, int] | None:
        color: dict[Vertex, int] = {self.vertices[0]: 0}
        queue = deque([self.vertices[0]])
        while queue:
            u = queue.popleft()
            for w in self._adj[u]:
                if w not in color:
                    color[w] = 1 - color[u]
                    queue.append(w)
                elif color[w] == color[u]:
                    return None
        return color

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        g.add_edges_from(self.edge_list)
        return g

    # -- serialisation -------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "vertices": [str(v) for v in self.vertices],
            "edges": [[str(a), str(b)] for a, b in self.edge_list],
            "inputs": [str(v) for v in self.inputs],
            "outputs": [str(v) for v in self.outputs],
        }
        if self.order:
            d["order"] = [[str(a), str(b)] for a, b in self.order]
        return d

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> OpenGraph:
        try:
            vertices = [str(v) for v in data["vertices"]]
            edges = [(str(a), str(b)) for a, b in data.get("edges", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"malformed graph object: {exc}") from exc
        return cls.from_edges(
            vertices,
            edges,
            [str(v) for v in data.get("inputs", [])],
            [str(v) for v in data.get("outputs", [])],
            [(str(a), str(b)) for a, b in data.get("order", [])],
        )


def load_graph(path: str | Path) -> OpenGraph:
    """Read a graph file.  JSON syntax errors surface with line/column info."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return OpenGraph.from_json(data)


# -- constructors used throughout the tests and CLI ---------------------------


def line_graph(n: int, inputs=None, outputs=None) -> OpenGraph:
    vs = list(range(1, n + 1))
    return OpenGraph.from_edges(
        vs,
        [(i, i + 1) for i in range(1, n)],
        inputs if inputs is not None else [1],
        outputs if outputs is not None else [n],
    )


def cycle_graph(n: int) -> OpenGraph:
    vs = list(range(1, n + 1))
    return OpenGraph.from_edges(vs, [(i, i % n + 1) for i in range(1, n + 1)])


def star_graph(leaves: int) -> OpenGraph:
    vs = list(range(leaves + 1))
    return OpenGraph.from_edges(vs, [(0, i) for i in range(1, leaves + 1)])


def brickwork_graph(rows: int, cols: int) -> OpenGraph:
    """Brickwork layout with vertices ``(row, col)``, 1-indexed.

    Rows are chained horizontally.  Bricks close with vertical edges at
    columns j and j+2 for j = 3 (mod 8) between rows i, i+1 with i odd and
    for j = 7 (mod 8) with i even.
    """
    if rows < 2 or cols < 3:
        raise GraphError("brickwork needs at least 2 rows and 3 columns")
    vs = [(i, j) for i in range(1, rows + 1) for j in range(1, cols + 1)]
    edges = [((i, j), (i, j + 1)) for i in range(1, rows + 1) for j in range(1, cols)]
    for i in range(1, rows):
        for j in range(1, cols + 1):
            if (j % 8 == 3 and i % 2 == 1) or (j % 8 == 7 and i % 2 == 0):
                for jj in (j, j + 2):
                    if jj <= cols:
                        edges.append(((i, jj), (i + 1, jj)))
    return OpenGraph.from_edges(
        vs,
        edges,
        [(i, 1) for i in range(1, rows + 1)],
        [(i, cols) for i in range(1, rows + 1)],
    )


def is_brickwork(g: OpenGraph) -> tuple[int, int] | None:
    """Return (rows, cols) if ``g`` is exactly a brickwork layout, else None."""
    try:
        rows = max(v[0] for v in g.vertices)
        cols = max(v[1] for v in g.vertices)
        ref = brickwork_graph(rows, cols)
    except (TypeError, IndexError, GraphError):
        return None
    if set(ref.vertices) == set(g.vertices) and ref.edges == g.edges:
        return rows, cols
    return None
