"""Graph-state stabilizers and the Z-free ("dummyless") generating sets."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass

from dummyless.graphs import GraphError, OpenGraph, Vertex
from dummyless.pauli import PauliCoeffMap, PauliOp, gf2_rank, pauli_mul


def canonical_generator(g: OpenGraph, v: Vertex) -> PauliOp:
    """S_v: X on ``v`` and Z on each neighbour."""
    i = g.index.get(v)
    if i is None:
        raise GraphError(f"unknown vertex {v!r}")
    return PauliOp(g.vertices, 1 << i, g.neighbor_masks[i])


def subset_stabilizer(g: OpenGraph, subset: Iterable[Vertex]) -> PauliOp:
    """Phase-tracked product of S_v over ``subset``."""
    return stabilizer_from_mask(g, g.mask(subset))


def stabilizer_from_mask(g: OpenGraph, mask: int) -> PauliOp:
    out = PauliOp.identity(g.vertices)
    nm = g.neighbor_masks
    for i in range(len(g.vertices)):
        if mask >> i & 1:
            out = pauli_mul(out, PauliOp(g.vertices, 1 << i, nm[i]))
    return out


def s0_operator(g: OpenGraph) -> PauliOp:
    """Z on every odd-degree vertex; identity when every degree is even."""
    return PauliOp.z_on(g.vertices, g.odd_vertices)


@dataclass(frozen=True)
class StabilizerSet:
    generators: tuple[PauliOp, ...]
    graph: OpenGraph

    def __len__(self) -> int:
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def rank(self) -> int:
        return gf2_rank(self.generators)

    def pairwise_commuting(self) -> bool:
        gens = self.generators
        return all(a.commutes(b) for i, a in enumerate(gens) for b in gens[i + 1 :])


def chains_from(g: OpenGraph, u: Vertex) -> dict[Vertex, tuple[Vertex, ...]]:
    """Induced chains from odd-degree ``u`` to every other reachable odd-degree vertex.

    Breadth-first search that only passes through even-degree vertices, so
    each returned path is a shortest path of ``G[V_even + {u, w}]`` and
    therefore induced: only consecutive vertices are adjacent.
    """
    if g.degree(u) % 2 == 0:
        raise GraphError(f"chain endpoint {u!r} has even degree")
    idx = g.index
    parent: dict[Vertex, Vertex | None] = {u: None}
    found: dict[Vertex, tuple[Vertex, ...]] = {}
    queue = deque([u])
    while queue:
        y = queue.popleft()
        for w in sorted(g.neighbors(y), key=idx.__getitem__):
            if w == u or w in parent or w in found:
                continue
            if g.degree(w) % 2 == 1:
                path = [w, y]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                found[w] = tuple(reversed(path))
            else:
                parent[w] = y
                queue.append(w)
    return found


def chain_spanning_tree(g: OpenGraph) -> list[tuple[Vertex, ...]]:
    """|V_odd| - 1 induced chains whose endpoints connect all odd-degree vertices."""
    odd = g.odd_vertices
    if not odd:
        return []
    tree: list[tuple[Vertex, ...]] = []
    seen = {odd[0]}
    queue = deque([odd[0]])
    idx = g.index
    while queue:
        u = queue.popleft()
        for w, path in sorted(chains_from(g, u).items(), key=lambda kv: idx[kv[0]]):
            if w not in seen:
                seen.add(w)
                tree.append(path)
                queue.append(w)
    if len(seen) != len(odd):
        raise GraphError("odd-degree vertices are not linked by chains")
    return tree


def dummyless_generators(g: OpenGraph) -> StabilizerSet:
    """|V| - 1 independent stabilizers made of I, X and Y only.

    Candidates are ``R_full``, ``R_full * S_v`` for even-degree v and
    ``R_full * prod_{w in chain} S_w`` for a spanning tree of chains between
    odd-degree vertices; the first |V| - 1 that are independent over GF(2)
    are kept.  A chain covering every vertex yields the identity, which is
    why ``R_full`` leads the list.
    """
    full_mask = (1 << len(g)) - 1
    masks = [full_mask]
    masks += [full_mask & ~g.mask([v]) for v in g.even_vertices]
    masks += [full_mask & ~g.mask(chain) for chain in chain_spanning_tree(g)]
    gens: list[PauliOp] = []
    rank = 0
    for m in masks:
        if len(gens) == len(g) - 1:
            break
        p = stabilizer_from_mask(g, m)
        if gf2_rank(gens + [p]) > rank:
            gens.append(p)
            rank += 1
    if len(gens) != len(g) - 1:
        raise GraphError(f"found only {len(gens)} Z-free generators")
    return StabilizerSet(tuple(gens), g)


def graph_state_coeffs(g: OpenGraph) -> PauliCoeffMap:
    """Pauli expansion of |G><G| = 2**-n * sum over the stabilizer group."""
    n = len(g)
    rho = PauliCoeffMap(g.vertices)
    for mask in range(1 << n):
        rho.add(stabilizer_from_mask(g, mask), 1.0 / 2**n)
    return rho
