"""Dummyless trappified tests, test strategies and detection-rate evaluation.

A test is identified by its trap set T.  Its stabilizer is prod_{v in T} S_v;
the hole set V \\ T is admissible when every hole has an even number of trap
neighbours, so the stabilizer carries only I, X and Y.  A pure-Z error E
flips the trap parity iff |E & T| is odd.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from dummyless.graphs import OpenGraph, Vertex, is_brickwork
from dummyless.pauli import PauliOp
from dummyless.sim import Angle8, Statevector, entangle_graph, apply_letter, plus_vector
from dummyless.stabilizers import chain_spanning_tree, chains_from, stabilizer_from_mask

PREP_ANGLE = {"X": Angle8(0), "Y": Angle8(2)}
SIMULATION_CAP = 12
EXHAUSTIVE_BLOCK_CAP = 20


class TrapError(ValueError):
    pass


def is_valid_holeset(g: OpenGraph, holes: Iterable[Vertex]) -> bool:
    hmask = g.mask(holes)
    tmask = ((1 << len(g)) - 1) & ~hmask
    return _valid_masks(g, hmask, tmask)


def _valid_masks(g: OpenGraph, hmask: int, tmask: int) -> bool:
    nm = g.neighbor_masks
    return all((nm[i] & tmask).bit_count() % 2 == 0 for i in range(len(g)) if hmask >> i & 1)


@dataclass(frozen=True)
class ErrorOp:
    """Pure-Z deviation on ``support``."""

    graph: OpenGraph
    support: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "support", frozenset(self.support))
        self.graph.mask(self.support)

    @classmethod
    def from_mask(cls, g: OpenGraph, mask: int) -> ErrorOp:
        return cls(g, g.subset(mask))

    @cached_property
    def mask(self) -> int:
        return self.graph.mask(self.support)

    @property
    def weight(self) -> int:
        return len(self.support)

    def to_pauli(self) -> PauliOp:
        return PauliOp.z_on(self.graph.vertices, self.support)

    def label(self) -> str:
        return self.to_pauli().letters


def harmless_error(g: OpenGraph) -> ErrorOp:
    """E*: Z on every odd-degree vertex."""
    return ErrorOp(g, frozenset(g.odd_vertices))


@dataclass(frozen=True)
class TrappifiedTest:
    graph: OpenGraph
    traps: frozenset
    stabilizer: PauliOp
    expected_parity: int

    @cached_property
    def trap_mask(self) -> int:
        return self.graph.mask(self.traps)

    @property
    def holes(self) -> frozenset:
        return frozenset(self.graph.vertices) - self.traps

    def prep_tag(self, v: Vertex) -> str:
        """'X', 'Y' or 'hole'."""
        letter = self.stabilizer.letter(v)
        return "hole" if letter == "I" else letter

    def prep_angles(self, rng: np.random.Generator) -> dict[Vertex, Angle8]:
        """Rotation of each vertex's |+> in a test round; holes get a uniform angle."""
        out = {}
        for v in self.graph.vertices:
            tag = self.prep_tag(v)
            out[v] = Angle8(int(rng.integers(8))) if tag == "hole" else PREP_ANGLE[tag]
        return out

    def decide(self, s: Mapping[Vertex, int]) -> int:
        """1 when the trap parity differs from the expected one (test failed)."""
        return (sum(s[v] for v in self.traps) + self.expected_parity) % 2


def algebraic_parity(stabilizer: PauliOp) -> int:
    """Expected X-basis parity of the traps from the stabilizer sign.

    Measuring X on a qubit prepared as |+_{pi/2}> and then entangled is
    measuring -Y on the graph state, so each Y letter contributes a sign.
    """
    if stabilizer.phase_exp % 2:
        raise TrapError("stabilizer is not Hermitian")
    sign_bit = stabilizer.phase_exp // 2
    n_y = (stabilizer.x_bits & stabilizer.z_bits).bit_count()
    return (sign_bit + n_y) % 2


def prepared_test_state(test: TrappifiedTest, hole_angles: Mapping[Vertex, Angle8] | None = None, error: ErrorOp | None = None) -> Statevector:
    """Prepared, entangled and optionally Z-deviated state of a test round."""
    g = test.graph
    sv = Statevector.empty(max(len(g), 1))
    for v in g.vertices:
        tag = test.prep_tag(v)
        angle = (hole_angles or {}).get(v, Angle8(0)) if tag == "hole" else PREP_ANGLE[tag]
        sv = sv.add_qubit(v, plus_vector(angle))
    sv = entangle_graph(sv, g)
    if error is not None:
        for v in error.support:
            sv = apply_letter(sv, v, "Z")
    return sv


def simulated_failure_probability(test: TrappifiedTest, error: ErrorOp | None = None, hole_angles=None) -> float:
    """Probability that measuring every qubit at angle 0 yields a failed test.

    Computed as (1 - <prod_{trap} X>)/2 on the exact state after flipping
    the expectation by the expected parity.
    """
    sv = prepared_test_state(test, hole_angles, error)
    flipped = sv.amps
    for v in test.traps:
        flipped = np.flip(flipped, axis=sv.axis(v))
    expval = float(np.vdot(sv.amps, flipped).real)
    p_odd = (1 - expval) / 2
    return p_odd if test.expected_parity == 0 else 1 - p_odd


def make_test(g: OpenGraph, traps: Iterable[Vertex], simulate: bool | None = None) -> TrappifiedTest:
    """Build the test with trap set ``traps``.

    The expected parity comes from the stabilizer sign; when the graph is
    small enough (or ``simulate`` is forced) it is cross-checked by an honest
    noiseless simulation with random hole angles.
    """
    traps = frozenset(traps)
    tmask = g.mask(traps)
    hmask = ((1 << len(g)) - 1) & ~tmask
    if not _valid_masks(g, hmask, tmask):
        raise TrapError(f"hole set {sorted(map(str, g.subset(hmask)))} has a hole with odd trap-neighbourhood")
    stab = stabilizer_from_mask(g, tmask)
    test = TrappifiedTest(g, traps, stab, algebraic_parity(stab))
    if simulate is None:
        simulate = len(g) <= SIMULATION_CAP
    if simulate:
        rng = np.random.default_rng(tmask)
        angles = {v: Angle8(int(rng.integers(8))) for v in g.vertices}
        if simulated_failure_probability(test, None, angles) > 1e-9:
            raise TrapError("honest simulation disagrees with the stabilizer parity")
    return test


def detects(t: TrappifiedTest, e: ErrorOp) -> bool:
    if t.graph != e.graph:
        raise TrapError("test and error live on different graphs")
    return (t.trap_mask & e.mask).bit_count() % 2 == 1


# -- distributions -----------------------------------------------------------


@dataclass(frozen=True)
class TestFamily:
    """Tests whose holes are ``base`` plus a uniformly random subset of ``blocks``.

    Blocks are pairwise disjoint and disjoint from ``base``.
    """

    weight: float
    base: frozenset = frozenset()
    blocks: tuple[frozenset, ...] = ()
    label: str = ""

    __test__ = False


@dataclass(frozen=True)
class TestDistribution:
    graph: OpenGraph
    families: tuple[TestFamily, ...]
    name: str = "explicit"

    __test__ = False

    def __post_init__(self) -> None:
        if any(f.weight < 0 for f in self.families):
            raise TrapError("negative weight")
        if self.total_weight > 1 + 1e-9:
            raise TrapError(f"weights sum to {self.total_weight} > 1")
        for f in self.families:
            seen = set(f.base)
            for b in f.blocks:
                if seen & b:
                    raise TrapError("overlapping blocks")
                seen |= b

    @property
    def total_weight(self) -> float:
        return float(sum(f.weight for f in self.families))

    @cached_property
    def _masks(self) -> list[tuple[float, int, list[int]]]:
        g = self.graph
        return [(f.weight, g.mask(f.base), [g.mask(b) for b in f.blocks]) for f in self.families]

    @classmethod
    def explicit(cls, g: OpenGraph, weighted_holes: Iterable[tuple[Iterable[Vertex], float]], name="explicit") -> TestDistribution:
        fams = tuple(TestFamily(float(w), frozenset(h)) for h, w in weighted_holes)
        d = cls(g, fams, name)
        d.validate()
        return d

    def n_tests(self) -> int:
        return sum(1 << len(f.blocks) for f in self.families)

    def hole_masks(self) -> dict[int, float]:
        """Every hole mask with its total probability (exhaustive enumeration)."""
        out: dict[int, float] = {}
        for weight, base, blocks in self._masks:
            if len(blocks) > EXHAUSTIVE_BLOCK_CAP:
                raise TrapError(f"{len(blocks)} blocks is too many to enumerate")
            p = weight / (1 << len(blocks))
            for choice in product((0, 1), repeat=len(blocks)):
                m = base
                for bit, b in zip(choice, blocks):
                    if bit:
                        m |= b
                out[m] = out.get(m, 0.0) + p
        return out

    def weighted_tests(self) -> list[tuple[TrappifiedTest, float]]:
        full = (1 << len(self.graph)) - 1
        return [
            (make_test(self.graph, self.graph.subset(full & ~h), simulate=False), p)
            for h, p in sorted(self.hole_masks().items())
        ]

    def validate(self) -> None:
        """Check every hole set the distribution can produce."""
        g = self.graph
        full = (1 << len(g)) - 1
        for weight, base, blocks in self._masks:
            if blocks and len(blocks) <= 12:
                masks = self._family_masks(base, blocks)
            else:
                masks = [base, base | sum(blocks)] + [base | b for b in blocks]
            for h in masks:
                if not _valid_masks(g, h, full & ~h):
                    raise TrapError(f"strategy {self.name!r} produces an invalid hole set")

    @staticmethod
    def _family_masks(base: int, blocks: list[int]) -> list[int]:
        out = [base]
        for b in blocks:
            out += [m | b for m in out]
        return out

    def sample_holes(self, rng: np.random.Generator) -> frozenset:
        return self.graph.subset(self.sample_hole_mask(rng))

    def sample_hole_mask(self, rng: np.random.Generator) -> int:
        weights = np.array([f.weight for f in self.families], dtype=float)
        if abs(weights.sum() - 1) > 1e-9:
            raise TrapError("cannot sample: weights do not sum to 1")
        k = int(rng.choice(len(weights), p=weights / weights.sum()))
        _, base, blocks = self._masks[k]
        bits = rng.integers(2, size=len(blocks))
        m = base
        for bit, b in zip(bits, blocks):
            if bit:
                m |= b
        return m

    def sample_test(self, rng: np.random.Generator, cache: dict | None = None) -> TrappifiedTest:
        h = self.sample_hole_mask(rng)
        if cache is not None and h in cache:
            return cache[h]
        full = (1 << len(self.graph)) - 1
        t = make_test(self.graph, self.graph.subset(full & ~h))
        if cache is not None:
            cache[h] = t
        return t

    def sample_trap_matrix(self, rng: np.random.Generator, samples: int) -> np.ndarray:
        """``samples`` x |V| 0/1 matrix of sampled trap sets."""
        n = len(self.graph)
        weights = np.array([f.weight for f in self.families], dtype=float)
        counts = rng.multinomial(samples, weights / weights.sum())
        rows = []
        for (w, base, blocks), c in zip(self._masks, counts):
            if c == 0:
                continue
            base_vec = _mask_vector(base, n)
            if blocks:
                block_mat = np.array([_mask_vector(b, n) for b in blocks], dtype=np.uint8)
                choice = rng.integers(2, size=(c, len(blocks)), dtype=np.uint8)
                holes = base_vec[None, :] | (choice @ block_mat).astype(np.uint8)
            else:
                holes = np.repeat(base_vec[None, :], c, axis=0)
            rows.append(1 - holes)
        return np.concatenate(rows, axis=0)

    def detection_probability(self, e: ErrorOp) -> float:
        """Closed-form detection probability.

        Within a family, if any block meets E in an odd number of vertices
        the parity is a fair coin; otherwise it is fixed by |E \\ base|.
        """
        total = 0.0
        full = (1 << len(self.graph)) - 1
        for weight, base, blocks in self._masks:
            if any((b & e.mask).bit_count() % 2 for b in blocks):
                total += weight / 2
            elif (full & ~base & e.mask).bit_count() % 2:
                total += weight
        return total

    def to_json(self) -> list[dict]:
        return [
            {"holes": sorted(str(v) for v in self.graph.subset(h)), "weight": p}
            for h, p in sorted(self.hole_masks().items())
        ]

    def empirical_json(self, rng: np.random.Generator, samples: int) -> list[dict]:
        counts: dict[int, int] = {}
        for _ in range(samples):
            h = self.sample_hole_mask(rng)
            counts[h] = counts.get(h, 0) + 1
        return [
            {"holes": sorted(str(v) for v in self.graph.subset(h)), "weight": c / samples}
            for h, c in sorted(counts.items())
        ]

    @classmethod
    def from_json(cls, g: OpenGraph, data: Sequence[Mapping]) -> TestDistribution:
        try:
            lookup = {str(v): v for v in g.vertices}
            items = [([lookup[str(v)] for v in d["holes"]], float(d["weight"])) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise TrapError(f"malformed distribution: {exc}") from exc
        return cls.explicit(g, items)


def _mask_vector(mask: int, n: int) -> np.ndarray:
    return np.array([mask >> i & 1 for i in range(n)], dtype=np.uint8)


def load_distribution(g: OpenGraph, path) -> TestDistribution:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("distribution", data.get("tests"))
    return TestDistribution.from_json(g, data)


# -- strategies ----------------------------------------------------------------


def proper_coloring(g: OpenGraph) -> dict[Vertex, int]:
    """Exact 2-colouring when bipartite, networkx greedy colouring otherwise."""
    two = g.two_coloring()
    if two is not None:
        return two
    import networkx as nx

    return nx.coloring.greedy_color(g.to_networkx(), strategy="largest_first")


def strategy_even(g: OpenGraph, coloring: Mapping[Vertex, int] | None = None) -> TestDistribution:
    """Pick a colour class uniformly; its even-degree vertices become holes independently with probability 1/2."""
    if coloring is None:
        coloring = proper_coloring(g)
    if set(coloring) != set(g.vertices):
        raise TrapError("colouring does not cover every vertex")
    for a, b in g.edge_list:
        if coloring[a] == coloring[b]:
            raise TrapError(f"improper colouring: {a!r} and {b!r} share colour {coloring[a]!r}")
    classes: dict[int, list] = {}
    for v in g.vertices:
        classes.setdefault(coloring[v], []).append(v)
    even = set(g.even_vertices)
    keys = sorted(classes)
    fams = tuple(
        TestFamily(
            1 / len(keys),
            frozenset(),
            tuple(frozenset([v]) for v in classes[c] if v in even),
            f"colour {c}",
        )
        for c in keys
    )
    d = TestDistribution(g, fams, "even")
    d.validate()
    return d


def _gf2_independent(vectors: list[int], candidate: int) -> bool:
    from dummyless.pauli import _rank_of_int_rows

    return _rank_of_int_rows(vectors + [candidate]) > _rank_of_int_rows(vectors)


def odd_chain_tests(g: OpenGraph) -> list[frozenset]:
    """Hole sets for the odd-degree strategy: the full-trap test plus chain tests.

    Chains are induced paths between odd-degree vertices through even-degree
    ones, so making a chain the hole set is admissible.  Tests are kept while
    their trap sets restricted to V_odd stay independent, until there are
    |V_odd| - 1 of them; they then span every even-weight pattern on V_odd.
    """
    odd = g.odd_vertices
    if len(odd) < 2:
        raise TrapError("the odd-degree strategy needs at least two odd-degree vertices")
    odd_mask = g.mask(odd)
    full = (1 << len(g)) - 1
    candidates = [frozenset()]
    candidates += [frozenset(c) for c in chain_spanning_tree(g)]
    idx = g.index
    for u in odd:
        for w, chain in sorted(chains_from(g, u).items(), key=lambda kv: idx[kv[0]]):
            candidates.append(frozenset(chain))
    chosen: list[frozenset] = []
    vecs: list[int] = []
    for holes in candidates:
        if len(chosen) == len(odd) - 1:
            break
        tvec = full & ~g.mask(holes) & odd_mask
        if tvec and _gf2_independent(vecs, tvec):
            chosen.append(holes)
            vecs.append(tvec)
    if len(chosen) != len(odd) - 1:
        raise TrapError("could not find enough independent chain tests")
    return chosen


def strategy_odd_chains(g: OpenGraph) -> TestDistribution:
    holes = odd_chain_tests(g)
    fams = tuple(
        TestFamily(1 / len(holes), h, (), "full" if not h else "chain") for h in holes
    )
    d = TestDistribution(g, fams, "odd")
    d.validate()
    return d


def even_bound(g: OpenGraph) -> float:
    return 1 / (2 * len(set(proper_coloring(g).values())))


def odd_bound(g: OpenGraph) -> float:
    return 1 / (len(g.odd_vertices) - 1)


def strategy_general(g: OpenGraph) -> TestDistribution:
    """Mix of the even and odd strategies balancing their guaranteed rates."""
    if len(g.odd_vertices) < 2:
        d = strategy_even(g)
        return TestDistribution(g, d.families, "general")
    if not g.even_vertices:
        d = strategy_odd_chains(g)
        return TestDistribution(g, d.families, "general")
    a, b = even_bound(g), odd_bound(g)
    p_even = b / (a + b)
    ev, od = strategy_even(g), strategy_odd_chains(g)
    fams = tuple(
        TestFamily(f.weight * p_even, f.base, f.blocks, "even/" + f.label) for f in ev.families
    ) + tuple(TestFamily(f.weight * (1 - p_even), f.base, f.blocks, "odd/" + f.label) for f in od.families)
    return TestDistribution(g, fams, "general")


def general_bound(g: OpenGraph) -> float:
    if len(g.odd_vertices) < 2:
        return even_bound(g)
    if not g.even_vertices:
        return odd_bound(g)
    a, b = even_bound(g), odd_bound(g)
    return a * b / (a + b)


def brickwork_chain_classes(g: OpenGraph) -> list[list[tuple]]:
    """Five classes of mutually non-adjacent chains covering the odd-degree brickwork vertices.

    One class holds the vertical pairs of odd vertices; four classes split
    the horizontal chains between consecutive odd vertices of a row by row
    parity and by the parity of the chain's position along the row.
    """
    dims = is_brickwork(g)
    if dims is None:
        raise TrapError("graph is not a brickwork layout")
    rows, cols = dims
    odd = set(g.odd_vertices)
    vertical = []
    for i in range(1, rows):
        for j in range(1, cols + 1):
            a, b = (i, j), (i + 1, j)
            if a in odd and b in odd and b in g.neighbors(a):
                vertical.append((a, b))
    horizontal: list[list[tuple]] = [[] for _ in range(4)]
    for i in range(1, rows + 1):
        row_odd = [j for j in range(1, cols + 1) if (i, j) in odd]
        for k in range(len(row_odd) - 1):
            chain = tuple((i, j) for j in range(row_odd[k], row_odd[k + 1] + 1))
            horizontal[2 * (i % 2) + k % 2].append(chain)
    classes = [vertical] + horizontal
    for cls in classes:
        used: set = set()
        for chain in cls:
            if used & set(chain):
                raise TrapError("brickwork chain class is not vertex-disjoint")
            used |= set(chain)
        for x, y in product(range(len(cls)), repeat=2):
            if x < y and any(b in g.neighbors(a) for a in cls[x] for b in cls[y]):
                raise TrapError("brickwork chain class has adjacent chains")
    return classes


def strategy_brickwork(g: OpenGraph) -> TestDistribution:
    """2/7: even-degree strategy on the bipartition; 5/7: one of five chain classes,
    each of its chains becoming holes independently with probability 1/2."""
    classes = brickwork_chain_classes(g)
    coloring = {v: (v[0] + v[1]) % 2 for v in g.vertices}
    ev = strategy_even(g, coloring)
    fams = [TestFamily(f.weight * 2 / 7, f.base, f.blocks, "even/" + f.label) for f in ev.families]
    for k, cls in enumerate(classes):
        fams.append(TestFamily(1 / 7, frozenset(), tuple(frozenset(c) for c in cls), f"chains {k}"))
    d = TestDistribution(g, tuple(fams), "brickwork")
    d.validate()
    return d


STRATEGIES = {
    "even": strategy_even,
    "odd": strategy_odd_chains,
    "general": strategy_general,
    "brickwork": strategy_brickwork,
}


# -- rates ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateReport:
    errors: tuple[ErrorOp, ...]
    rates: tuple[float, ...]

    @property
    def minimum(self) -> float:
        return min(self.rates) if self.rates else math.nan

    @property
    def argmin(self) -> ErrorOp | None:
        if not self.rates:
            return None
        return self.errors[int(np.argmin(self.rates))]


def detection_rate(
    d: TestDistribution,
    errors: Sequence[ErrorOp],
    mode: str = "exhaustive",
    samples: int = 0,
    rng: np.random.Generator | None = None,
) -> RateReport:
    """Per-error probability that a test drawn from ``d`` detects the error.

    ``exhaustive`` enumerates every test with its weight, ``closed_form``
    uses the per-family parity rule, and ``monte_carlo`` draws ``samples``
    tests shared by all errors.
    """
    errors = tuple(errors)
    n = len(d.graph)
    if mode == "exhaustive":
        full = (1 << n) - 1
        hm = d.hole_masks()
        traps = np.array([full & ~h for h in hm], dtype=np.int64)
        probs = np.array(list(hm.values()))
        emasks = np.array([e.mask for e in errors], dtype=np.int64)
        par = np.bitwise_count(traps[:, None] & emasks[None, :]) % 2
        rates = probs @ par
    elif mode == "closed_form":
        rates = np.array([d.detection_probability(e) for e in errors])
    elif mode == "monte_carlo":
        if samples <= 0:
            raise TrapError("monte carlo mode needs a positive sample budget")
        rng = rng if rng is not None else np.random.default_rng(0)
        trap_mat = d.sample_trap_matrix(rng, samples)
        err_mat = np.array([_mask_vector(e.mask, n) for e in errors], dtype=np.float32).T
        hits = np.zeros(len(errors), dtype=np.int64)
        chunk = max(1, 2_000_000 // max(len(errors), 1))
        for start in range(0, samples, chunk):
            block = trap_mat[start : start + chunk].astype(np.float32)
            hits += ((block @ err_mat).astype(np.int64) % 2).sum(axis=0)
        rates = hits / samples
    else:
        raise TrapError(f"unknown mode {mode!r}")
    return RateReport(errors, tuple(float(r) for r in rates))


def insensitivity_rate(d: TestDistribution, errors: Sequence[ErrorOp], mode: str = "exhaustive", **kw) -> RateReport:
    """Probability that a drawn test accepts under each error."""
    rep = detection_rate(d, errors, mode, **kw)
    return RateReport(rep.errors, tuple(1.0 - r for r in rep.rates))


def all_errors(g: OpenGraph) -> list[ErrorOp]:
    return [ErrorOp.from_mask(g, m) for m in range(1, 1 << len(g))]


def error_panel(g: OpenGraph, random_count: int, rng: np.random.Generator) -> list[ErrorOp]:
    """All weight-1 and weight-2 errors followed by ``random_count`` random nonempty supports."""
    n = len(g)
    panel = [ErrorOp.from_mask(g, 1 << i) for i in range(n)]
    panel += [ErrorOp.from_mask(g, (1 << i) | (1 << j)) for i in range(n) for j in range(i + 1, n)]
    for _ in range(random_count):
        m = 0
        while m == 0:
            m = int(sum(int(b) << i for i, b in enumerate(rng.integers(2, size=n))))
        panel.append(ErrorOp.from_mask(g, m))
    return panel


__all__ = [
    "ErrorOp",
    "RateReport",
    "STRATEGIES",
    "TestDistribution",
    "TestFamily",
    "TrapError",
    "TrappifiedTest",
    "algebraic_parity",
    "all_errors",
    "brickwork_chain_classes",
    "detection_rate",
    "detects",
    "error_panel",
    "even_bound",
    "general_bound",
    "harmless_error",
    "insensitivity_rate",
    "is_valid_holeset",
    "load_distribution",
    "make_test",
    "odd_bound",
    "odd_chain_tests",
    "proper_coloring",
    "simulated_failure_probability",
    "strategy_brickwork",
    "strategy_even",
    "strategy_general",
    "strategy_odd_chains",
    "prepared_test_state",
]
