"""Classical-I/O MBQC patterns with flow corrections, and blind (UBQC) execution."""

from __future__ import annotations

import heapq
import json
from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from dummyless.graphs import GraphError, OpenGraph, Vertex
from dummyless.pauli import PauliOp
from dummyless.sim import (
    PI,
    Angle8,
    Measurer,
    SimulationError,
    Statevector,
    apply_letter,
    as_measurer,
    entangle_graph,
    graph_state,
    measure_xy,
    plus_vector,
)


class PatternError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """A party sent a malformed message."""


class ServerAbort(RuntimeError):
    pass


def flow_dependencies(g: OpenGraph, flow: Mapping[Vertex, Vertex]) -> tuple[dict, dict]:
    """X and Z dependency sets induced by a flow.

    Measuring v with outcome s(v) leaves X on f(v) and Z on the other
    neighbours of f(v), so S_X(f(v)) gets v and S_Z(w) gets v for every
    w in N(f(v)) minus v.
    """
    sx: dict[Vertex, set] = {v: set() for v in g.vertices}
    sz: dict[Vertex, set] = {v: set() for v in g.vertices}
    for v, fv in flow.items():
        sx[fv].add(v)
        for w in g.neighbors(fv):
            if w != v:
                sz[w].add(v)
    idx = g.index
    return (
        {v: tuple(sorted(s, key=idx.__getitem__)) for v, s in sx.items() if s},
        {v: tuple(sorted(s, key=idx.__getitem__)) for v, s in sz.items() if s},
    )


@dataclass(frozen=True)
class Flow:
    f: Mapping[Vertex, Vertex]
    sx: Mapping[Vertex, tuple]
    sz: Mapping[Vertex, tuple]


@dataclass(frozen=True)
class MeasurementPattern:
    """Classical input/output pattern: every vertex is measured in the X-Y plane."""

    graph: OpenGraph
    angles: Mapping[Vertex, Angle8]
    flow: Flow
    input_bits: Mapping[Vertex, int] = field(default_factory=dict)
    fixed_order: tuple | None = None

    def __post_init__(self) -> None:
        g = self.graph
        angles = {v: Angle8(int(self.angles.get(v, 0))) for v in g.vertices}
        unknown = set(self.angles) - set(g.vertices)
        if unknown:
            raise PatternError(f"angles for unknown vertices {unknown}")
        object.__setattr__(self, "angles", angles)
        bits = {v: int(self.input_bits.get(v, 0)) for v in g.inputs}
        extra = set(self.input_bits) - set(g.inputs)
        if extra:
            raise PatternError(f"input bits given for non-input vertices {extra}")
        if any(b not in (0, 1) for b in bits.values()):
            raise PatternError("input bits must be 0 or 1")
        object.__setattr__(self, "input_bits", bits)
        self._validate_flow()
        self.order  # noqa: B018 - raises on cyclic dependencies

    @classmethod
    def with_flow(cls, graph: OpenGraph, angles, flow: Mapping, input_bits=None) -> MeasurementPattern:
        """Pattern whose dependency sets are derived from ``flow``."""
        sx, sz = flow_dependencies(graph, flow)
        return cls(graph, angles, Flow(dict(flow), sx, sz), input_bits or {})

    def with_inputs(self, input_bits: Mapping[Vertex, int]) -> MeasurementPattern:
        return MeasurementPattern(self.graph, self.angles, self.flow, input_bits, self.fixed_order)

    def blank(self) -> MeasurementPattern:
        """All angles zero, no corrections, no inputs, same measurement order (test rounds)."""
        return MeasurementPattern(self.graph, {}, Flow({}, {}, {}), {}, self.order)

    def _validate_flow(self) -> None:
        g = self.graph
        outs, ins = set(g.outputs), set(g.inputs)
        for v, fv in self.flow.f.items():
            if v not in g.index or fv not in g.index:
                raise PatternError(f"flow {v}->{fv} references unknown vertex")
            if v in outs:
                raise PatternError(f"flow defined on output vertex {v}")
            if fv in ins:
                raise PatternError(f"flow maps {v} onto input vertex {fv}")
            if fv not in g.neighbors(v):
                raise PatternError(f"f({v}) = {fv} is not a neighbour")
        for name, deps in (("sx", self.flow.sx), ("sz", self.flow.sz)):
            for v, ws in deps.items():
                if v not in g.index or any(w not in g.index for w in ws):
                    raise PatternError(f"{name}[{v}] references unknown vertex")
                if v in ws:
                    raise PatternError(f"{name}[{v}] depends on itself")

    @cached_property
    def order(self) -> tuple[Vertex, ...]:
        """Total measurement order: dependencies first, ties broken by vertex index.

        Constraints: S_X(v), S_Z(v) before v; v before f(v) and before every
        other neighbour of f(v); plus the graph's own partial order.  A
        ``fixed_order`` is used as given after checking it satisfies them.
        """
        g = self.graph
        idx = g.index
        succ: dict[Vertex, set] = {v: set() for v in g.vertices}
        for deps in (self.flow.sx, self.flow.sz):
            for v, ws in deps.items():
                for w in ws:
                    succ[w].add(v)
        for v, fv in self.flow.f.items():
            succ[v].add(fv)
            for w in g.neighbors(fv):
                if w != v:
                    succ[v].add(w)
        for a, b in g.order:
            succ[a].add(b)
        if self.fixed_order is not None:
            fixed = tuple(self.fixed_order)
            if sorted(map(idx.__getitem__, fixed)) != list(range(len(g))):
                raise PatternError("fixed order is not a permutation of the vertices")
            pos = {v: i for i, v in enumerate(fixed)}
            for v in g.vertices:
                for w in succ[v]:
                    if pos[v] > pos[w]:
                        raise PatternError(f"fixed order measures {w!r} before {v!r}")
            return fixed
        indeg = {v: 0 for v in g.vertices}
        for v in g.vertices:
            for w in succ[v]:
                indeg[w] += 1
        heap = [idx[v] for v in g.vertices if indeg[v] == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            v = g.vertices[heapq.heappop(heap)]
            out.append(v)
            for w in succ[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(heap, idx[w])
        if len(out) != len(g.vertices):
            raise PatternError("flow induces a cyclic measurement order")
        return tuple(out)

    def x_bit(self, v: Vertex) -> int:
        return self.input_bits.get(v, 0)

    # -- file format ---------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "graph": self.graph.to_json(),
            "angles": {str(v): a.k for v, a in self.angles.items()},
            "flow": {str(v): str(w) for v, w in self.flow.f.items()},
            "sx": {str(v): [str(w) for w in ws] for v, ws in self.flow.sx.items()},
            "sz": {str(v): [str(w) for w in ws] for v, ws in self.flow.sz.items()},
            "input_bits": {str(v): b for v, b in self.input_bits.items()},
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> MeasurementPattern:
        try:
            g = OpenGraph.from_json(data["graph"])
            angles = {str(v): Angle8(int(k)) for v, k in data.get("angles", {}).items()}
            f = {str(v): str(w) for v, w in data.get("flow", {}).items()}
            if "sx" in data or "sz" in data:
                sx = {str(v): tuple(str(w) for w in ws) for v, ws in data.get("sx", {}).items()}
                sz = {str(v): tuple(str(w) for w in ws) for v, ws in data.get("sz", {}).items()}
            else:
                sx, sz = flow_dependencies(g, f)
            bits = {str(v): int(b) for v, b in data.get("input_bits", {}).items()}
        except (KeyError, TypeError, ValueError, GraphError) as exc:
            raise PatternError(f"malformed pattern object: {exc}") from exc
        return cls(g, angles, Flow(f, sx, sz), bits)


def load_pattern(path: str | Path) -> MeasurementPattern:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PatternError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return MeasurementPattern.from_json(data)


def corrected_angle(pattern: MeasurementPattern, v: Vertex, s: Mapping[Vertex, int]) -> Angle8:
    """phi'(v) = (-1)**s_X(v) * phi(v) + pi * s_Z(v)."""
    try:
        s_x = sum(s[w] for w in pattern.flow.sx.get(v, ())) % 2
        s_z = sum(s[w] for w in pattern.flow.sz.get(v, ())) % 2
    except KeyError as exc:
        raise PatternError(f"dependency {exc.args[0]!r} of {v!r} not yet measured") from None
    return pattern.angles[v].signed(s_x) + (PI if s_z else 0)


def run_mbqc(
    pattern: MeasurementPattern,
    randomness: Measurer | np.random.Generator | int | None = None,
    deviation: PauliOp | None = None,
) -> tuple[int, ...]:
    """Plain (non-blind) execution; returns s(v) for v in the output set.

    ``deviation`` letters are applied to each qubit right before it is
    measured, after entangling.
    """
    m = as_measurer(randomness)
    g = pattern.graph
    sv = graph_state(g)
    s: dict[Vertex, int] = {}
    for v in pattern.order:
        angle = corrected_angle(pattern, v, s) + (PI if pattern.x_bit(v) else 0)
        if deviation is not None:
            sv = apply_letter(sv, v, deviation.letter(v))
        s[v], sv = measure_xy(sv, v, angle, m)
    return tuple(s[v] for v in g.outputs)


# -- UBQC ----------------------------------------------------------------------


@dataclass
class UbqcRoundState:
    """Client-side secrets and transcript of one blind round."""

    theta: dict = field(default_factory=dict)
    r: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)
    s: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)
    cursor: int = 0


@dataclass
class PublicView:
    """Everything a server legitimately sees: graph, order, round index, angles it received
    and bits it reported.  Client secrets are never placed here."""

    graph: OpenGraph
    order: tuple
    round_index: int = 0
    history: list = field(default_factory=list)


class AdversaryStrategy:
    """Server deviation policy.  The default behaves honestly."""

    def abort(self, view: PublicView) -> bool:
        return False

    def deviation(self, view: PublicView, v: Vertex) -> str:
        """Pauli letter applied to ``v`` right before its measurement."""
        return "I"

    def flip(self, view: PublicView, v: Vertex, bit: int) -> bool:
        return False


class Server:
    """Holds the server's quantum register and runs the honest UBQC steps,
    consulting an optional adversary at each hook."""

    def __init__(self, randomness=None, adversary: AdversaryStrategy | None = None, max_qubits: int = 20):
        self.measurer = as_measurer(randomness)
        self.adversary = adversary or AdversaryStrategy()
        self.max_qubits = max_qubits
        self.sv = Statevector.empty(max_qubits)
        self.view: PublicView | None = None

    def begin_round(self, graph: OpenGraph, order: tuple, round_index: int = 0) -> None:
        self.sv = Statevector.empty(self.max_qubits)
        self.view = PublicView(graph, order, round_index)
        if self.adversary.abort(self.view):
            raise ServerAbort(f"server aborted in round {round_index}")

    def receive(self, v: Hashable, vec: np.ndarray) -> None:
        self.sv = self.sv.add_qubit(v, vec)

    def entangle(self) -> None:
        self.sv = entangle_graph(self.sv, self.view.graph)

    def measure(self, v: Hashable, delta: Angle8):
        letter = self.adversary.deviation(self.view, v)
        self.sv = apply_letter(self.sv, v, letter)
        bit, self.sv = measure_xy(self.sv, v, delta, self.measurer)
        if self.adversary.flip(self.view, v, bit):
            bit ^= 1
        self.view.history.append((v, delta.k, bit))
        return bit


def ubqc_client_angle(state: UbqcRoundState, pattern: MeasurementPattern, v: Vertex, rng: np.random.Generator) -> Angle8:
    """delta(v) = phi'(v) + theta(v) + r(v) pi + x(v) pi, with r(v) sampled fresh unless preset."""
    order = pattern.order
    if state.cursor >= len(order) or order[state.cursor] != v:
        expected = order[state.cursor] if state.cursor < len(order) else None
        raise ProtocolError(f"angle for {v!r} requested out of order (next is {expected!r})")
    if v not in state.theta:
        raise ProtocolError(f"no key theta({v!r})")
    phi = corrected_angle(pattern, v, state.s)
    if v not in state.r:
        state.r[v] = int(rng.integers(2))
    delta = phi + state.theta[v] + (PI if state.r[v] else 0) + (PI if pattern.x_bit(v) else 0)
    state.delta[v] = delta
    return delta


def client_receive(state: UbqcRoundState, v: Vertex, reported) -> None:
    if reported not in (0, 1):
        raise ProtocolError(f"server reported {reported!r} for {v!r}")
    state.b[v] = int(reported)
    state.s[v] = state.b[v] ^ state.r[v]
    state.cursor += 1


def ubqc_round(
    pattern: MeasurementPattern,
    rng: np.random.Generator,
    server: Server,
    prep_angles: Mapping[Vertex, Angle8] | None = None,
    keys: Mapping[Vertex, Angle8] | None = None,
    round_index: int = 0,
    send_qubits=None,
    pads: Mapping[Vertex, int] | None = None,
) -> UbqcRoundState:
    """One blind execution of ``pattern``.

    ``prep_angles`` rotates the logical input of vertex v to |+_alpha(v)>
    (test rounds); the qubit actually sent is |+_{alpha(v) + theta(v)}>.
    ``keys`` fixes theta instead of sampling it.  ``send_qubits`` replaces
    the direct quantum channel: it is called as ``send_qubits(server, v,
    angle)`` and must leave qubit v on the server in state |+_angle>, returning
    the angle actually prepared (used by collaborative preparation).
    ``pads`` fixes r(v) instead of sampling it.
    """
    g = pattern.graph
    prep = {v: Angle8(int(prep_angles.get(v, 0))) for v in g.vertices} if prep_angles else {}
    state = UbqcRoundState()
    if pads is not None:
        state.r.update({v: int(pads[v]) & 1 for v in pads})
    server.begin_round(g, pattern.order, round_index)
    for v in g.vertices:
        alpha = prep.get(v, Angle8(0))
        if keys is not None:
            state.theta[v] = Angle8(int(keys[v]))
        else:
            state.theta[v] = Angle8(int(rng.integers(8)))
        if send_qubits is None:
            server.receive(v, plus_vector(alpha + state.theta[v]))
        else:
            sent = send_qubits(server, v, alpha + state.theta[v])
            state.theta[v] = Angle8(int(sent)) - alpha
    server.entangle()
    for v in pattern.order:
        delta = ubqc_client_angle(state, pattern, v, rng)
        client_receive(state, v, server.measure(v, delta))
    return state


def run_ubqc(
    pattern: MeasurementPattern,
    randomness: np.random.Generator | int | None = None,
    server: Server | None = None,
    measurer: Measurer | None = None,
) -> tuple[int, ...]:
    """Blind execution; returns the client's decrypted outputs s(v), v in O.

    Client secrets come from ``randomness``; server measurement outcomes
    come from ``measurer`` (defaulting to the same stream) unless an
    explicit ``server`` is supplied.
    """
    rng = randomness if isinstance(randomness, np.random.Generator) else np.random.default_rng(randomness)
    if server is None:
        server = Server(measurer if measurer is not None else rng)
    state = ubqc_round(pattern, rng, server)
    return tuple(state.s[v] for v in pattern.graph.outputs)


class FlipAllAdversary(AdversaryStrategy):
    def flip(self, view, v, bit):
        return True


class FixedDeviationAdversary(AdversaryStrategy):
    """Applies the same Pauli letters every round."""

    def __init__(self, deviation: PauliOp):
        self.letters = {v: deviation.letter(v) for v in deviation.vertices}

    def deviation(self, view, v):
        return self.letters.get(v, "I")


class AbortAdversary(AdversaryStrategy):
    def __init__(self, at_round: int = 0):
        self.at_round = at_round

    def abort(self, view):
        return view.round_index >= self.at_round


__all__ = [
    "AbortAdversary",
    "AdversaryStrategy",
    "FixedDeviationAdversary",
    "FlipAllAdversary",
    "Flow",
    "MeasurementPattern",
    "PatternError",
    "ProtocolError",
    "PublicView",
    "Server",
    "ServerAbort",
    "SimulationError",
    "UbqcRoundState",
    "client_receive",
    "corrected_angle",
    "flow_dependencies",
    "load_pattern",
    "run_mbqc",
    "run_ubqc",
    "ubqc_client_angle",
    "ubqc_round",
]
