"""Trappified delegated computation and its multi-client variant.

Rounds are interleaved at random: d computation rounds run the client's
pattern, the remaining s = N - d rounds run dummyless tests drawn from a
scheme.  The client rejects when x >= w tests fail and otherwise outputs
the per-bit majority of the computation rounds.  In the multi-client run
every qubit is produced by collaborative remote state preparation and the
orchestrator adopts the resulting angle as the blinding key, so no
correction is ever sent.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from dummyless.crsp import combine_angles, merge_into
from dummyless.graphs import OpenGraph, Vertex, line_graph
from dummyless.mbqc import (
    AbortAdversary,
    AdversaryStrategy,
    FixedDeviationAdversary,
    FlipAllAdversary,
    MeasurementPattern,
    PatternError,
    Server,
    ServerAbort,
    run_mbqc,
    ubqc_round,
)
from dummyless.pauli import PauliOp
from dummyless.sim import (
    Angle8,
    Statevector,
    apply_letter,
    output_distribution,
    plus_vector,
    total_variation,
    z_rotation,
)
from dummyless.traps import ErrorOp, TestDistribution, TrappifiedTest, TrapError


class ProtocolConfigError(ValueError):
    pass


def _frac(x) -> Fraction:
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**12)


def max_failures(c, s: int, epsilon) -> int:
    """Largest integer strictly below ((2c-1)/(2c-2)) s (1 - epsilon), floored at 0."""
    c, epsilon = _frac(c), _frac(epsilon)
    if not 0 < c < Fraction(1, 2):
        raise ProtocolConfigError("c must lie strictly between 0 and 1/2")
    if not 0 < epsilon <= 1:
        raise ProtocolConfigError("epsilon must lie in (0, 1]")
    if s < 0:
        raise ProtocolConfigError("s must be nonnegative")
    bound = (2 * c - 1) / (2 * c - 2) * s * (1 - epsilon)
    return max(math.ceil(bound) - 1, 0)


@dataclass(frozen=True)
class ProtocolParams:
    N: int
    d: int
    w: int
    c: Fraction = Fraction(1, 3)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.N < 1 or not 1 <= self.d <= self.N:
            raise ProtocolConfigError("need 1 <= d <= N")
        if self.d % 2 == 0:
            raise ProtocolConfigError("d must be odd so the majority vote has no ties")
        if self.w < 0:
            raise ProtocolConfigError("w must be nonnegative")
        object.__setattr__(self, "c", _frac(self.c))

    @property
    def s(self) -> int:
        return self.N - self.d

    @classmethod
    def auto(cls, N: int, d: int, epsilon, c=Fraction(1, 3), seed: int = 0) -> ProtocolParams:
        return cls(N, d, max_failures(c, N - d, epsilon), c, seed)


@dataclass(frozen=True)
class NoiseModel:
    """Each round is afflicted with probability q by Z on a uniformly random nonempty support."""

    q: float

    def __post_init__(self) -> None:
        if not 0 <= self.q <= 1:
            raise ProtocolConfigError("noise probability must lie in [0, 1]")

    def sample(self, rng: np.random.Generator, g: OpenGraph) -> frozenset:
        if rng.random() >= self.q:
            return frozenset()
        n = len(g)
        while True:
            bits = rng.integers(2, size=n)
            if bits.any():
                return frozenset(v for v, b in zip(g.vertices, bits) if b)


@dataclass(frozen=True)
class PublicInfo:
    """What the protocol leaks: computation class, graph, scheme and order."""

    computation_class: str
    graph: OpenGraph
    scheme: str
    order: tuple

    def to_json(self) -> dict:
        return {
            "computation_class": self.computation_class,
            "graph": self.graph.to_json(),
            "scheme": self.scheme,
            "order": [str(v) for v in self.order],
        }


@dataclass
class RunOutcome:
    verdict: str
    output: tuple | None
    failed_tests: int
    per_round: list = field(default_factory=list)
    aborted: bool = False

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "output": list(self.output) if self.output is not None else None,
            "failed_tests": self.failed_tests,
            "aborted": self.aborted,
            "per_round": self.per_round,
        }


class NoisyServer(Server):
    """Server whose rounds may additionally be hit by the noise model before measurement."""

    def __init__(self, randomness, adversary=None, noise: NoiseModel | None = None,
                 noise_rng: np.random.Generator | None = None, max_qubits: int = 20):
        super().__init__(randomness, adversary, max_qubits)
        self.noise = noise
        self.noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(0)
        self.noise_support: frozenset = frozenset()

    def begin_round(self, graph, order, round_index=0):
        super().begin_round(graph, order, round_index)
        self.noise_support = self.noise.sample(self.noise_rng, graph) if self.noise else frozenset()

    def measure(self, v, delta):
        if v in self.noise_support:
            self.sv = apply_letter(self.sv, v, "Z")
        return super().measure(v, delta)


def majority(outputs: Sequence[tuple]) -> tuple:
    if not outputs:
        raise ProtocolConfigError("no computation rounds to vote on")
    width = len(outputs[0])
    return tuple(int(sum(o[i] for o in outputs) * 2 > len(outputs)) for i in range(width))


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("schedule", "client", "server", "noise", "shares")
    return dict(zip(names, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(names)))))


def _check_compatible(pattern: MeasurementPattern, scheme: TestDistribution) -> None:
    if scheme.graph != pattern.graph:
        raise ProtocolConfigError("pattern and scheme must share the same graph")


def _run_rounds(params: ProtocolParams, pattern: MeasurementPattern, scheme: TestDistribution,
                server: Server, rng: dict, send_qubits=None) -> RunOutcome:
    _check_compatible(pattern, scheme)
    comp = set(int(i) for i in rng["schedule"].choice(params.N, size=params.d, replace=False))
    test_pattern = pattern.blank()
    cache: dict[int, TrappifiedTest] = {}
    failures = 0
    outputs: list[tuple] = []
    records = []
    for i in range(params.N):
        try:
            if i in comp:
                st = ubqc_round(pattern, rng["client"], server, round_index=i, send_qubits=send_qubits)
                out = tuple(st.s[v] for v in pattern.graph.outputs)
                outputs.append(out)
                records.append({"round": i, "kind": "computation", "output": list(out)})
            else:
                test = scheme.sample_test(rng["client"], cache)
                st = ubqc_round(test_pattern, rng["client"], server, test.prep_angles(rng["client"]),
                                round_index=i, send_qubits=send_qubits)
                tau = test.decide(st.s)
                failures += tau
                records.append({"round": i, "kind": "test", "traps": len(test.traps), "failed": tau})
        except ServerAbort:
            records.append({"round": i, "kind": "abort"})
            return RunOutcome("reject", None, failures, records, aborted=True)
    if failures >= params.w:
        return RunOutcome("reject", None, failures, records)
    return RunOutcome("accept", majority(outputs), failures, records)


def run_trappified_protocol(
    params: ProtocolParams,
    pattern: MeasurementPattern,
    scheme: TestDistribution,
    adversary: AdversaryStrategy | None = None,
    noise: NoiseModel | None = None,
    seed: int | None = None,
) -> RunOutcome:
    """Single client delegating ``pattern`` with tests drawn from ``scheme``."""
    rng = _streams(params.seed if seed is None else seed)
    server = NoisyServer(rng["server"], adversary, noise, rng["noise"])
    return _run_rounds(params, pattern, scheme, server, rng)


def run_qsmpc(
    params: ProtocolParams,
    pattern: MeasurementPattern,
    scheme: TestDistribution,
    n_clients: int,
    shares: Sequence[Mapping[Vertex, int]],
    adversary: AdversaryStrategy | None = None,
    noise: NoiseModel | None = None,
    seed: int | None = None,
    client_angles: Mapping[int, int] | None = None,
) -> list[RunOutcome]:
    """Multi-client run; returns the verdict delivered to each client.

    ``shares[j]`` holds client j's input bits.  ``client_angles`` pins the
    preparation angle of selected (possibly malicious) clients, indexed from 1.
    """
    if n_clients < 2:
        raise ProtocolConfigError("need at least two clients")
    if len(shares) != n_clients:
        raise ProtocolConfigError(f"{len(shares)} input shares for {n_clients} clients")
    seen: dict = {}
    for j, share in enumerate(shares, 1):
        for v, bit in share.items():
            if v in seen:
                raise ProtocolConfigError(f"input {v!r} claimed by clients {seen[v]} and {j}")
            if bit not in (0, 1):
                raise ProtocolConfigError(f"input bit for {v!r} is {bit!r}")
            seen[v] = j
    if set(seen) != set(pattern.graph.inputs):
        raise ProtocolConfigError("shares do not partition the pattern inputs")
    x = {v: b for share in shares for v, b in share.items()}
    joint = pattern.with_inputs(x)
    rng = _streams(params.seed if seed is None else seed)
    client_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence([params.seed if seed is None else seed, 1]).spawn(n_clients)]
    pinned = {int(j): int(a) for j, a in (client_angles or {}).items()}
    server = NoisyServer(rng["server"], adversary, noise, rng["noise"], max_qubits=len(pattern.graph) + n_clients + 1)

    def send_qubits(srv: Server, v, _angle):
        thetas = [Angle8(pinned[j]) if j in pinned else Angle8(int(client_rngs[j - 1].integers(8)))
                  for j in range(1, n_clients + 1)]
        srv.sv, t = merge_into(srv.sv, v, thetas, srv.measurer)
        return combine_angles(thetas, t)

    outcome = _run_rounds(params, joint, scheme, server, rng, send_qubits)
    return [RunOutcome(outcome.verdict, outcome.output, outcome.failed_tests, list(outcome.per_round), outcome.aborted)
            for _ in range(n_clients)]


def qsmpc_computation_distribution(pattern: MeasurementPattern, n_clients: int, client_angles=None, seed: int = 0,
                                   max_measurements: int = 16) -> dict:
    """Exact output distribution of one collaborative computation round (honest server)."""
    pinned = {int(j): int(a) for j, a in (client_angles or {}).items()}

    def program(m):
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence([seed, 1]).spawn(n_clients)]
        server = Server(m, max_qubits=len(pattern.graph) + n_clients + 1)

        def send(srv, v, _angle):
            thetas = [Angle8(pinned[j]) if j in pinned else Angle8(int(rngs[j - 1].integers(8)))
                      for j in range(1, n_clients + 1)]
            srv.sv, t = merge_into(srv.sv, v, thetas, srv.measurer)
            return combine_angles(thetas, t)

        st = ubqc_round(pattern, np.random.default_rng([seed, 2]), server, send_qubits=send)
        return tuple(st.s[v] for v in pattern.graph.outputs)

    return output_distribution(program, max_measurements)


def ubqc_computation_distribution(pattern: MeasurementPattern, seed: int = 0, max_measurements: int = 12) -> dict:
    def program(m):
        st = ubqc_round(pattern, np.random.default_rng([seed, 2]), Server(m))
        return tuple(st.s[v] for v in pattern.graph.outputs)

    return output_distribution(program, max_measurements)


# -- equivalences --------------------------------------------------------------


_X = np.array([[0, 1], [1, 0]], dtype=complex)


def random_deviation(seed: int = 0) -> np.ndarray:
    """Haar-random 4x4 unitary acting on (measured qubit, environment)."""
    rng = np.random.default_rng(seed)
    z = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _deviate(sv: Statevector, e: np.ndarray) -> Statevector:
    vec = e @ sv.vector(["q", "env"])
    return Statevector(vec, ["q", "env"])


def correction_removal_equivalence(theta, theta_prime, b: int, phi_prime, r: int,
                                   deviation: np.ndarray | None = None, env: np.ndarray | None = None,
                                   apply_x: bool = True, atol: float = 1e-12) -> bool:
    """Check that the corrected qubit and the uncorrected one are interchangeable.

    With correction the server holds |+_theta'>, applies X**b Z((-1)**b theta - theta'),
    deviates by ``deviation`` (any unitary on the qubit and an environment qubit) and
    is asked to measure at delta = phi' + theta + r pi.  Without correction the
    client keys the round by the angle the qubit already carries.  The two joint
    states before measurement must agree up to global phase when the keys coincide;
    ``apply_x=False`` drops the X**b part of the correction (negative control).
    """
    theta, theta_prime, phi_prime = Angle8(int(theta)), Angle8(int(theta_prime)), Angle8(int(phi_prime))
    env = plus_vector(Angle8(1)) if env is None else np.asarray(env, dtype=complex)
    e = random_deviation() if deviation is None else np.asarray(deviation, dtype=complex)
    pi_r = Angle8(4 * (r & 1))

    def base(angle):
        return Statevector.empty().add_qubit("q", plus_vector(angle)).add_qubit("env", env)

    lhs = base(theta_prime).apply_1q("q", z_rotation(theta.signed(b) - theta_prime))
    if b & 1 and apply_x:
        lhs = lhs.apply_1q("q", _X)
    lhs = _deviate(lhs, e).apply_1q("q", z_rotation(-(phi_prime + theta + pi_r)))

    rhs = _deviate(base(theta), e).apply_1q("q", z_rotation(-(phi_prime + theta + pi_r)))
    overlap = abs(np.vdot(lhs.vector(["q", "env"]), rhs.vector(["q", "env"])))
    return bool(abs(overlap - 1) <= atol)


def removed_key_is_uniform() -> bool:
    """theta_hat = (-1)**b theta' is uniform on Theta for each b when theta' is."""
    return all(sorted(Angle8(k).signed(b).k for k in range(8)) == list(range(8)) for b in (0, 1))


def correction_removal_sweep(deviation: np.ndarray | None = None, env: np.ndarray | None = None,
                             apply_x: bool = True) -> tuple[int, int]:
    """(passing cases, total cases) over theta, theta' in Theta, b, phi' in Theta, r."""
    ok = total = 0
    for th in range(8):
        for tp in range(8):
            for b in (0, 1):
                for ph in range(8):
                    for r in (0, 1):
                        total += 1
                        ok += correction_removal_equivalence(th, tp, b, ph, r, deviation, env, apply_x)
    return ok, total


def deviation_effect(pattern: MeasurementPattern, e: ErrorOp | PauliOp, max_measurements: int = 12) -> float:
    """Exact total-variation distance between clean and deviated output distributions."""
    p = e.to_pauli() if isinstance(e, ErrorOp) else e
    clean = output_distribution(lambda m: run_mbqc(pattern, m), max_measurements)
    dev = output_distribution(lambda m: run_mbqc(pattern, m, p), max_measurements)
    return total_variation(clean, dev)


def delta_marginal(pattern: MeasurementPattern, v: Vertex, prep_angles: Mapping | None = None,
                   seed: int = 0) -> dict[int, float]:
    """Distribution of the angle sent for ``v`` over its key theta(v) and pad r(v).

    Every other key and pad is fixed by ``seed``; theta(v) and r(v) are
    enumerated exhaustively.
    """
    g = pattern.graph
    base_rng = np.random.default_rng(seed)
    keys = {u: Angle8(int(base_rng.integers(8))) for u in g.vertices}
    pads = {u: int(base_rng.integers(2)) for u in g.vertices}
    dist: dict[int, float] = {}
    for k in range(8):
        for r in (0, 1):
            keys[v], pads[v] = Angle8(k), r
            st = ubqc_round(pattern, np.random.default_rng(seed + 1), Server(np.random.default_rng(seed + 2)),
                            prep_angles, keys=dict(keys), pads=dict(pads))
            dist[st.delta[v].k] = dist.get(st.delta[v].k, 0.0) + 1 / 16
    return dist


# -- canned patterns and configuration ---------------------------------------


def line_identity_pattern(n: int = 3, input_bit: int = 0) -> MeasurementPattern:
    """Line pattern whose output reproduces the input bit.

    With all angles zero each step teleports H, so odd lengths are the
    identity; for two vertices both angles are pi/2.
    """
    g = line_graph(n)
    if n == 2:
        angles = {1: Angle8(2), 2: Angle8(2)}
    elif n % 2 == 1:
        angles = {}
    else:
        raise PatternError("identity line patterns exist here for n = 2 or odd n")
    flow = {i: i + 1 for i in range(1, n)}
    return MeasurementPattern.with_flow(g, angles, flow, {1: input_bit})


def two_client_identity_pattern(x_a: int = 0, x_b: int = 0) -> MeasurementPattern:
    """Two three-vertex lines joined at their middles; each output reproduces its line's input."""
    g = OpenGraph.from_edges(
        ["a", "ma", "a2", "b", "mb", "b2"],
        [("a", "ma"), ("ma", "a2"), ("b", "mb"), ("mb", "b2"), ("ma", "mb")],
        ["a", "b"],
        ["a2", "b2"],
    )
    flow = {"a": "ma", "ma": "a2", "b": "mb", "mb": "b2"}
    return MeasurementPattern.with_flow(g, {}, flow, {"a": x_a, "b": x_b})


ADVERSARIES = {
    "none": lambda cfg, g: None,
    "flip_all": lambda cfg, g: FlipAllAdversary(),
    "abort": lambda cfg, g: AbortAdversary(int(cfg.get("abort_round", 0))),
    "fixed_z": lambda cfg, g: FixedDeviationAdversary(
        PauliOp.z_on(g.vertices, [_lookup(g, v) for v in cfg.get("support", [])])
    ),
}


def _lookup(g: OpenGraph, label):
    table = {str(v): v for v in g.vertices}
    try:
        return table[str(label)]
    except KeyError:
        raise ProtocolConfigError(f"unknown vertex {label!r}") from None


@dataclass
class RunConfig:
    pattern: MeasurementPattern
    scheme: TestDistribution
    params: ProtocolParams
    noise: NoiseModel | None
    adversary: AdversaryStrategy | None
    clients: int = 1
    shares: list | None = None
    raw: dict = field(default_factory=dict)

    def run(self) -> list[RunOutcome]:
        if self.clients <= 1:
            return [run_trappified_protocol(self.params, self.pattern, self.scheme, self.adversary, self.noise)]
        return run_qsmpc(self.params, self.pattern, self.scheme, self.clients, self.shares,
                         self.adversary, self.noise)


def load_run_config(path: str | Path) -> RunConfig:
    """Read a run configuration; nested file paths are resolved relative to it."""
    from dummyless.mbqc import load_pattern
    from dummyless.traps import STRATEGIES, load_distribution

    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProtocolConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        pat = cfg["pattern"]
        pattern = MeasurementPattern.from_json(pat) if isinstance(pat, dict) else load_pattern(path.parent / pat)
        g = pattern.graph
        scheme_ref = cfg.get("scheme", "general")
        if scheme_ref in STRATEGIES:
            scheme = STRATEGIES[scheme_ref](g)
        else:
            scheme = load_distribution(g, path.parent / scheme_ref)
        N, d = int(cfg["N"]), int(cfg["d"])
        seed = int(cfg.get("seed", 0))
        c = _frac(cfg.get("c", "1/3"))
        if cfg.get("w", "auto") == "auto":
            eps = cfg.get("epsilon")
            if eps is None:
                raise ProtocolConfigError('w = "auto" needs epsilon')
            params = ProtocolParams.auto(N, d, _frac(eps), c, seed)
        else:
            params = ProtocolParams(N, d, int(cfg["w"]), c, seed)
        noise_cfg = cfg.get("noise")
        noise = NoiseModel(float(noise_cfg["q"])) if noise_cfg else None
        adv_cfg = cfg.get("adversary", "none")
        adv_name = adv_cfg if isinstance(adv_cfg, str) else adv_cfg.get("name", "none")
        if adv_name not in ADVERSARIES:
            raise ProtocolConfigError(f"unknown adversary {adv_name!r}")
        adversary = ADVERSARIES[adv_name](adv_cfg if isinstance(adv_cfg, dict) else {}, g)
        clients = int(cfg.get("clients", 1))
        shares = None
        if clients > 1:
            shares = [{_lookup(g, v): int(b) for v, b in share.items()} for share in cfg["shares"]]
    except (KeyError, TypeError, ValueError, TrapError) as exc:
        if isinstance(exc, ProtocolConfigError):
            raise
        raise ProtocolConfigError(f"bad run configuration: {exc}") from exc
    return RunConfig(pattern, scheme, params, noise, adversary, clients, shares, cfg)


__all__ = [
    "ADVERSARIES",
    "NoiseModel",
    "NoisyServer",
    "ProtocolConfigError",
    "ProtocolParams",
    "PublicInfo",
    "RunConfig",
    "RunOutcome",
    "correction_removal_equivalence",
    "correction_removal_sweep",
    "random_deviation",
    "removed_key_is_uniform",
    "delta_marginal",
    "deviation_effect",
    "line_identity_pattern",
    "load_run_config",
    "majority",
    "max_failures",
    "qsmpc_computation_distribution",
    "run_qsmpc",
    "run_trappified_protocol",
    "two_client_identity_pattern",
    "ubqc_computation_distribution",
]
