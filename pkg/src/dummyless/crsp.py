"""Collaborative remote state preparation: n clients each send a rotated |+>,
the server merges them with CNOTs and computational-basis measurements, and
an orchestrator steers the surviving qubit to its target angle with one
Pauli-X/rotation correction.
"""

from __future__ import annotations

import cmath
import math
from collections.abc import Callable, Hashable, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple
from itertools import product

import numpy as np

from dummyless.sim import (
    Angle8,
    Measurer,
    SimulationError,
    Statevector,
    as_measurer,
    measure_z,
    plus_vector,
    total_variation,
    z_rotation,
)

_X = np.array([[0, 1], [1, 0]], dtype=complex)


class CrspError(ValueError):
    pass


def combine_angles(thetas: list[Angle8], t: list[int]) -> Angle8:
    """theta' = theta_n + sum_{j<n} (-1)**t_j theta_j."""
    if len(t) != len(thetas) - 1:
        raise CrspError(f"need {len(thetas) - 1} measurement bits, got {len(t)}")
    out = Angle8(thetas[-1])
    for th, bit in zip(thetas[:-1], t):
        out = out + Angle8(th).signed(bit)
    return out


def angle_of(vec: np.ndarray, atol: float = 1e-9) -> Angle8:
    """Recover alpha from a vector proportional to |+_alpha>, alpha in multiples of pi/4."""
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    if vec.shape != (2,) or abs(abs(vec[0]) - abs(vec[1])) > atol or abs(vec[0]) < atol:
        raise SimulationError("state is not an equatorial pure state")
    phase = cmath.phase(vec[1] / vec[0])
    k = round(phase / (math.pi / 4))
    if abs(phase - k * math.pi / 4) > 1e-6:
        raise SimulationError("angle is not a multiple of pi/4")
    return Angle8(k)


def record(transcript: list | None, party: str, direction: str, kind: str, payload) -> None:
    if transcript is not None:
        transcript.append({"party": party, "direction": direction, "kind": kind, "payload": payload})


@dataclass
class CrspSession:
    n: int
    thetas: list[Angle8]
    target: Angle8
    t: list[int] = field(default_factory=list)
    b: int | None = None
    correction: Angle8 | None = None
    transcript: list[dict] = field(default_factory=list)

    @property
    def theta_prime(self) -> Angle8:
        return combine_angles(self.thetas, self.t)


def single_merge_step(control: Statevector, theta_hat: Angle8, randomness, label: Hashable = None) -> tuple[int, Statevector]:
    """Entangle a fresh |+_theta_hat> target with ``control`` by CNOT and measure the target.

    Leaves ``control`` rotated by Z((-1)**t theta_hat) up to global phase.
    """
    if label is None:
        if control.n != 1:
            raise CrspError("control must be a single qubit when no label is given")
        label = control.labels[0]
    tgt = ("merge-target", label)
    sv = control.add_qubit(tgt, plus_vector(theta_hat))
    sv = sv.cnot(label, tgt)
    return measure_z(sv, tgt, randomness)


def merge_into(sv: Statevector, label: Hashable, thetas: list[Angle8], measurer,
               report: Callable[[int, int], int] | None = None) -> tuple[Statevector, list[int]]:
    """Server side of the protocol for one output qubit ``label``.

    Client n's qubit becomes ``label``; each other client's qubit is merged
    into it.  ``report(j, t)`` lets a dishonest server misreport bits.
    """
    m = as_measurer(measurer)
    sv = sv.add_qubit(label, plus_vector(thetas[-1]))
    t = []
    for j, th in enumerate(thetas[:-1]):
        bit, sv = single_merge_step(sv, th, m, label)
        t.append(report(j, bit) if report is not None else bit)
    return sv, t


def orchestrator_correction(theta: Angle8, session: CrspSession, rng: np.random.Generator | None = None,
                            b: int | None = None) -> tuple[int, Angle8]:
    """Uniform b and the angle (-1)**b theta - theta'."""
    if len(session.t) != session.n - 1 or len(session.thetas) != session.n:
        raise CrspError("missing client report")
    if b is None:
        b = int((rng if rng is not None else np.random.default_rng()).integers(2))
    return b, Angle8(theta).signed(b) - session.theta_prime


def apply_correction(sv: Statevector, label: Hashable, b: int, angle: Angle8) -> Statevector:
    """X**b Z(angle)."""
    sv = sv.apply_1q(label, z_rotation(angle))
    return sv.apply_1q(label, _X) if b else sv


def crsp_honest_run(
    n: int,
    theta: Angle8,
    randomness: np.random.Generator | int | None = None,
    measurer: Measurer | None = None,
    client_angles: list[Angle8] | None = None,
) -> tuple[Statevector, CrspSession]:
    """Full honest execution; the returned one-qubit state should be |+_theta>."""
    if n < 2:
        raise CrspError("need at least two clients")
    rng = randomness if isinstance(randomness, np.random.Generator) else np.random.default_rng(randomness)
    thetas = [Angle8(int(a)) for a in client_angles] if client_angles is not None else [Angle8(int(rng.integers(8))) for _ in range(n)]
    if len(thetas) != n:
        raise CrspError(f"{len(thetas)} client angles for {n} clients")
    session = CrspSession(n, thetas, Angle8(theta))
    for j, th in enumerate(thetas, 1):
        record(session.transcript, f"client{j}", "client->server", "qubit", {"angle": th.k})
    sv, t = merge_into(Statevector.empty(), "out", thetas, measurer if measurer is not None else rng)
    session.t = t
    record(session.transcript, "server", "server->orchestrator", "bits", {"t": list(t)})
    for j, th in enumerate(thetas, 1):
        record(session.transcript, f"client{j}", "client->orchestrator", "bits", {"angle": th.k})
    session.b, session.correction = orchestrator_correction(theta, session, rng)
    record(session.transcript, "orchestrator", "orchestrator->server", "correction",
           {"b": session.b, "angle": session.correction.k})
    sv = apply_correction(sv, "out", session.b, session.correction)
    return sv, session


def crsp_branches(thetas: list[Angle8], theta: Angle8, b: int, tol: float = 1e-12):
    """Every measurement branch of an honest run with fixed client angles and bit b.

    Yields (t, probability, final vector)."""
    n = len(thetas)
    start = Statevector.empty().add_qubit("out", plus_vector(thetas[-1]))
    stack = [(start, [], 1.0)]
    while stack:
        sv, t, p = stack.pop()
        j = len(t)
        if j == n - 1:
            session = CrspSession(n, list(thetas), theta, t)
            b_, corr = orchestrator_correction(theta, session, b=b)
            yield tuple(t), p, apply_correction(sv, "out", b_, corr).vector()
            continue
        tgt = ("merge-target", j)
        grown = sv.add_qubit(tgt, plus_vector(thetas[j])).cnot("out", tgt)
        for bit in (0, 1):
            bra = np.zeros(2, dtype=complex)
            bra[bit] = 1
            q, post = grown.project(tgt, bra)
            if q > tol:
                stack.append((post, t + [bit], p * q))


def fidelity_plus(vec: np.ndarray, theta: Angle8) -> float:
    return float(abs(np.vdot(plus_vector(theta), vec)) ** 2)


# -- security experiment -------------------------------------------------------


class CrspTranscriptSample(NamedTuple):
    """What a distinguisher sees: target, angle of the honest qubit the server holds,
    the bit reported for it, and the orchestrator's correction."""

    target: int
    received: int
    t_h: int
    correction_bit: int
    correction_angle: int


@dataclass(frozen=True)
class CoalitionStrategy:
    """Deterministic behaviour of a coalition of the server and every client except h.

    ``thetas`` are the corrupted clients' declared angles (index -> Angle8),
    ``t`` the bits reported for corrupted targets, and ``t_h`` the bit
    reported for the honest client's qubit as a function of its angle.
    """

    thetas: Mapping[int, int]
    t: Mapping[int, int]
    t_h: Callable[[int], int] | tuple[int, ...] = (0,) * 8

    def report_honest(self, received: int) -> int:
        if callable(self.t_h):
            return int(self.t_h(received)) & 1
        return self.t_h[received] & 1


def _theta_prime(n: int, h: int, strategy: CoalitionStrategy, theta_h: int, t_h: int) -> int:
    """theta' mod 8 with the honest client's angle and bit substituted at index h."""
    total = theta_h if h == n else int(strategy.thetas.get(n, 0))
    for j in range(1, n):
        th = theta_h if j == h else int(strategy.thetas.get(j, 0))
        bit = t_h if j == h else int(strategy.t.get(j, 0)) & 1
        total += -th if bit else th
    return total % 8


@lru_cache(maxsize=None)
def _real_received(k: int) -> int:
    return angle_of(plus_vector(Angle8(k))).k


@lru_cache(maxsize=None)
def _ideal_received(theta: int, k: int, b_h: int) -> int:
    """Angle of Z(theta_h) X**b_h |+_theta>, the qubit the simulator forwards."""
    vec = plus_vector(Angle8(theta))
    vec = _X @ vec if b_h else vec
    return angle_of(z_rotation(Angle8(k)) @ vec).k


def crsp_real_distribution(n: int, h: int, theta: Angle8, strategy: CoalitionStrategy) -> dict:
    """Exact joint distribution of the transcript variables when the protocol runs for real."""
    dist: dict[CrspTranscriptSample, float] = {}
    target = Angle8(theta).k
    for k, b in product(range(8), (0, 1)):
        received = _real_received(k)
        t_h = strategy.report_honest(received) if h < n else 0
        tp = _theta_prime(n, h, strategy, k, t_h)
        corr = ((-target if b else target) - tp) % 8
        key = CrspTranscriptSample(target, received, t_h, b, corr)
        dist[key] = dist.get(key, 0.0) + 1 / 16
    return dist


def crsp_ideal_distribution(n: int, h: int, theta: Angle8, strategy: CoalitionStrategy) -> dict:
    """Same variables when the server instead gets |+_theta> from an ideal resource
    and a simulator plays the honest client and the orchestrator without knowing theta.

    The simulator samples theta_h and b_h, forwards Z(theta_h) X**b_h |+_theta>,
    then sends the correction (t_h xor b_h, -theta') computed with its own theta_h.
    """
    dist: dict[CrspTranscriptSample, float] = {}
    target = Angle8(theta).k
    for k, b_h in product(range(8), (0, 1)):
        received = _ideal_received(target, k, b_h)
        t_h = strategy.report_honest(received) if h < n else 0
        tp = _theta_prime(n, h, strategy, k, t_h)
        key = CrspTranscriptSample(target, received, t_h, t_h ^ b_h, -tp % 8)
        dist[key] = dist.get(key, 0.0) + 1 / 16
    return dist


def crsp_security_experiment(n: int, h: int, theta: Angle8, strategy: CoalitionStrategy) -> tuple[dict, dict]:
    if n < 2 or not 1 <= h <= n:
        raise CrspError("need n >= 2 and 1 <= h <= n")
    return crsp_real_distribution(n, h, theta, strategy), crsp_ideal_distribution(n, h, theta, strategy)


def deterministic_strategies(n: int, h: int, adaptive: bool, corrupted_angles=range(8)):
    """Constant reports for corrupted targets, every assignment of corrupted angles, and
    either constant or fully adaptive (all 256 maps) reports for the honest qubit."""
    corrupted = [j for j in range(1, n + 1) if j != h]
    measured = [j for j in range(1, n) if j != h]
    honest_maps = list(product((0, 1), repeat=8)) if adaptive and h < n else [(0,) * 8, (1,) * 8]
    for angles in product(corrupted_angles, repeat=len(corrupted)):
        for bits in product((0, 1), repeat=len(measured)):
            for f in honest_maps:
                yield CoalitionStrategy(dict(zip(corrupted, angles)), dict(zip(measured, bits)), f)


def marginal(dist: Mapping, attr: str) -> dict:
    out: dict = {}
    for k, p in dist.items():
        v = getattr(k, attr)
        out[v] = out.get(v, 0.0) + p
    return out


def max_security_gap(n: int, adaptive: bool) -> float:
    worst = 0.0
    for h in range(1, n + 1):
        for strategy in deterministic_strategies(n, h, adaptive):
            for theta in range(8):
                real, ideal = crsp_security_experiment(n, h, Angle8(theta), strategy)
                worst = max(worst, total_variation(real, ideal))
    return worst


__all__ = [
    "CoalitionStrategy",
    "CrspError",
    "CrspSession",
    "CrspTranscriptSample",
    "angle_of",
    "apply_correction",
    "combine_angles",
    "crsp_branches",
    "crsp_honest_run",
    "crsp_ideal_distribution",
    "crsp_real_distribution",
    "crsp_security_experiment",
    "deterministic_strategies",
    "fidelity_plus",
    "marginal",
    "max_security_gap",
    "merge_into",
    "orchestrator_correction",
    "single_merge_step",
]
