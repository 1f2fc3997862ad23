"""Exact statevector simulation of rotated-plus preparation, graph entangling and
X-Y plane measurements, plus exhaustive enumeration of adaptive programs."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Callable, Hashable, Iterable
from dataclasses import dataclass

import numpy as np

from dummyless.graphs import OpenGraph
from dummyless.pauli import PauliOp

MAX_QUBITS = 20
ATOL = 1e-9
_SQRT1_2 = 1 / math.sqrt(2)


class SimulationError(RuntimeError):
    pass


class BudgetExceeded(SimulationError):
    pass


@dataclass(frozen=True, order=True)
class Angle8:
    """Angle k*pi/4 with k taken mod 8."""

    k: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", int(self.k) % 8)

    def __add__(self, other: Angle8 | int) -> Angle8:
        return Angle8(self.k + _k(other))

    __radd__ = __add__

    def __sub__(self, other: Angle8 | int) -> Angle8:
        return Angle8(self.k - _k(other))

    def __rsub__(self, other: Angle8 | int) -> Angle8:
        return Angle8(_k(other) - self.k)

    def __neg__(self) -> Angle8:
        return Angle8(-self.k)

    def signed(self, bit: int) -> Angle8:
        """``(-1)**bit * self``."""
        return -self if bit & 1 else self

    @property
    def radians(self) -> float:
        return self.k * math.pi / 4

    def __int__(self) -> int:
        return self.k

    def __repr__(self) -> str:
        return f"Angle8({self.k})"


PI = Angle8(4)


def _k(a: Angle8 | int) -> int:
    return a.k if isinstance(a, Angle8) else int(a)


def plus_vector(theta: Angle8 | int) -> np.ndarray:
    """(|0> + e^{i theta}|1>)/sqrt(2)."""
    return np.array([_SQRT1_2, _SQRT1_2 * np.exp(1j * Angle8(_k(theta)).radians)], dtype=complex)


# -- measurement choice ------------------------------------------------------


class Measurer:
    """Decides measurement outcomes given the probability of outcome 0."""

    def choose(self, p0: float) -> int:
        raise NotImplementedError


class SampledMeasurer(Measurer):
    """Born-rule sampling from an explicit numpy Generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def choose(self, p0: float) -> int:
        return 0 if self.rng.random() < p0 else 1


def as_measurer(randomness: Measurer | np.random.Generator | int | None) -> Measurer:
    if isinstance(randomness, Measurer):
        return randomness
    if isinstance(randomness, np.random.Generator):
        return SampledMeasurer(randomness)
    return SampledMeasurer(np.random.default_rng(randomness))


# -- state ---------------------------------------------------------------------


class Statevector:
    """Pure state on labelled qubits; qubit ``labels[i]`` is tensor axis i.

    Operations return new instances.  Measured qubits are projected out
    immediately so the array only ever holds live qubits.
    """

    __slots__ = ("amps", "labels", "max_qubits")

    def __init__(self, amps: np.ndarray, labels: Iterable[Hashable], max_qubits: int = MAX_QUBITS):
        labels = tuple(labels)
        if len(labels) > max_qubits:
            raise SimulationError(f"{len(labels)} qubits exceeds cap {max_qubits}")
        if len(set(labels)) != len(labels):
            raise SimulationError("duplicate qubit labels")
        self.amps = np.asarray(amps, dtype=complex).reshape((2,) * len(labels))
        self.labels = labels
        self.max_qubits = max_qubits

    @classmethod
    def empty(cls, max_qubits: int = MAX_QUBITS) -> Statevector:
        return cls(np.ones((), dtype=complex), (), max_qubits)

    def __repr__(self) -> str:
        return f"Statevector({len(self.labels)} qubits: {list(self.labels)})"

    @property
    def n(self) -> int:
        return len(self.labels)

    def vector(self, order: Iterable[Hashable] | None = None) -> np.ndarray:
        """Flat amplitude vector with ``order[0]`` the most significant qubit."""
        if order is None:
            return self.amps.reshape(-1).copy()
        order = tuple(order)
        perm = [self.axis(q) for q in order]
        return np.transpose(self.amps, perm).reshape(-1).copy()

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def axis(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SimulationError(f"qubit {label!r} not present (measured or never prepared)") from None

    def add_qubit(self, label: Hashable, vec: np.ndarray) -> Statevector:
        if label in self.labels:
            raise SimulationError(f"qubit {label!r} already present")
        amps = np.multiply.outer(self.amps, np.asarray(vec, dtype=complex))
        return Statevector(amps, self.labels + (label,), self.max_qubits)

    def apply_1q(self, label: Hashable, mat: np.ndarray) -> Statevector:
        ax = self.axis(label)
        amps = np.moveaxis(np.tensordot(mat, self.amps, axes=([1], [ax])), 0, ax)
        return Statevector(amps, self.labels, self.max_qubits)

    def cz(self, a: Hashable, b: Hashable) -> Statevector:
        ia, ib = self.axis(a), self.axis(b)
        if ia == ib:
            raise SimulationError("CZ on a single qubit")
        amps = self.amps.copy()
        idx = [slice(None)] * self.n
        idx[ia] = 1
        idx[ib] = 1
        amps[tuple(idx)] *= -1
        return Statevector(amps, self.labels, self.max_qubits)

    def cnot(self, control: Hashable, target: Hashable) -> Statevector:
        ic, it = self.axis(control), self.axis(target)
        if ic == it:
            raise SimulationError("CNOT on a single qubit")
        amps = self.amps.copy()
        idx = [slice(None)] * self.n
        idx[ic] = 1
        sub = amps[tuple(idx)]
        t_ax = it if it < ic else it - 1
        amps[tuple(idx)] = np.flip(sub, axis=t_ax)
        return Statevector(amps, self.labels, self.max_qubits)

    def project(self, label: Hashable, bra: np.ndarray) -> tuple[float, Statevector]:
        """Contract ``label`` with ``bra``; returns (probability, renormalised remainder)."""
        ax = self.axis(label)
        amps = np.tensordot(np.asarray(bra, dtype=complex), self.amps, axes=([0], [ax]))
        p = float(np.vdot(amps, amps).real)
        if p > 0:
            amps = amps / math.sqrt(p)
        labels = self.labels[:ax] + self.labels[ax + 1 :]
        return p, Statevector(amps, labels, self.max_qubits)


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"X": _X, "Y": _Y, "Z": _Z}


def z_rotation(theta: Angle8 | int) -> np.ndarray:
    """Z(theta) = diag(1, e^{i theta})."""
    return np.diag([1.0, np.exp(1j * Angle8(_k(theta)).radians)]).astype(complex)


def prep_plus(theta: Angle8 | int, label: Hashable = 0) -> Statevector:
    return Statevector.empty().add_qubit(label, plus_vector(theta))


def prepare_product(angles: dict, order: Iterable[Hashable] | None = None, max_qubits: int = MAX_QUBITS) -> Statevector:
    sv = Statevector.empty(max_qubits)
    for v in order if order is not None else angles:
        sv = sv.add_qubit(v, plus_vector(angles[v]))
    return sv


def entangle_graph(sv: Statevector, g: OpenGraph) -> Statevector:
    if set(sv.labels) != set(g.vertices):
        raise SimulationError("statevector qubits do not match graph vertices")
    for a, b in g.edge_list:
        sv = sv.cz(a, b)
    return sv


def apply_pauli(sv: Statevector, p: PauliOp) -> Statevector:
    """Apply the letters of ``p`` (global phase dropped)."""
    letters = p.letters
    for v, ch in zip(p.vertices, letters):
        if ch != "I":
            sv = sv.apply_1q(v, _PAULI[ch])
    return sv


def apply_letter(sv: Statevector, v: Hashable, letter: str) -> Statevector:
    if letter == "I":
        return sv
    return sv.apply_1q(v, _PAULI[letter])


def xy_bras(delta: Angle8 | int) -> tuple[np.ndarray, np.ndarray]:
    """Conjugated |+_delta>, |-_delta> as bras."""
    ph = np.exp(-1j * Angle8(_k(delta)).radians)
    return (
        np.array([_SQRT1_2, _SQRT1_2 * ph], dtype=complex),
        np.array([_SQRT1_2, -_SQRT1_2 * ph], dtype=complex),
    )


_Z_BRAS = (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex))


def _measure(sv: Statevector, v: Hashable, bras, randomness) -> tuple[int, Statevector]:
    m = as_measurer(randomness)
    p0, post0 = sv.project(v, bras[0])
    bit = m.choose(min(max(p0, 0.0), 1.0))
    if bit == 0:
        return 0, post0
    _, post1 = sv.project(v, bras[1])
    return 1, post1


def measure_xy(sv: Statevector, v: Hashable, delta: Angle8 | int, randomness) -> tuple[int, Statevector]:
    """Measure ``v`` in {|+_delta>, |-_delta>}; outcome 0 is |+_delta>."""
    return _measure(sv, v, xy_bras(delta), randomness)


def measure_z(sv: Statevector, v: Hashable, randomness) -> tuple[int, Statevector]:
    return _measure(sv, v, _Z_BRAS, randomness)


def graph_state(g: OpenGraph, max_qubits: int = MAX_QUBITS) -> Statevector:
    return entangle_graph(prepare_product({v: 0 for v in g.vertices}, g.vertices, max_qubits), g)


# -- exhaustive enumeration ----------------------------------------------------


class _DeadBranch(Exception):
    pass


class _ReplayMeasurer(Measurer):
    def __init__(self, prefix: tuple[int, ...], tol: float):
        self.prefix = prefix
        self.tol = tol
        self.trace: list[int] = []
        self.open: list[int] = []
        self.prob = 1.0

    def choose(self, p0: float) -> int:
        pos = len(self.trace)
        if pos < len(self.prefix):
            bit = self.prefix[pos]
        else:
            bit = 0 if p0 > self.tol else 1
            if bit == 0 and 1 - p0 > self.tol:
                self.open.append(pos)
        p = p0 if bit == 0 else 1 - p0
        if p <= self.tol:
            raise _DeadBranch
        self.prob *= p
        self.trace.append(bit)
        return bit


def output_distribution(
    program: Callable[[Measurer], Hashable],
    max_measurements: int = 12,
    tol: float = 1e-13,
) -> dict[Hashable, float]:
    """Exact outcome distribution of a deterministic adaptive program.

    ``program`` receives a :class:`Measurer` and must route every
    measurement through it; it is re-run once per leaf of the outcome tree
    with earlier outcomes replayed, so any internal randomness must be
    seeded identically on every call.
    """
    dist: dict[Hashable, float] = defaultdict(float)
    stack: list[tuple[int, ...]] = [()]
    while stack:
        prefix = stack.pop()
        m = _ReplayMeasurer(prefix, tol)
        try:
            result = program(m)
        except _DeadBranch:
            continue
        if len(m.trace) > max_measurements:
            raise BudgetExceeded(f"program made {len(m.trace)} measurements (budget {max_measurements})")
        for pos in m.open:
            stack.append(tuple(m.trace[:pos]) + (1,))
        dist[result] += m.prob
    total = sum(dist.values())
    if abs(total - 1) > ATOL:
        raise SimulationError(f"branch probabilities sum to {total}")
    return dict(dist)


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
