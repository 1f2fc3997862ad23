"""Phase-tracked Pauli strings over a labelled vertex set.

A string is stored as two bitmasks (bit i refers to ``vertices[i]``) and a
phase exponent k, representing ``i**k`` times the tensor product of the
letters I, X, Y, Z given by ``(x, z) = (0,0), (1,0), (1,1), (0,1)``.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from dummyless.graphs import Vertex

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {v: k for k, v in _LETTERS.items()}
_PHASE_STR = {0: "+", 1: "+i", 2: "-", 3: "-i"}


class PauliError(ValueError):
    pass


@dataclass(frozen=True)
class PauliOp:
    vertices: tuple[Vertex, ...]
    x_bits: int = 0
    z_bits: int = 0
    phase_exp: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)
        limit = 1 << len(self.vertices)
        if self.x_bits >= limit or self.z_bits >= limit or self.x_bits < 0 or self.z_bits < 0:
            raise PauliError("bit masks exceed vertex count")

    # -- constructors --------------------------------------------------------

    @classmethod
    def identity(cls, vertices: Iterable[Vertex]) -> PauliOp:
        return cls(tuple(vertices))

    @classmethod
    def from_letters(cls, vertices: Iterable[Vertex], letters: str | Mapping, phase_exp: int = 0) -> PauliOp:
        """Build from a letter string aligned with ``vertices`` or a ``{vertex: letter}`` map."""
        vertices = tuple(vertices)
        if isinstance(letters, str):
            if len(letters) != len(vertices):
                raise PauliError(f"{len(letters)} letters for {len(vertices)} vertices")
            items = zip(vertices, letters)
        else:
            items = letters.items()
        idx = {v: i for i, v in enumerate(vertices)}
        x = z = 0
        for v, letter in items:
            try:
                bx, bz = _BITS[letter.upper()]
            except KeyError:
                raise PauliError(f"bad Pauli letter {letter!r}") from None
            if v not in idx:
                raise PauliError(f"unknown vertex {v!r}")
            x |= bx << idx[v]
            z |= bz << idx[v]
        return cls(vertices, x, z, phase_exp)

    @classmethod
    def z_on(cls, vertices: Iterable[Vertex], support: Iterable[Vertex]) -> PauliOp:
        return cls.from_letters(vertices, {v: "Z" for v in support})

    # -- inspection ----------------------------------------------------------

    def letter(self, v: Vertex) -> str:
        i = self.vertices.index(v)
        return _LETTERS[(self.x_bits >> i & 1, self.z_bits >> i & 1)]

    @property
    def letters(self) -> str:
        return "".join(
            _LETTERS[(self.x_bits >> i & 1, self.z_bits >> i & 1)] for i in range(len(self.vertices))
        )

    @property
    def phase(self) -> complex:
        return 1j**self.phase_exp

    @property
    def weight(self) -> int:
        return (self.x_bits | self.z_bits).bit_count()

    @property
    def is_identity(self) -> bool:
        return self.x_bits == 0 and self.z_bits == 0

    @property
    def is_z_free(self) -> bool:
        """True when no vertex carries the letter Z (Y is allowed)."""
        return self.z_bits & ~self.x_bits == 0

    def support(self) -> frozenset:
        m = self.x_bits | self.z_bits
        return frozenset(v for i, v in enumerate(self.vertices) if m >> i & 1)

    def __str__(self) -> str:
        return f"{_PHASE_STR[self.phase_exp]}{self.letters}"

    # -- algebra -------------------------------------------------------------

    def __mul__(self, other: PauliOp) -> PauliOp:
        return pauli_mul(self, other)

    def commutes(self, other: PauliOp) -> bool:
        _check_same(self, other)
        sym = (self.x_bits & other.z_bits).bit_count() + (self.z_bits & other.x_bits).bit_count()
        return sym % 2 == 0

    def without_phase(self) -> PauliOp:
        return PauliOp(self.vertices, self.x_bits, self.z_bits, 0)

    def to_matrix(self) -> np.ndarray:
        """Dense matrix, first vertex is the most significant tensor factor."""
        mats = {
            "I": np.eye(2, dtype=complex),
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        out = np.array([[self.phase]], dtype=complex)
        for ch in self.letters:
            out = np.kron(out, mats[ch])
        return out


def _check_same(a: PauliOp, b: PauliOp) -> None:
    if a.vertices != b.vertices:
        raise PauliError("Pauli operators act on different vertex sets")


def pauli_mul(a: PauliOp, b: PauliOp) -> PauliOp:
    """Product ``a @ b`` with exact phase.

    Each letter is rewritten as ``i**(x&z) X**x Z**z``; commuting ``Z**z1``
    past ``X**x2`` contributes ``(-1)**|z1 & x2|``.
    """
    _check_same(a, b)
    x = a.x_bits ^ b.x_bits
    z = a.z_bits ^ b.z_bits
    k = (
        a.phase_exp
        + b.phase_exp
        + (a.x_bits & a.z_bits).bit_count()
        + (b.x_bits & b.z_bits).bit_count()
        + 2 * (a.z_bits & b.x_bits).bit_count()
        - (x & z).bit_count()
    )
    return PauliOp(a.vertices, x, z, k)


def zwt(p: PauliOp, region: Iterable[Vertex] | None = None) -> int:
    """Number of vertices in ``region`` (default: all) where ``p`` is the letter Z."""
    zonly = p.z_bits & ~p.x_bits
    if region is None:
        return zonly.bit_count()
    idx = {v: i for i, v in enumerate(p.vertices)}
    m = 0
    for v in region:
        if v not in idx:
            raise PauliError(f"unknown vertex {v!r}")
        m |= 1 << idx[v]
    return (zonly & m).bit_count()


def gf2_rank(ops: Iterable[PauliOp]) -> int:
    """Rank over GF(2) of the (x|z) rows, phases ignored."""
    ops = list(ops)
    if not ops:
        return 0
    n = len(ops[0].vertices)
    rows = []
    for p in ops:
        if len(p.vertices) != n:
            raise PauliError("operators have different lengths")
        rows.append(p.x_bits | (p.z_bits << n))
    return _rank_of_int_rows(rows)


def _rank_of_int_rows(rows: list[int]) -> int:
    pivots: dict[int, int] = {}
    rank = 0
    for r in rows:
        while r:
            top = r.bit_length() - 1
            if top in pivots:
                r ^= pivots[top]
            else:
                pivots[top] = r
                rank += 1
                break
    return rank


class PauliCoeffMap:
    """Sparse expansion ``sum_P alpha_P P`` over phase-free Pauli strings.

    Keys are ``(x_bits, z_bits)`` pairs interpreted as the Hermitian letter
    strings of :class:`PauliOp`.
    """

    def __init__(self, vertices: Iterable[Vertex], coeffs: Mapping[tuple[int, int], complex] | None = None):
        self.vertices = tuple(vertices)
        self.coeffs: dict[tuple[int, int], complex] = dict(coeffs or {})

    def __repr__(self) -> str:
        return f"PauliCoeffMap({len(self.coeffs)} terms on {len(self.vertices)} vertices)"

    def __len__(self) -> int:
        return len(self.coeffs)

    def add(self, p: PauliOp, coeff: complex = 1.0) -> None:
        if p.vertices != self.vertices:
            raise PauliError("operator acts on a different vertex set")
        key = (p.x_bits, p.z_bits)
        self.coeffs[key] = self.coeffs.get(key, 0) + coeff * p.phase

    def get(self, p: PauliOp) -> complex:
        return self.coeffs.get((p.x_bits, p.z_bits), 0)

    def trace(self) -> complex:
        return self.coeffs.get((0, 0), 0) * 2 ** len(self.vertices)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= atol for c in map(complex, self.coeffs.values()))

    def to_matrix(self) -> np.ndarray:
        dim = 2 ** len(self.vertices)
        out = np.zeros((dim, dim), dtype=complex)
        for (x, z), c in self.coeffs.items():
            out += c * PauliOp(self.vertices, x, z).to_matrix()
        return out

    @classmethod
    def from_matrix(cls, vertices: Iterable[Vertex], rho: np.ndarray, atol: float = 1e-14) -> PauliCoeffMap:
        """Decompose a dense matrix via ``alpha_P = Tr(P rho) / 2**n`` (4**n terms; small n only)."""
        vertices = tuple(vertices)
        n = len(vertices)
        out = cls(vertices)
        for x in range(1 << n):
            for z in range(1 << n):
                p = PauliOp(vertices, x, z)
                c = np.trace(p.to_matrix() @ rho) / 2**n
                if abs(c) > atol:
                    out.coeffs[(x, z)] = complex(c)
        return out


def apply_reflection(rho: PauliCoeffMap, region: Iterable[Vertex] | None = None) -> PauliCoeffMap:
    """Reflect through the X-Y plane on ``region``: ``alpha_P -> (-1)**zwt_region(P) alpha_P``."""
    region = rho.vertices if region is None else tuple(region)
    idx = {v: i for i, v in enumerate(rho.vertices)}
    m = 0
    for v in region:
        m |= 1 << idx[v]
    out = PauliCoeffMap(rho.vertices)
    for (x, z), c in rho.coeffs.items():
        sign = -1 if ((z & ~x) & m).bit_count() % 2 else 1
        out.coeffs[(x, z)] = sign * c
    return out
