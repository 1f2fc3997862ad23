"""Optimal test distributions on small graphs.

Enumerates every dummyless test and every targeted Z error, then maximises
the worst-case detection rate with a dense tableau simplex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dummyless.graphs import OpenGraph
from dummyless.traps import (
    ErrorOp,
    TestDistribution,
    TrappifiedTest,
    _valid_masks,
    make_test,
)

SIZE_CAP = 12
TOL = 1e-7


class OptimizerError(ValueError):
    pass


class Uncoverable(OptimizerError):
    """Some targeted error is detected by no test."""

    def __init__(self, error: ErrorOp):
        self.error = error
        super().__init__(f"error Z on {sorted(map(str, error.support))} is detected by no test")


def _check_size(g: OpenGraph) -> None:
    if len(g) > SIZE_CAP:
        raise OptimizerError(f"{len(g)} vertices exceeds the enumeration cap of {SIZE_CAP}")


def enumerate_tests(g: OpenGraph) -> list[TrappifiedTest]:
    """Every admissible test with a nonempty trap set, ordered by trap mask."""
    _check_size(g)
    full = (1 << len(g)) - 1
    return [
        make_test(g, g.subset(t), simulate=False)
        for t in range(1, full + 1)
        if _valid_masks(g, full & ~t, t)
    ]


def enumerate_errors(g: OpenGraph) -> list[ErrorOp]:
    """Every nonempty Z support except the harmless one (Z on all odd-degree vertices)."""
    _check_size(g)
    star = g.mask(g.odd_vertices)
    return [ErrorOp.from_mask(g, m) for m in range(1, 1 << len(g)) if m != star]


@dataclass
class LpInstance:
    graph: OpenGraph
    tests: list[TrappifiedTest]
    errors: list[ErrorOp]
    matrix: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, g: OpenGraph) -> LpInstance:
        tests, errors = enumerate_tests(g), enumerate_errors(g)
        t = np.array([x.trap_mask for x in tests], dtype=np.int64)
        e = np.array([x.mask for x in errors], dtype=np.int64)
        r = (np.bitwise_count(t[:, None] & e[None, :]) % 2).astype(np.uint8)
        return cls(g, tests, errors, r)


@dataclass
class LpSolution:
    instance: LpInstance
    weights: np.ndarray
    epsilon: float
    dual: np.ndarray
    pivots: int

    def coverage(self) -> np.ndarray:
        return self.weights @ self.instance.matrix

    def violations(self, tol: float = TOL) -> list[str]:
        out = []
        if (self.weights < -tol).any():
            out.append("negative weight")
        if self.weights.sum() > 1 + tol:
            out.append(f"weights sum to {self.weights.sum()}")
        cov = self.coverage()
        bad = np.flatnonzero(cov < self.epsilon - tol)
        out += [f"error {self.instance.errors[i].label()} covered {cov[i]:.9f} < {self.epsilon:.9f}" for i in bad]
        return out

    def to_distribution(self, drop: float = 1e-12) -> TestDistribution:
        keep = [(t, p) for t, p in zip(self.instance.tests, self.weights) if p > drop]
        total = sum(p for _, p in keep)
        return TestDistribution.explicit(
            self.instance.graph, [(t.holes, p / total) for t, p in keep], "optimal"
        )

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "distribution": self.to_distribution().to_json()}


def simplex_max(c: np.ndarray, a: np.ndarray, b: np.ndarray, max_pivots: int = 100_000):
    """Maximise c.x subject to a x <= b, x >= 0, with b >= 0.

    Dense tableau with Bland's rule.  Returns (x, objective, dual y, pivots).
    """
    m, n = a.shape
    if (b < 0).any():
        raise OptimizerError("right-hand side must be nonnegative")
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -c
    basis = list(range(n, n + m))
    eps = 1e-12
    pivots = 0
    while True:
        enter = next((j for j in range(n + m) if tab[m, j] < -eps), None)
        if enter is None:
            break
        col = tab[:m, enter]
        rows = np.flatnonzero(col > eps)
        if rows.size == 0:
            raise OptimizerError("objective is unbounded")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + eps]
        leave = min(tied, key=lambda r: basis[r])
        tab[leave] /= tab[leave, enter]
        others = np.arange(m + 1) != leave
        tab[others] -= np.outer(tab[others, enter], tab[leave])
        basis[leave] = enter
        pivots += 1
        if pivots > max_pivots:
            raise OptimizerError("pivot budget exhausted")
    x = np.zeros(n + m)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    return x[:n], float(tab[m, -1]), tab[m, n : n + m].copy(), pivots


def solve_lp(instance: LpInstance) -> LpSolution:
    """Maximise epsilon subject to sum p <= 1 and every error covered with weight >= epsilon.

    Variables are (p_1..p_m, epsilon).  The result is certified by the dual
    from the final tableau: dual feasibility and a zero duality gap.
    """
    r = instance.matrix.astype(float)
    m_tests, n_err = r.shape
    if m_tests == 0 or n_err == 0:
        raise OptimizerError("empty instance")
    uncovered = np.flatnonzero(r.sum(axis=0) == 0)
    if uncovered.size:
        raise Uncoverable(instance.errors[int(uncovered[0])])
    a = np.zeros((1 + n_err, m_tests + 1))
    a[0, :m_tests] = 1
    a[1:, :m_tests] = -r.T
    a[1:, m_tests] = 1
    b = np.zeros(1 + n_err)
    b[0] = 1
    c = np.zeros(m_tests + 1)
    c[-1] = 1
    x, obj, y, pivots = simplex_max(c, a, b)
    if (y < -TOL).any() or (a.T @ y < c - TOL).any() or abs(b @ y - obj) > TOL:
        raise OptimizerError("optimality certificate failed")
    sol = LpSolution(instance, x[:m_tests], float(x[-1]), y, pivots)
    bad = sol.violations()
    if bad:
        raise OptimizerError("solution violates constraints: " + "; ".join(bad[:3]))
    return sol


def optimize(g: OpenGraph) -> LpSolution:
    return solve_lp(LpInstance.build(g))


__all__ = [
    "LpInstance",
    "LpSolution",
    "OptimizerError",
    "SIZE_CAP",
    "Uncoverable",
    "enumerate_errors",
    "enumerate_tests",
    "optimize",
    "simplex_max",
    "solve_lp",
]
