"""Dense-matrix reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
MATS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_letters(letters: str, phase: complex = 1) -> np.ndarray:
    out = np.array([[phase]], dtype=complex)
    for ch in letters:
        out = np.kron(out, MATS[ch])
    return out


def dense_graph_state(vertices, edges) -> np.ndarray:
    """|G> built from the computational basis: amplitude (-1)**(#edges inside the 1-set)."""
    idx = {v: i for i, v in enumerate(vertices)}
    n = len(vertices)
    amps = np.empty(2**n, dtype=complex)
    for k, bits in enumerate(itertools.product((0, 1), repeat=n)):
        sign = sum(bits[idx[a]] & bits[idx[b]] for a, b in edges) % 2
        amps[k] = (-1) ** sign
    return amps / np.sqrt(2**n)


def plus_theta(k: int) -> np.ndarray:
    return np.array([1, np.exp(1j * np.pi * k / 4)]) / np.sqrt(2)


def same_ray(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    return abs(abs(np.vdot(a, b)) - np.linalg.norm(a) * np.linalg.norm(b)) <= atol


def dense_mbqc_distribution(pattern) -> dict:
    """Output distribution of a classical I/O pattern by summing over all outcome strings."""
    g = pattern.graph
    psi = dense_graph_state(g.vertices, g.edge_list)
    order = pattern.order
    out: dict = {}
    for bits in itertools.product((0, 1), repeat=len(order)):
        s = dict(zip(order, bits))
        bra = {}
        for v in order:
            sx = sum(s[w] for w in pattern.flow.sx.get(v, ())) % 2
            sz = sum(s[w] for w in pattern.flow.sz.get(v, ())) % 2
            k = (-1) ** sx * pattern.angles[v].k + 4 * sz + 4 * pattern.input_bits.get(v, 0)
            bra[v] = plus_theta(k + 4 * s[v])
        vec = np.array([1.0 + 0j])
        for v in g.vertices:
            vec = np.kron(vec, bra[v])
        p = abs(np.vdot(vec, psi)) ** 2
        key = tuple(s[v] for v in g.outputs)
        out[key] = out.get(key, 0.0) + p
    return {k: p for k, p in out.items() if p > 1e-13}


def _simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the probability simplex in R^k with coordinates in multiples of 1/steps."""
    if k == 1:
        return np.ones((1, 1))
    pts = [c for c in itertools.product(range(steps + 1), repeat=k - 1) if sum(c) <= steps]
    arr = np.array(pts, dtype=float)
    return np.column_stack([arr, steps - arr.sum(axis=1)]) / steps


def grid_search_epsilon(matrix: np.ndarray, steps: int = 2000, zoom_rounds: int = 12) -> float:
    """Brute-force max over distributions p of min_e (p @ matrix)[e].

    Two or three tests: one fine grid over the simplex (rounding the optimum to
    the grid moves any coverage by at most 2/steps).  Four or five tests: a
    coarse grid followed by repeated zooming around the incumbent; the
    objective is concave so the local search converges to the global value.
    """
    k = matrix.shape[0]
    m = matrix.astype(float)
    if k <= 3:
        best = 0.0
        grid = _simplex_grid(k, steps)
        for chunk in np.array_split(grid, max(1, len(grid) // 200_000)):
            best = max(best, float((chunk @ m).min(axis=1).max()))
        return best
    grid = _simplex_grid(k, 24)
    vals = (grid @ m).min(axis=1)
    centre, best = grid[vals.argmax()], float(vals.max())
    radius = 1 / 12
    offsets = np.array(list(itertools.product(np.linspace(-1, 1, 9), repeat=k - 1)))
    for _ in range(zoom_rounds):
        cand = np.empty((len(offsets), k))
        cand[:, : k - 1] = centre[: k - 1] + radius * offsets
        cand[:, k - 1] = 1 - cand[:, : k - 1].sum(axis=1)
        cand = cand[(cand >= 0).all(axis=1)]
        vals = (cand @ m).min(axis=1)
        if vals.max() > best:
            best, centre = float(vals.max()), cand[vals.argmax()]
        radius /= 2
    return best


def highs_epsilon(matrix: np.ndarray) -> float:
    from scipy.optimize import linprog

    matrix = np.asarray(matrix, dtype=float)
    k, n_err = matrix.shape
    c = np.zeros(k + 1)
    c[-1] = -1
    a = np.zeros((1 + n_err, k + 1))
    a[0, :k] = 1
    a[1:, :k] = -matrix.T
    a[1:, k] = 1
    b = np.zeros(1 + n_err)
    b[0] = 1
    res = linprog(c, A_ub=a, b_ub=b, bounds=[(0, None)] * (k + 1), method="highs")
    assert res.status == 0
    return -res.fun
