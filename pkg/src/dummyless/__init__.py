"""Dummyless trap-based verification of blind measurement-based quantum computation."""

from dummyless.graphs import OpenGraph, brickwork_graph, cycle_graph, line_graph, load_graph, star_graph
from dummyless.pauli import PauliOp, gf2_rank
from dummyless.sim import Angle8
from dummyless.stabilizers import dummyless_generators, s0_operator

__all__ = [
    "Angle8",
    "OpenGraph",
    "PauliOp",
    "brickwork_graph",
    "cycle_graph",
    "dummyless_generators",
    "gf2_rank",
    "line_graph",
    "load_graph",
    "s0_operator",
    "star_graph",
]
