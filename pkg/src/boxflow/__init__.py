"""Approximate undirected max flow and transshipment via box-simplex games."""

from boxflow.graphs import (
    DemandBalanceError,
    Graph,
    GraphFormatError,
    apply_B,
    apply_BT,
    load_graph,
    parse_demand,
    validate_demand,
)
from boxflow.sparsemat import ColSparseMatrix, compose, incidence_matrix, weight_inverse_matrix
from boxflow.boxsimplex import (
    BoxSimplexInstance,
    SaddlePoint,
    SolverConfig,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphFormatError",
    "DemandBalanceError",
    "load_graph",
    "parse_demand",
    "apply_B",
    "apply_BT",
    "validate_demand",
    "ColSparseMatrix",
    "compose",
    "incidence_matrix",
    "weight_inverse_matrix",
    "BoxSimplexInstance",
    "SaddlePoint",
    "SolverConfig",
    "solve",
]
