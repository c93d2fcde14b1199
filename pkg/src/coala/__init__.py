"""Inversion-free weighted low-rank approximation.

Solves ``min ||(W - W')X||_F`` over rank-r ``W'`` through the R factor of
``X^T`` instead of the Gram matrix ``X X^T``, with out-of-core TSQR for tall
activation streams and an analysis harness for the stability and
convergence behaviour.
"""

from .matcore import (
    CholeskyBreakdown,
    CoalaError,
    DEFAULT_TOLERANCES,
    DenseMatrix,
    DimensionError,
    FactorPair,
    NumericalFailure,
    Precision,
    PreconditionError,
    ProblemInstance,
    RFactor,
    SolveStatus,
    SpectralSummary,
    Tolerances,
    objective_value,
    regularized_objective,
    subspace_distance,
)
from .tsqr import (
    ArrayChunks,
    BufferMeter,
    ClmxDirectoryChunks,
    ClmxFileChunks,
    Strategy,
    TsqrPlan,
    augment_with_regularizer,
    run_plan,
    tsqr_sequential,
    tsqr_tree,
)
from .wlra import (
    SolverMethod,
    qr_reduce,
    solve,
    solve_alpha,
    solve_coala,
    solve_from_r,
    solve_gram_cholesky,
    solve_gram_svd,
    solve_projection,
    solve_reference,
    solve_regularized,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayChunks", "BufferMeter", "CholeskyBreakdown", "ClmxDirectoryChunks", "ClmxFileChunks",
    "CoalaError", "DEFAULT_TOLERANCES", "DenseMatrix", "DimensionError", "FactorPair",
    "NumericalFailure", "Precision", "PreconditionError", "ProblemInstance", "RFactor",
    "SolveStatus", "SolverMethod", "SpectralSummary", "Strategy", "Tolerances", "TsqrPlan",
    "augment_with_regularizer", "objective_value", "qr_reduce", "regularized_objective",
    "run_plan", "solve", "solve_alpha", "solve_coala", "solve_from_r", "solve_gram_cholesky",
    "solve_gram_svd", "solve_projection", "solve_reference", "solve_regularized",
    "subspace_distance", "tsqr_sequential", "tsqr_tree",
]
