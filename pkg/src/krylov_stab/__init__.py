"""Stabilized AB-GMRES and companion solvers for sparse least-squares problems."""

from .baselines import run_lsmr, run_lsqr
from .krylov import (
    ConvergenceTrace,
    Method,
    SolverOptions,
    SolverResult,
    Status,
    Subsolve,
    TraceRecord,
    run_gmres,
    run_stabilized_switching,
    solve,
)
from .sparse import SparseMatrix, mm_read, mm_write, prune_zero_rows_cols, spmv, spmv_t, transpose

__version__ = "0.1.0"

__all__ = [
    "ConvergenceTrace",
    "Method",
    "SolverOptions",
    "SolverResult",
    "SparseMatrix",
    "Status",
    "Subsolve",
    "TraceRecord",
    "mm_read",
    "mm_write",
    "prune_zero_rows_cols",
    "run_gmres",
    "run_lsmr",
    "run_lsqr",
    "run_stabilized_switching",
    "solve",
    "spmv",
    "spmv_t",
    "transpose",
]
