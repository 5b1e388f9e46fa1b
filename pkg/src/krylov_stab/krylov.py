"""GMRES-type least-squares solvers with pluggable triangular subsolves.

The drivers here cover AB-GMRES (right preconditioning with ``B = A^T``),
BA-GMRES (left preconditioning), the range-restricted RR-AB-GMRES and plain
GMRES for square operators. At every evaluated iteration the small
triangular problem ``R_i y = t_i`` is handed to one of the ``subsolve_*``
functions; the stabilized variant solves the normal equations
``fl(R^T R) y = fl(R^T t)`` by Cholesky instead of back substitution.

Every driver keeps the iterate with the smallest
``||A^T r_i|| / ||A^T r_0||`` and returns it, not the last one.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from .dense import (
    EPS,
    GivensRotation,
    SingularTriangularError,
    apply_rotations,
    back_substitute,
    cholesky,
    cond2,
    jacobi_svd,
    make_givens,
)
from .sparse import SparseMatrix, as_sparse, spmv, spmv_t

__all__ = [
    "Method",
    "Subsolve",
    "Mode",
    "Status",
    "SolverOptions",
    "TraceRecord",
    "ConvergenceTrace",
    "SolverResult",
    "GmresWorkspace",
    "arnoldi_step",
    "start_vector",
    "subsolve_plain",
    "subsolve_stabilized",
    "subsolve_tsvd",
    "subsolve_tikhonov_normal",
    "subsolve_tikhonov_augmented",
    "SwitchController",
    "run_gmres",
    "run_stabilized_switching",
    "solve",
]


class Method(str, enum.Enum):
    AB_GMRES = "ab_gmres"
    BA_GMRES = "ba_gmres"
    RR_AB_GMRES = "rr_ab_gmres"
    GMRES = "gmres"
    LSQR = "lsqr"
    LSMR = "lsmr"


class Subsolve(str, enum.Enum):
    PLAIN = "plain"
    STABILIZED = "stabilized"
    TSVD = "tsvd"
    TIKHONOV_NORMAL = "tikhonov_normal"
    TIKHONOV_AUGMENTED = "tikhonov_augmented"


class Mode(str, enum.Enum):
    """Operator applied in one Arnoldi step."""

    AB = "AB"  # A A^T, basis in R^m
    BA = "BA"  # A^T A, basis in R^n
    RR = "RR"  # A A^T, started from A A^T r0
    GMRES = "GMRES"  # A itself (square)


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    BREAKDOWN_HAPPY = "breakdown_happy"
    BREAKDOWN_HARD = "breakdown_hard"
    STAGNATED = "stagnated"


_MODE_OF = {
    Method.AB_GMRES: Mode.AB,
    Method.BA_GMRES: Mode.BA,
    Method.RR_AB_GMRES: Mode.RR,
    Method.GMRES: Mode.GMRES,
}


@dataclass
class SolverOptions:
    """Knobs shared by every solver.

    ``max_iter=None`` means the row count for the GMRES family (the
    experiment budget) and ``20 * ncols`` for LSQR/LSMR.
    ``target_relres=0`` disables early stopping, so the whole budget is
    scanned for the best iterate.
    """

    method: Method = Method.AB_GMRES
    subsolve: Subsolve = Subsolve.PLAIN
    mu: float = 1e-8
    lam: float = 1e-16
    switch_factor: float = 10.0
    switching: bool = False
    max_iter: int | None = None
    target_relres: float = 1e-8
    eval_cadence: int = 1
    rng_seed: int | None = None
    cond_every: int = 0
    theorem4_const: float = 1.0
    reorthogonalize: bool = False
    stagnation_window: int = 500

    def __post_init__(self):
        self.method = Method(self.method)
        self.subsolve = Subsolve(self.subsolve)
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not self.switch_factor > 1.0:
            raise ValueError("switch_factor must exceed 1")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.eval_cadence < 1:
            raise ValueError("eval_cadence must be positive")
        if self.target_relres < 0:
            raise ValueError("target_relres must be nonnegative")
        if self.cond_every < 0:
            raise ValueError("cond_every must be nonnegative")


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    atr: float
    rnorm: float
    rho: float
    cond_R: float | None = None
    switched: bool = False
    theorem4_ok: bool | None = None
    ynorm: float | None = None
    tri_relres: float | None = None


@dataclass
class ConvergenceTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records and rec.iter <= self.records[-1].iter:
            raise ValueError("trace iterations must be strictly increasing")
        if not rec.atr >= 0:
            raise ValueError(f"invalid atr {rec.atr!r}")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __getitem__(self, k):
        return self.records[k]

    def column(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    @property
    def iters(self) -> np.ndarray:
        return np.array([r.iter for r in self.records], dtype=np.int64)

    @property
    def atr(self) -> np.ndarray:
        return self.column("atr")


@dataclass
class SolverResult:
    x_best: np.ndarray
    iter_best: int
    atr_best: float
    status: Status
    trace: ConvergenceTrace
    switched_at: int | None = None
    method: str = ""
    subsolve: str = ""
    iterations: int = 0
    seed: int | None = None
    wall_seconds: float = 0.0

    @property
    def label(self) -> str:
        return f"{self.method}:{self.subsolve}" if self.subsolve else self.method


# subsolves -------------------------------------------------------------------------


def subsolve_plain(R, t) -> np.ndarray:
    """``y = R^{-1} t`` by back substitution."""
    return back_substitute(R, t)


def subsolve_stabilized(R, t) -> np.ndarray:
    """Solve ``fl(R^T R) y = fl(R^T t)`` by Cholesky (LDL^T if it fails).

    The products are formed in working double precision on purpose: the
    rounding in ``R^T R`` lifts the tiny singular values of ``R``.
    """
    R = np.triu(np.asarray(R, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64)
    S = R.T @ R
    rhs = R.T @ t
    return cholesky(S).solve(rhs)


def subsolve_tsvd(R, t, mu: float, svd=jacobi_svd) -> np.ndarray:
    """Truncated-SVD solve keeping ``sigma_j >= mu * sigma_1``.

    If nothing survives the zero vector is returned.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    R = np.triu(np.asarray(R, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64)
    res = svd(R)
    s = res.singular_values
    if len(s) == 0 or s[0] == 0.0:
        return np.zeros(R.shape[1])
    k = int(np.count_nonzero(s >= mu * s[0]))
    coef = (res.U[:, :k].T @ t) / s[:k]
    return res.V[:, :k] @ coef


def subsolve_tikhonov_normal(R, t, lam: float) -> np.ndarray:
    """``(fl(R^T R) + lam I) y = R^T t`` by Cholesky."""
    R = np.triu(np.asarray(R, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64)
    S = R.T @ R
    S[np.diag_indices_from(S)] += lam
    return cholesky(S).solve(R.T @ t)


def subsolve_tikhonov_augmented(R, t, lam: float) -> np.ndarray:
    """``min || (t; 0) - (R; sqrt(lam) I) y ||`` by Givens QR.

    Each row of ``sqrt(lam) I`` is folded into ``R`` with one sweep of
    rotations, so the stacked matrix is never formed explicitly.
    """
    R = np.triu(np.array(R, dtype=np.float64))
    t = np.array(t, dtype=np.float64)
    n = R.shape[0]
    if lam == 0.0:
        return back_substitute(R, t)
    root = np.sqrt(lam)
    for j in range(n):
        row = np.zeros(n)
        row[j] = root
        rhs = 0.0
        for k in range(j, n):
            if row[k] == 0.0:
                continue
            rot, r = make_givens(R[k, k], row[k])
            Rk = R[k, k + 1:].copy()
            R[k, k] = r
            R[k, k + 1:] = rot.c * Rk + rot.s * row[k + 1:]
            row[k + 1:] = -rot.s * Rk + rot.c * row[k + 1:]
            row[k] = 0.0
            t[k], rhs = rot.apply(t[k], rhs)
    return back_substitute(R, t)


def _subsolve(kind: Subsolve, R, t, opts: SolverOptions) -> np.ndarray:
    if kind is Subsolve.PLAIN:
        return subsolve_plain(R, t)
    if kind is Subsolve.STABILIZED:
        return subsolve_stabilized(R, t)
    if kind is Subsolve.TSVD:
        return subsolve_tsvd(R, t, opts.mu)
    if kind is Subsolve.TIKHONOV_NORMAL:
        return subsolve_tikhonov_normal(R, t, opts.lam)
    if kind is Subsolve.TIKHONOV_AUGMENTED:
        return subsolve_tikhonov_augmented(R, t, opts.lam)
    raise ValueError(f"unknown subsolve {kind!r}")


# workspace and Arnoldi --------------------------------------------------------------


class GmresWorkspace:
    """Arnoldi basis and the incrementally Givens-reduced Hessenberg factor.

    Buffers are preallocated for ``capacity`` columns; ``R``, ``t`` and
    ``V`` are views of the active part.
    """

    def __init__(self, dim: int, capacity: int, v1, g0: float):
        self.dim = dim
        self.capacity = capacity
        self._V = np.zeros((dim, capacity + 1))
        self._V[:, 0] = v1
        self._nv = 1
        self._R = np.zeros((capacity, capacity))
        self._g = np.zeros(capacity + 1)
        self._g[0] = g0
        self.beta = abs(float(g0))
        self.rotations: list[GivensRotation] = []
        self.last_h_col: np.ndarray | None = None

    @property
    def order(self) -> int:
        return len(self.rotations)

    @property
    def V(self) -> np.ndarray:
        return self._V[:, : self._nv]

    @property
    def R(self) -> np.ndarray:
        k = self.order
        return self._R[:k, :k]

    @property
    def t(self) -> np.ndarray:
        return self._g[: self.order]

    @property
    def rho(self) -> float:
        return abs(float(self._g[self.order]))

    def push_vector(self, v) -> None:
        self._V[:, self._nv] = v
        self._nv += 1

    def append_column(self, h_col, g_next: float = 0.0) -> float:
        """Rotate ``h_col`` into ``R``; return the projected residual norm."""
        k = self.order
        if k >= self.capacity:
            raise RuntimeError("workspace capacity exhausted")
        col = np.array(h_col, dtype=np.float64)
        apply_rotations(self.rotations, col)
        rot, r = make_givens(col[k], col[k + 1])
        col[k], col[k + 1] = r, 0.0
        self._R[: k + 1, k] = col[: k + 1]
        self._g[k + 1] = g_next
        self._g[k], self._g[k + 1] = rot.apply(self._g[k], self._g[k + 1])
        self.rotations.append(rot)
        self.last_h_col = col[: k + 1].copy()
        return self.rho


def _operator(A: SparseMatrix, mode: Mode, v: np.ndarray) -> np.ndarray:
    if mode in (Mode.AB, Mode.RR):
        return spmv(A, spmv_t(A, v))
    if mode is Mode.BA:
        return spmv_t(A, spmv(A, v))
    return spmv(A, v)


def arnoldi_step(ws: GmresWorkspace, A: SparseMatrix, mode, reorthogonalize: bool = False):
    """One modified Gram-Schmidt Arnoldi step on the last basis vector.

    Returns ``(h_col, v_next)``; ``v_next`` is ``None`` on breakdown, i.e.
    when the orthogonalized remainder is at most ``eps * ||w||``.
    """
    mode = Mode(mode)
    i = ws._nv
    if i == 0:
        raise ValueError("workspace has no basis vector")
    w = _operator(A, mode, ws._V[:, i - 1])
    wnorm0 = float(np.linalg.norm(w))
    h = np.zeros(i + 1)
    for j in range(i):
        vj = ws._V[:, j]
        h[j] = w @ vj
        w = w - h[j] * vj
    if reorthogonalize:
        for j in range(i):
            vj = ws._V[:, j]
            c = w @ vj
            h[j] += c
            w = w - c * vj
    hn = float(np.linalg.norm(w))
    h[i] = hn
    if hn <= EPS * wnorm0 or hn == 0.0:
        return h, None
    return h, w / hn


def start_vector(A: SparseMatrix, b, mode) -> tuple[int, np.ndarray, float]:
    """Basis dimension, first Arnoldi vector and first entry of the projected
    right-hand side for ``x0 = 0``."""
    mode = Mode(mode)
    b = np.asarray(b, dtype=np.float64)
    if mode is Mode.BA:
        r0 = spmv_t(A, b)
        beta = float(np.linalg.norm(r0))
        return A.ncols, r0 / beta, beta
    if mode is Mode.RR:
        u = spmv(A, spmv_t(A, b))
        v1 = u / np.linalg.norm(u)
        return A.nrows, v1, float(v1 @ b)
    beta = float(np.linalg.norm(b))
    return A.nrows, b / beta, beta


# switching controller ------------------------------------------------------


class SwitchController:
    """Detects a jump ``atr(v) / min_{i<v} atr(i) > factor``; fires once."""

    def __init__(self, factor: float = 10.0):
        if not factor > 1.0:
            raise ValueError("switch factor must exceed 1")
        self.factor = factor
        self.best = np.inf
        self.fired_at: int | None = None

    def observe(self, it: int, atr: float) -> bool:
        if self.fired_at is not None:
            return False
        jump = np.isfinite(self.best) and atr > self.factor * self.best
        self.best = min(self.best, atr)
        if jump:
            self.fired_at = it
        return bool(jump)


# drivers -----------------------------------------------------------------------------


def _happy_tol(opts: SolverOptions) -> float:
    return max(opts.target_relres, np.sqrt(EPS))


def _theorem4(R: np.ndarray, c: float) -> bool:
    s = R.shape[0] - 1
    r2 = R[s, s] * R[s, s]
    d = R[:s, s]
    return bool(r2 > (d @ d) * c * EPS)


def run_gmres(A, b, opts: SolverOptions | None = None, *, callback: Callable | None = None) -> SolverResult:
    """Run one member of the GMRES family from ``x0 = 0``.

    ``callback(record)`` is invoked for each trace record as it is produced.
    """
    opts = SolverOptions() if opts is None else opts
    if opts.method not in _MODE_OF:
        raise ValueError(f"{opts.method.value} is not a GMRES-type method")
    A = as_sparse(A)
    m, n = A.shape
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (m,):
        raise ValueError(f"b has shape {b.shape}, expected ({m},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("b must be finite")
    if A.nnz == 0:
        raise ValueError("matrix has no nonzeros")
    if not np.any(b):
        raise ValueError("b must be nonzero")
    mode = _MODE_OF[opts.method]
    if mode is Mode.GMRES and m != n:
        raise ValueError("plain GMRES needs a square matrix")

    start = time.perf_counter()
    atr0 = float(np.linalg.norm(spmv_t(A, b)))
    if atr0 == 0.0:
        raise ValueError("A^T b = 0: x = 0 is already a least-squares solution")

    dim, v1, g0 = start_vector(A, b, mode)

    max_iter = opts.max_iter if opts.max_iter is not None else m
    max_iter = min(max_iter, dim)
    ws = GmresWorkspace(dim, max_iter, v1, g0)
    r0_norm2 = float(b @ b)
    proj2 = g0 * g0  # ||V^T r0||^2, used by the range-restricted residual estimate

    kind = opts.subsolve
    controller = SwitchController(opts.switch_factor) if opts.switching else None
    trace = ConvergenceTrace()
    best_x = np.zeros(n)
    best_atr, best_iter = np.inf, 0
    status = Status.MAX_ITER
    switched_at = None
    it = 0

    def form_x(y):
        u = ws._V[:, : len(y)] @ y
        if mode in (Mode.AB, Mode.RR):
            return spmv_t(A, u)
        return u

    def evaluate(it, kind):
        R, t = ws.R, ws.t
        y = _subsolve(kind, R, t, opts)
        if not np.isfinite(y).all():
            raise FloatingPointError("triangular subsolve overflowed")
        x = form_x(y)
        r = b - spmv(A, x)
        atr = float(np.linalg.norm(spmv_t(A, r))) / atr0
        return x, y, r, atr

    for it in range(1, max_iter + 1):
        h_col, v_next = arnoldi_step(ws, A, mode, opts.reorthogonalize)
        g_next = 0.0
        if v_next is not None:
            if it < max_iter:
                ws.push_vector(v_next)
            if mode is Mode.RR and it < dim:
                # with it == dim the basis already spans the space and
                # v_next is rounding noise
                g_next = float(v_next @ b)
                proj2 += g_next * g_next
        rho = ws.append_column(h_col, g_next)
        if mode is Mode.RR:
            # the residual also has a part outside span(V_{i+1})
            rho = float(np.sqrt(rho * rho + max(r0_norm2 - proj2, 0.0)))
        breakdown = v_next is None
        last = breakdown or it == max_iter
        if it % opts.eval_cadence and not last:
            continue

        switched = False
        try:
            x, y, r, atr = evaluate(it, kind)
        except (SingularTriangularError, FloatingPointError):
            if controller is None or controller.fired_at is not None or not np.isfinite(controller.best):
                status = Status.BREAKDOWN_HARD
                break
            atr = np.inf  # a failed back substitution counts as a jump
        if controller is not None and controller.observe(it, atr):
            kind = Subsolve.STABILIZED
            switched, switched_at = True, it
            x, y, r, atr = evaluate(it, kind)

        R = ws.R
        cond_R = None
        if opts.cond_every and it % opts.cond_every == 0:
            cond_R = cond2(R)
        tnorm = float(np.linalg.norm(ws.t))
        tri = float(np.linalg.norm(ws.t - R @ y)) / tnorm if tnorm > 0 else 0.0
        rec = TraceRecord(
            iter=it,
            atr=atr,
            rnorm=float(np.linalg.norm(r)),
            rho=rho,
            cond_R=cond_R,
            switched=switched,
            theorem4_ok=_theorem4(R, opts.theorem4_const),
            ynorm=float(np.linalg.norm(y)),
            tri_relres=tri,
        )
        trace.append(rec)
        if callback is not None:
            callback(rec)
        if atr < best_atr:
            best_atr, best_iter, best_x = atr, it, x
        if atr < opts.target_relres:
            status = Status.CONVERGED
            break
        if breakdown:
            status = Status.BREAKDOWN_HAPPY if atr <= _happy_tol(opts) else Status.BREAKDOWN_HARD
            break

    return SolverResult(
        x_best=best_x,
        iter_best=best_iter,
        atr_best=float(best_atr),
        status=status,
        trace=trace,
        switched_at=switched_at,
        method=opts.method.value,
        subsolve="switching" if opts.switching else opts.subsolve.value,
        iterations=it,
        seed=opts.rng_seed,
        wall_seconds=time.perf_counter() - start,
    )


def run_stabilized_switching(A, b, opts: SolverOptions | None = None, **kw) -> SolverResult:
    """AB-GMRES with back substitution until the first residual jump, then
    the stabilized subsolve for all remaining iterations."""
    opts = SolverOptions() if opts is None else opts
    if opts.method is not Method.AB_GMRES:
        raise ValueError("switching is defined for AB-GMRES")
    return run_gmres(A, b, replace(opts, subsolve=Subsolve.PLAIN, switching=True), **kw)


def solve(A, b, opts: SolverOptions | None = None, **kw) -> SolverResult:
    """Dispatch on ``opts.method`` (GMRES family or LSQR/LSMR)."""
    opts = SolverOptions() if opts is None else opts
    if opts.method is Method.LSQR:
        from .baselines import run_lsqr

        return run_lsqr(A, b, opts, **kw)
    if opts.method is Method.LSMR:
        from .baselines import run_lsmr

        return run_lsmr(A, b, opts, **kw)
    if opts.switching:
        return run_stabilized_switching(A, b, opts, **kw)
    return run_gmres(A, b, opts, **kw)
