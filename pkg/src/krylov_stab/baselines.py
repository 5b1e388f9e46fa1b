"""LSQR and LSMR baselines on Golub-Kahan bidiagonalization.

No damping, no preconditioning, no reorthogonalization. Both drivers share
the best-iterate protocol and :class:`~krylov_stab.krylov.SolverResult`
with the GMRES family; ``||A^T r_i||`` is evaluated explicitly from
``r_i = b - A x_i`` rather than taken from the recurrences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .krylov import ConvergenceTrace, Method, SolverOptions, SolverResult, Status, TraceRecord
from .sparse import SparseMatrix, as_sparse, spmv, spmv_t

__all__ = ["BidiagState", "GolubKahan", "run_lsqr", "run_lsmr"]


@dataclass
class BidiagState:
    u: np.ndarray
    v: np.ndarray
    alpha: float
    beta: float


class GolubKahan:
    """Lower bidiagonalization ``beta_1 u_1 = b``, ``alpha_1 v_1 = A^T u_1``."""

    def __init__(self, A: SparseMatrix, b: np.ndarray):
        self.A = A
        beta = float(np.linalg.norm(b))
        u = b / beta
        w = spmv_t(A, u)
        alpha = float(np.linalg.norm(w))
        v = w / alpha if alpha > 0 else w
        self.state = BidiagState(u, v, alpha, beta)

    def step(self) -> BidiagState:
        """Advance to ``beta_{k+1}, alpha_{k+1}``; zero scalars signal breakdown."""
        s = self.state
        w = spmv(self.A, s.v) - s.alpha * s.u
        beta = float(np.linalg.norm(w))
        u = w / beta if beta > 0 else w
        alpha = 0.0
        v = s.v
        if beta > 0:
            z = spmv_t(self.A, u) - beta * s.v
            alpha = float(np.linalg.norm(z))
            v = z / alpha if alpha > 0 else z
        self.state = BidiagState(u, v, alpha, beta)
        return self.state


def _prepare(A, b, opts):
    A = as_sparse(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.nrows,):
        raise ValueError(f"b has shape {b.shape}, expected ({A.nrows},)")
    if not np.all(np.isfinite(b)) or not np.any(b):
        raise ValueError("b must be finite and nonzero")
    if A.nnz == 0:
        raise ValueError("matrix has no nonzeros")
    atr0 = float(np.linalg.norm(spmv_t(A, b)))
    if atr0 == 0.0:
        raise ValueError("A^T b = 0: x = 0 is already a least-squares solution")
    max_iter = opts.max_iter if opts.max_iter is not None else 20 * A.ncols
    return A, b, atr0, max_iter


class _Protocol:
    """Shared bookkeeping: trace, best iterate, stop rules."""

    def __init__(self, A, b, atr0, opts, n, callback):
        self.A, self.b, self.atr0, self.opts = A, b, atr0, opts
        self.trace = ConvergenceTrace()
        self.best_x = np.zeros(n)
        self.best_atr, self.best_iter = np.inf, 0
        self.since_best = 0
        self.callback = callback

    def record(self, it, x, rho) -> Status | None:
        r = self.b - spmv(self.A, x)
        atr = float(np.linalg.norm(spmv_t(self.A, r))) / self.atr0
        rec = TraceRecord(iter=it, atr=atr, rnorm=float(np.linalg.norm(r)), rho=float(rho))
        self.trace.append(rec)
        if self.callback is not None:
            self.callback(rec)
        if atr < self.best_atr:
            self.best_atr, self.best_iter, self.best_x = atr, it, x.copy()
            self.since_best = 0
        else:
            self.since_best += 1
        if atr < self.opts.target_relres:
            return Status.CONVERGED
        if self.since_best >= self.opts.stagnation_window:
            return Status.STAGNATED
        return None

    def result(self, method, status, it, start) -> SolverResult:
        return SolverResult(
            x_best=self.best_x,
            iter_best=self.best_iter,
            atr_best=float(self.best_atr),
            status=status,
            trace=self.trace,
            method=method,
            subsolve="",
            iterations=it,
            seed=self.opts.rng_seed,
            wall_seconds=time.perf_counter() - start,
        )


def run_lsqr(A, b, opts: SolverOptions | None = None, *, callback: Callable | None = None) -> SolverResult:
    """LSQR of Paige and Saunders; ``rho`` in the trace is the recurrence
    estimate of ``||r_k||``."""
    opts = SolverOptions(method=Method.LSQR) if opts is None else opts
    start = time.perf_counter()
    A, b, atr0, max_iter = _prepare(A, b, opts)
    gk = GolubKahan(A, b)
    s = gk.state
    n = A.ncols
    x = np.zeros(n)
    w = s.v.copy()
    phibar, rhobar = s.beta, s.alpha
    proto = _Protocol(A, b, atr0, opts, n, callback)
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        s = gk.step()
        rho = float(np.hypot(rhobar, s.beta))
        c, sn = rhobar / rho, s.beta / rho
        theta = sn * s.alpha
        rhobar = -c * s.alpha
        phi = c * phibar
        phibar = sn * phibar
        x = x + (phi / rho) * w
        w = s.v - (theta / rho) * w
        breakdown = s.alpha == 0.0 or s.beta == 0.0
        if it % opts.eval_cadence and not (breakdown or it == max_iter):
            continue
        stop = proto.record(it, x, abs(phibar))
        if stop is not None:
            status = stop
            break
        if breakdown:
            status = Status.BREAKDOWN_HAPPY
            break
    return proto.result(Method.LSQR.value, status, it, start)


def run_lsmr(A, b, opts: SolverOptions | None = None, *, callback: Callable | None = None) -> SolverResult:
    """LSMR of Fong and Saunders with zero damping; ``rho`` in the trace is
    the recurrence estimate of ``||A^T r_k||``."""
    opts = SolverOptions(method=Method.LSMR) if opts is None else opts
    start = time.perf_counter()
    A, b, atr0, max_iter = _prepare(A, b, opts)
    gk = GolubKahan(A, b)
    s = gk.state
    n = A.ncols
    alpha, beta = s.alpha, s.beta
    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = s.v.copy()
    hbar = np.zeros(n)
    x = np.zeros(n)
    proto = _Protocol(A, b, atr0, opts, n, callback)
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        s = gk.step()
        alpha, beta = s.alpha, s.beta

        rhoold = rho
        rho = float(np.hypot(alphabar, beta))
        c, sn = alphabar / rho, beta / rho
        thetanew = sn * alpha
        alphabar = c * alpha

        rhobarold = rhobar
        thetabar = sbar * rho
        rhotemp = cbar * rho
        rhobar = float(np.hypot(rhotemp, thetanew))
        cbar, sbar = rhotemp / rhobar, thetanew / rhobar
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        hbar = h - (thetabar * rho / (rhoold * rhobarold)) * hbar
        x = x + (zeta / (rho * rhobar)) * hbar
        h = s.v - (thetanew / rho) * h

        breakdown = alpha == 0.0 or beta == 0.0
        if it % opts.eval_cadence and not (breakdown or it == max_iter):
            continue
        stop = proto.record(it, x, abs(zetabar))
        if stop is not None:
            status = stop
            break
        if breakdown:
            status = Status.BREAKDOWN_HAPPY
            break
    return proto.result(Method.LSMR.value, status, it, start)
