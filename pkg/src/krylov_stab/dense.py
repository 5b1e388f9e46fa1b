"""Small dense kernels used inside the Krylov iterations.

Matrices are plain 2-d float64 numpy arrays. Upper triangular factors only
ever have their upper triangle read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EPS",
    "GivensRotation",
    "make_givens",
    "apply_rotations",
    "givens_append_column",
    "SingularTriangularError",
    "back_substitute",
    "forward_substitute",
    "CholeskyFactor",
    "cholesky",
    "cholesky_solve",
    "SvdResult",
    "JacobiNotConverged",
    "jacobi_svd",
    "cond2",
]

EPS = float(np.finfo(np.float64).eps)


# Givens rotations -----------------------------------------------------------


@dataclass(frozen=True)
class GivensRotation:
    """Plane rotation ``[[c, s], [-s, c]]`` mapping ``(a, b)`` to ``(r, 0)``."""

    c: float
    s: float

    def apply(self, a: float, b: float) -> tuple[float, float]:
        return self.c * a + self.s * b, -self.s * a + self.c * b


def make_givens(a: float, b: float) -> tuple[GivensRotation, float]:
    """Rotation annihilating ``b`` against ``a``, with ``c >= 0``.

    Returns the rotation and ``r`` (which carries the sign of ``a``).
    """
    if b == 0.0:
        return GivensRotation(1.0, 0.0), a
    if a == 0.0:
        return GivensRotation(0.0, 1.0), b
    r = float(np.hypot(a, b))
    if a < 0:
        r = -r
    return GivensRotation(a / r, b / r), r


def apply_rotations(rotations, col: np.ndarray) -> np.ndarray:
    """Apply ``rotations[j]`` to rows ``(j, j+1)`` of ``col`` in order, in place."""
    for j, rot in enumerate(rotations):
        a, b = col[j], col[j + 1]
        col[j] = rot.c * a + rot.s * b
        col[j + 1] = -rot.s * a + rot.c * b
    return col


def givens_append_column(R: np.ndarray, rotations, h_col, g, g_next: float = 0.0):
    """Extend the QR factor of a Hessenberg matrix by one column.

    Parameters
    ----------
    R : (k, k) array
        Current upper triangular factor.
    rotations : sequence of GivensRotation
        The ``k`` rotations generated so far.
    h_col : (k + 2,) array
        New Hessenberg column, subdiagonal entry last.
    g : (k + 1,) array
        Rotated right-hand side ``(t_k, rho_{k+1})``.
    g_next : float
        Entry appended to ``g`` before the new rotation. Zero for standard
        GMRES; range-restricted variants supply ``v_{k+2}^T r_0``.

    Returns
    -------
    R_new, rotation, g_new, rho
        ``g_new`` has length ``k + 2`` and ``rho = |g_new[-1]|`` is the norm of
        the projected residual.
    """
    R = np.asarray(R, dtype=np.float64)
    k = R.shape[0]
    col = np.array(h_col, dtype=np.float64)
    if col.shape != (k + 2,):
        raise ValueError(f"h_col must have length {k + 2}, got {col.shape}")
    if len(rotations) != k:
        raise ValueError("need exactly one prior rotation per column of R")
    apply_rotations(rotations, col)
    rot, r = make_givens(col[k], col[k + 1])
    col[k], col[k + 1] = r, 0.0

    R_new = np.zeros((k + 1, k + 1))
    R_new[:k, :k] = np.triu(R)
    R_new[:, k] = col[: k + 1]

    g_new = np.empty(k + 2)
    g_new[: k + 1] = g
    g_new[k + 1] = g_next
    a, b = g_new[k], g_new[k + 1]
    g_new[k], g_new[k + 1] = rot.apply(a, b)
    return R_new, rot, g_new, abs(float(g_new[k + 1]))


# triangular solves --------------------------------------------------------------


class SingularTriangularError(ZeroDivisionError):
    """A triangular matrix has an exactly zero diagonal entry."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"zero diagonal entry at position {index}")


def _check_triangular(T, t):
    T = np.asarray(T, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = T.shape[0]
    if T.shape != (n, n) or t.shape != (n,):
        raise ValueError(f"non-conforming triangular system {T.shape} vs {t.shape}")
    zero = np.flatnonzero(np.diag(T) == 0.0)
    if len(zero):
        raise SingularTriangularError(int(zero[0]))
    return T, t, n


def back_substitute(R, t) -> np.ndarray:
    """Solve ``R y = t`` for upper triangular ``R`` (row-oriented)."""
    R, t, n = _check_triangular(R, t)
    y = np.zeros(n)
    for k in range(n - 1, -1, -1):
        y[k] = (t[k] - R[k, k + 1:] @ y[k + 1:]) / R[k, k]
    return y


def forward_substitute(L, t) -> np.ndarray:
    """Solve ``L z = t`` for lower triangular ``L`` (row-oriented)."""
    L, t, n = _check_triangular(L, t)
    z = np.zeros(n)
    for k in range(n):
        z[k] = (t[k] - L[k, :k] @ z[:k]) / L[k, k]
    return z


# Cholesky with LDL^T fallback -------------------------------------------------------


@dataclass(frozen=True)
class CholeskyFactor:
    """``S = L L^T``, or ``S = L D L^T`` (unit ``L``) when ``fallback_used``.

    ``zero_pivots`` lists the LDL^T pivots that fell below the tolerance and
    were replaced by exact zeros.
    """

    L: np.ndarray
    fallback_used: bool = False
    ldl_d: np.ndarray | None = None
    zero_pivots: tuple[int, ...] = ()
    pivots: np.ndarray | None = None

    def solve(self, rhs) -> np.ndarray:
        return cholesky_solve(self, rhs)


def _ldl(S: np.ndarray, tol: float) -> CholeskyFactor:
    n = S.shape[0]
    L = np.eye(n)
    d = np.zeros(n)
    zeros = []
    for j in range(n):
        w = L[j, :j] * d[:j]
        dj = S[j, j] - L[j, :j] @ w
        if abs(dj) <= tol:
            zeros.append(j)
            continue  # d[j] = 0 and the column below stays zero
        d[j] = dj
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ w) / dj
    return CholeskyFactor(L, True, d, tuple(zeros), d.copy())


def cholesky(S) -> CholeskyFactor:
    """Left-looking Cholesky of the symmetric part of ``S``.

    A pivot at or below ``eps * max|diag(S)|`` abandons LL^T in favour of an
    LDL^T factorization with 1x1 pivots in natural order. LDL^T pivots under
    the same tolerance are set to zero, which makes :func:`cholesky_solve`
    return a pseudo-solution on the numerically singular part.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError("cholesky needs a square matrix")
    S = 0.5 * (S + S.T)
    tol = EPS * (np.abs(np.diag(S)).max() if n else 0.0)
    L = np.zeros((n, n))
    pivots = np.zeros(n)
    for j in range(n):
        p = S[j, j] - L[j, :j] @ L[j, :j]
        pivots[j] = p
        if not p > tol:
            return _ldl(S, tol)
        ljj = np.sqrt(p)
        L[j, j] = ljj
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / ljj
    return CholeskyFactor(L, False, None, (), pivots)


def cholesky_solve(factor: CholeskyFactor, rhs) -> np.ndarray:
    """Solve ``S y = rhs`` from a :class:`CholeskyFactor`."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if not factor.fallback_used:
        z = forward_substitute(factor.L, rhs)
        return back_substitute(factor.L.T, z)
    z = forward_substitute(factor.L, rhs)
    d = factor.ldl_d
    w = np.divide(z, d, out=np.zeros_like(z), where=d != 0.0)
    return back_substitute(factor.L.T, w)


# one-sided Jacobi SVD -----------------------------------------------------------


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    sweeps: int = 0

    @property
    def cond(self) -> float:
        s = self.singular_values
        if len(s) == 0:
            return 1.0
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


class JacobiNotConverged(RuntimeError):
    """Raised after the sweep limit; ``best`` holds the last iterate."""

    def __init__(self, best: SvdResult, off: float):
        self.best = best
        self.off = off
        super().__init__(
            f"one-sided Jacobi did not converge in {best.sweeps} sweeps "
            f"(max scaled off-diagonal {off:.3e})"
        )


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: n-1 rounds of disjoint pairs covering all pairs once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.int64), np.array(q, dtype=np.int64)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_orthonormal(U: np.ndarray, missing: np.ndarray) -> None:
    """Fill columns ``missing`` of U with an orthonormal completion, in place."""
    m = U.shape[0]
    gone = set(missing.tolist())
    basis = U[:, [j for j in range(U.shape[1]) if j not in gone]]
    for j in missing:
        # project every unit vector off the basis (twice) and keep the largest
        W = np.eye(m) - basis @ basis.T
        W -= basis @ (basis.T @ W)
        k = int(np.argmax(np.einsum("ij,ij->j", W, W)))
        w = W[:, k] - basis @ (basis.T @ W[:, k])
        U[:, j] = w / np.linalg.norm(w)
        basis = np.column_stack([basis, U[:, j]])


def jacobi_svd(A, max_sweeps: int = 30, tol: float | None = None) -> SvdResult:
    """Thin SVD ``A = U diag(s) V^T`` by one-sided (Hestenes) Jacobi.

    Column pairs are rotated in round-robin order so that each round is a
    single vectorized update over disjoint pairs. Convergence is declared
    when every pair satisfies ``|a_p . a_q| <= tol * |a_p| |a_q|``
    (``tol`` defaults to machine epsilon).
    """
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("jacobi_svd needs a 2-d array")
    m, n = A.shape
    if m < n:
        raise ValueError("jacobi_svd requires nrows >= ncols")
    if tol is None:
        tol = EPS
    # columns are stored as rows so that each pair gather is contiguous
    X = np.ascontiguousarray(A.T)
    V = np.eye(n)
    rounds = _round_robin(n) if n > 1 else []
    sweeps = 0
    off = 0.0
    converged = n <= 1
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        off = 0.0
        rotated = False
        for p, q in rounds:
            Xp, Xq = X[p], X[q]
            alpha = np.einsum("ij,ij->i", Xp, Xp)
            beta = np.einsum("ij,ij->i", Xq, Xq)
            gamma = np.einsum("ij,ij->i", Xp, Xq)
            scale = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(scale > 0, np.abs(gamma) / scale, 0.0)
            off = max(off, float(ratio.max(initial=0.0)))
            act = ratio > tol
            if not act.any():
                continue
            rotated = True
            if not act.all():
                p, q = p[act], q[act]
                Xp, Xq = Xp[act], Xq[act]
                alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = (1.0 / np.hypot(1.0, t))[:, None]
            s = c * t[:, None]
            X[p] = c * Xp - s * Xq
            X[q] = s * Xp + c * Xq
            Vp, Vq = V[p], V[q]
            V[p] = c * Vp - s * Vq
            V[q] = s * Vp + c * Vq
        converged = not rotated

    X = X.T
    V = V.T
    sigma = np.sqrt(np.einsum("ij,ij->j", X, X))
    order = np.argsort(-sigma, kind="stable")
    sigma, X, V = sigma[order], X[:, order], V[:, order]
    U = np.zeros((m, n))
    nz = sigma > 0
    U[:, nz] = X[:, nz] / sigma[nz]
    if not nz.all():
        _complete_orthonormal(U, np.flatnonzero(~nz))
    result = SvdResult(U, sigma, V, sweeps)
    if not converged:
        raise JacobiNotConverged(result, off)
    return result


def cond2(R) -> float:
    """2-norm condition number via :func:`jacobi_svd`."""
    R = np.asarray(R, dtype=np.float64)
    if R.size == 0:
        return 1.0
    try:
        return jacobi_svd(R).cond
    except JacobiNotConverged as exc:
        return exc.best.cond
