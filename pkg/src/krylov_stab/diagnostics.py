"""Numerical checks tied to the theory of stabilized GMRES.

* :func:`theorem4_check`: is ``fl(R^T R)`` still numerically nonsingular
  after the newest column was appended?
* :func:`augmented_singular_values`: spectrum of ``(R; sqrt(lam) I)``.
* :func:`theorem2_bound`: effective-condition lower bound for GMRES on a
  singular, null-space-symmetric operator with inconsistent data.
* :func:`krylov_dim_oracle`: brute-force Krylov dimensions and grade.

These work on small dense matrices and favour clarity over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import EPS, jacobi_svd

__all__ = [
    "Theorem4Report",
    "theorem4_check",
    "theorem4_from_R",
    "augmented_singular_values",
    "Theorem2Point",
    "theorem2_bound",
    "theorem2_profile",
    "KrylovDimReport",
    "krylov_dim_oracle",
    "orth",
    "numerical_rank",
    "is_nullspace_symmetric",
]


# numerical nonsingularity of the projected triangle


@dataclass(frozen=True)
class Theorem4Report:
    r_diag_sq: float
    d_norm_sq: float
    threshold: float
    predicate: bool


def theorem4_from_R(R, c: float = 1.0) -> Theorem4Report:
    """Check ``fl(r_{ss}^2) > c * eps * fl(d^T d)`` for the last column of ``R``."""
    R = np.asarray(R, dtype=np.float64)
    s = R.shape[0] - 1
    if s < 0:
        raise ValueError("need at least one column")
    r = R[s, s]
    d = R[:s, s]
    r2 = float(r * r)
    dd = float(d @ d)
    thr = dd * c * EPS
    return Theorem4Report(r2, dd, thr, r2 > thr)


def theorem4_check(ws, c: float = 1.0) -> Theorem4Report:
    """Nonsingularity predicate for the column most recently appended to ``ws``."""
    if ws.order < 1:
        raise ValueError("workspace has no completed column")
    return theorem4_from_R(ws.R, c)


# Tikhonov-augmented spectrum


def augmented_singular_values(sigma, lam: float) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise ValueError("sigma must be nonnegative and nonincreasing")
    # hypot keeps tiny and huge sigma from under/overflowing in sigma**2
    return np.hypot(sigma, np.sqrt(lam))


# helpers ---------------------------------------------------------------------------


def numerical_rank(M, rtol: float = 1e-10) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.size == 0:
        return 0
    if M.shape[0] < M.shape[1]:
        M = M.T
    s = jacobi_svd(M).singular_values
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def orth(M, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the column space (left singular vectors)."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.shape[1] == 0:
        return np.zeros((M.shape[0], 0))
    if M.shape[0] < M.shape[1]:
        # column space of a wide matrix: use the SVD of M^T
        res = jacobi_svd(M.T)
        U, s = res.V, res.singular_values
    else:
        res = jacobi_svd(M)
        U, s = res.U, res.singular_values
    if len(s) == 0 or s[0] == 0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > rtol * s[0]]


def _null_basis(A, rtol):
    res = jacobi_svd(A)
    s = res.singular_values
    return res.V[:, s <= rtol * s[0]]


def is_nullspace_symmetric(A, rtol: float = 1e-10) -> bool:
    """``N(A) = N(A^T)`` within ``rtol`` relative to ``||A||_2``."""
    A = np.asarray(A, dtype=np.float64)
    N = _null_basis(A, rtol)
    Nt = _null_basis(A.T, rtol)
    if N.shape[1] != Nt.shape[1]:
        return False
    if N.shape[1] == 0:
        return True
    scale = jacobi_svd(A).singular_values[0]
    return bool(np.linalg.norm(A.T @ N, 2) <= rtol * scale)


def _smax_smin(M):
    s = jacobi_svd(M).singular_values
    return float(s[0]), float(s[-1])


# effective condition number lower bound


@dataclass(frozen=True)
class Theorem2Point:
    i: int
    kappa: float
    lower_bound: float
    rnorm_prev: float
    rstar_norm: float

    @property
    def holds(self) -> bool:
        # both sides carry rounding error; equality cases need a few ulps
        return self.kappa >= self.lower_bound * (1.0 - 1e-12)


def _ls_residual(Atil, b):
    # r* = b - A A^+ b: the part of b orthogonal to R(A)
    Q = orth(Atil)
    return b - Q @ (Q.T @ b)


def _krylov_basis(Atil, r0, k):
    """Orthonormal Arnoldi basis (with reorthogonalization) of K_k(A, r0)."""
    Q = np.zeros((len(r0), k))
    q = r0 / np.linalg.norm(r0)
    for j in range(k):
        Q[:, j] = q
        w = Atil @ q
        for _ in range(2):
            w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        nw = np.linalg.norm(w)
        if j + 1 < k:
            if nw <= 1e-12 * np.linalg.norm(Atil @ q):
                return Q[:, : j + 1]
            q = w / nw
    return Q


def _gmres_residual(Atil, b, Q):
    """min_{z in span Q} ||b - A z|| (dense least squares), x0 = 0."""
    if Q.shape[1] == 0:
        return b.copy()
    AQ = Atil @ Q
    P = orth(AQ, rtol=1e-14)
    return b - P @ (P.T @ b)


def theorem2_bound(A_tilde, b, i: int, *, check_symmetry: bool = True) -> tuple[float, float]:
    """Both sides of ``kappa(A_i) >= ||A_i|| / ||Abar_i|| * ||r_{i-1}|| /
    sqrt(||r_{i-1}||^2 - ||r*||^2)``.

    ``A_i`` is ``A_tilde`` restricted to ``K_i(A_tilde, b)`` and ``Abar_i``
    its restriction to ``K_i + span{r*}``; GMRES starts from ``x0 = 0``.
    """
    p = _theorem2_point(np.asarray(A_tilde, dtype=np.float64), np.asarray(b, dtype=np.float64),
                        i, check_symmetry)
    return p.kappa, p.lower_bound


def _theorem2_point(At, b, i, check_symmetry=True, rstar=None) -> Theorem2Point:
    if i < 1:
        raise ValueError("iteration index must be >= 1")
    if check_symmetry and not is_nullspace_symmetric(At):
        raise ValueError("A_tilde must satisfy N(A) = N(A^T)")
    if rstar is None:
        rstar = _ls_residual(At, b)
    Q = _krylov_basis(At, b, i)
    if Q.shape[1] < i:
        raise ValueError(f"Krylov space has dimension {Q.shape[1]} < {i}: past breakdown")
    r_prev = _gmres_residual(At, b, Q[:, : i - 1])
    rn = float(np.linalg.norm(r_prev))
    rs = float(np.linalg.norm(rstar))
    gap = rn * rn - rs * rs
    scale = max(rn * rn, np.finfo(float).tiny)
    if gap <= 1e-12 * scale or np.linalg.norm(r_prev - rstar) <= 1e-10 * max(rn, 1.0):
        raise ValueError("bound undefined at the least-squares residual")
    smax, smin = _smax_smin(At @ Q)
    kappa = smax / smin if smin > 0 else np.inf
    if rs > 0:
        Qbar = orth(np.column_stack([Q, rstar]), rtol=1e-12)
    else:
        Qbar = Q
    smax_bar, _ = _smax_smin(At @ Qbar)
    bound = (smax / smax_bar) * rn / np.sqrt(gap)
    return Theorem2Point(i, kappa, bound, rn, rs)


def theorem2_profile(A_tilde, b, max_iter: int | None = None, cond_limit: float = 1e10
                     ) -> list[Theorem2Point]:
    """Evaluate the bound at i = 1, 2, ... until breakdown.

    The sweep stops once the Krylov space stops growing, the previous
    residual reaches ``r*``, or ``kappa(A_i)`` exceeds ``cond_limit`` (past
    that level neither side is computed reliably in double precision).
    """
    At = np.asarray(A_tilde, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not is_nullspace_symmetric(At):
        raise ValueError("A_tilde must satisfy N(A) = N(A^T)")
    rstar = _ls_residual(At, b)
    max_iter = At.shape[0] if max_iter is None else max_iter
    out = []
    for i in range(1, max_iter + 1):
        try:
            p = _theorem2_point(At, b, i, check_symmetry=False, rstar=rstar)
        except ValueError:
            break
        out.append(p)
        if not p.kappa < cond_limit:
            break
    return out


# Krylov dimensions


@dataclass(frozen=True)
class KrylovDimReport:
    grade: int
    dims: list[int]
    consistent_flag: bool
    lemma1_holds: bool
    lemma2_holds: bool | None
    dim_next_full: int | None = None


def _krylov_matrix(At, w, k):
    cols = []
    v = w / np.linalg.norm(w)
    for _ in range(k):
        cols.append(v)
        v = At @ v
        nv = np.linalg.norm(v)
        if nv == 0:
            cols.extend([v] * (k - len(cols)))
            break
        v = v / nv
    return np.column_stack(cols[:k])


def _same_subspace(P, Q, tol):
    if P.shape[1] != Q.shape[1]:
        return False
    if P.shape[1] == 0:
        return True
    return bool(np.linalg.norm(P - Q @ (Q.T @ P)) <= tol and np.linalg.norm(Q - P @ (P.T @ Q)) <= tol)


def krylov_dim_oracle(A_tilde, b, rtol: float = 1e-10) -> KrylovDimReport:
    """Grade of ``b|R(A)`` and the two subspace facts behind the breakdown analysis.

    Shift fact: ``K_{k+1}(A, w) = A K_k(A, w)`` for ``w = b|R(A)`` and ``k`` its grade.
    Growth fact: if ``b`` is not in ``R(A)`` then ``dim K_{k+1}(A, b) = k + 1``.
    Ranks come from SVDs of column-normalized Krylov matrices with relative
    tolerance ``rtol``.
    """
    At = np.asarray(A_tilde, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = At.shape[0]
    if At.shape != (n, n) or b.shape != (n,):
        raise ValueError("need a square matrix and conforming vector")
    if n > 50:
        raise ValueError("oracle is meant for order <= 50")
    Q = orth(At, rtol)
    w = Q @ (Q.T @ b)
    consistent = bool(np.linalg.norm(b - w) <= rtol * np.linalg.norm(b))

    if np.linalg.norm(w) <= rtol * np.linalg.norm(b):
        # b is orthogonal to the range: the projected Krylov space is trivial
        dims = [0]
        return KrylovDimReport(0, dims, consistent, True, numerical_rank(b[:, None], rtol) == 1, 1)

    dims = []
    grade = None
    for k in range(1, n + 2):
        dk = numerical_rank(_krylov_matrix(At, w, k), rtol)
        dims.append(dk)
        if k > 1 and dk == dims[-2]:
            grade = k - 1
            break
    if grade is None:
        grade = n
    # K_{k+1}(A, w) versus A K_k(A, w)
    Kk1 = orth(_krylov_matrix(At, w, grade + 1), rtol)
    AKk = orth(At @ _krylov_matrix(At, w, grade), rtol)
    lemma1 = _same_subspace(Kk1, AKk, 1e-8)
    lemma2 = None
    dim_next = None
    if not consistent:
        dim_next = numerical_rank(_krylov_matrix(At, b, grade + 1), rtol)
        lemma2 = dim_next == grade + 1
    return KrylovDimReport(grade, dims, consistent, lemma1, lemma2, dim_next)
