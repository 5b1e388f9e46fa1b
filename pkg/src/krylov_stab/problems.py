"""Test problems: the 3x3 equal-projection example, seeded random systems,
null-space-symmetric operators, and Matrix Market loading.

Randomness comes from numpy's PCG64 generator seeded through
``SeedSequence``; the same spec always yields the same bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dense import EPS
from .sparse import PruneReport, SparseMatrix, mm_read, prune_zero_rows_cols, transpose

__all__ = [
    "ProblemKind",
    "ProblemSpec",
    "make_rng",
    "random_rhs",
    "make_ep3",
    "make_random_rect",
    "make_nullsym_square",
    "load_matrix",
]


class ProblemKind(str, enum.Enum):
    EP3 = "ep3"
    RANDOM_RECT = "random_rect"
    NULLSYM_SQUARE = "nullsym_square"
    FROM_FILE = "from_file"


@dataclass(frozen=True)
class ProblemSpec:
    kind: ProblemKind = ProblemKind.RANDOM_RECT
    nrows: int = 40
    ncols: int = 60
    density: float = 1.0
    rank_deficiency: int = 0
    rng_seed: int = 0
    consistent: bool = False
    path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProblemKind(self.kind))
        if self.kind is ProblemKind.FROM_FILE:
            if not self.path:
                raise ValueError("from_file problems need a path")
            return
        if self.nrows <= 0 or self.ncols <= 0:
            raise ValueError("dimensions must be positive")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.rank_deficiency < 0:
            raise ValueError("rank_deficiency must be nonnegative")


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def random_rhs(m: int, seed) -> np.ndarray:
    """Entries uniform on [0, 1), like MATLAB's ``rand``."""
    return make_rng(seed).random(m)


def make_ep3() -> tuple[SparseMatrix, np.ndarray]:
    """The 3x3 equal-projection matrix with null space span{(1, -1, 1)} and
    right-hand side e_1."""
    a = np.sqrt(2.0) / 2.0
    d = np.sqrt(6.0 * EPS) / 6.0
    e = np.sqrt(6.0 * EPS) / 3.0
    A = np.array(
        [
            [a, a - d, -d],
            [a, a + d, d],
            [0.0, e, e],
        ]
    )
    return SparseMatrix.from_dense(A), np.array([1.0, 0.0, 0.0])


def _orthogonal(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _random_sparse(rng, m: int, n: int, density: float) -> np.ndarray:
    mask = rng.random((m, n)) < density
    # at least one entry per row and column so nothing gets pruned
    mask[np.arange(m), rng.integers(0, n, m)] = True
    mask[rng.integers(0, m, n), np.arange(n)] = True
    return np.where(mask, rng.standard_normal((m, n)), 0.0)


def make_random_rect(spec: ProblemSpec):
    """Random ``A`` (m x n), right-hand side and, if consistent, ``x_true``.

    Dense specs (``density == 1``) with rank deficiency ``r`` are built as
    ``U diag(sigma) V^T`` with ``r`` zero singular values; sparse specs
    duplicate ``r`` rows (or columns when m > n).
    """
    m, n, r = spec.nrows, spec.ncols, spec.rank_deficiency
    if r >= min(m, n):
        raise ValueError("rank_deficiency must be smaller than min(nrows, ncols)")
    rng = make_rng(spec.rng_seed)
    if spec.density == 1.0:
        k = min(m, n) - r
        U = _orthogonal(rng, m)[:, :k]
        V = _orthogonal(rng, n)[:, :k]
        sigma = np.logspace(0.0, -2.0, k)
        A = (U * sigma) @ V.T
    else:
        A = _random_sparse(rng, m, n, spec.density)
        if r:
            if m <= n:
                src = rng.choice(m - r, size=r, replace=False)
                A[m - r:] = A[src]
            else:
                src = rng.choice(n - r, size=r, replace=False)
                A[:, n - r:] = A[:, src]
    A = SparseMatrix.from_dense(A)
    if spec.consistent:
        x_true = rng.standard_normal(n)
        return A, A.matvec(x_true), x_true
    return A, rng.random(m), None


def make_nullsym_square(order: int, nullity: int, seed) -> np.ndarray:
    """``Q blockdiag(M, 0) Q^T`` with orthogonal ``Q`` and nonsingular ``M``.

    ``M`` has singular values in [0.5, 2], so the range part is well
    conditioned while N(A) = N(A^T) = span of the last ``nullity`` columns of Q.
    """
    if order <= 0:
        raise ValueError("order must be positive")
    if not 0 <= nullity < order:
        raise ValueError("need 0 <= nullity < order (nullity == order is the zero matrix)")
    rng = make_rng(seed)
    Q = _orthogonal(rng, order)
    k = order - nullity
    M = (_orthogonal(rng, k) * rng.uniform(0.5, 2.0, k)) @ _orthogonal(rng, k).T
    Qk = Q[:, :k]
    return Qk @ M @ Qk.T


def load_matrix(path, transpose_it: bool = False, prune: bool = True
                ) -> tuple[SparseMatrix, PruneReport | None]:
    A = mm_read(Path(path))
    if transpose_it:
        A = transpose(A)
    report = None
    if prune:
        A, report = prune_zero_rows_cols(A)
    return A, report
