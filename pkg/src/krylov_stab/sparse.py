"""Compressed-sparse-row matrices, Matrix Market I/O and zero row/column pruning.

All products accumulate in a fixed order (ascending row, then ascending
column within a row) so that results are reproducible bit for bit, and so
that ``spmv_t(A, y)`` equals ``spmv(transpose(A), y)`` exactly.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SparseMatrix",
    "PruneReport",
    "MatrixMarketError",
    "mm_read",
    "mm_write",
    "transpose",
    "spmv",
    "spmv_t",
    "prune_zero_rows_cols",
    "as_sparse",
]


class MatrixMarketError(ValueError):
    """Raised for malformed or unsupported Matrix Market input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable real CSR matrix in canonical form.

    Canonical means: column indices strictly increasing within each row and
    no explicitly stored zeros. Use :meth:`from_coo` or :meth:`from_dense`
    rather than the raw constructor unless the arrays are already canonical.
    """

    nrows: int
    ncols: int
    row_starts: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rs = np.asarray(self.row_starts, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if rs.shape != (self.nrows + 1,) or rs[0] != 0 or rs[-1] != len(vals):
            raise ValueError("row_starts must have length nrows+1, start at 0 and end at nnz")
        if len(ci) != len(vals):
            raise ValueError("col_indices and values must have equal length")
        if np.any(np.diff(rs) < 0):
            raise ValueError("row_starts must be nondecreasing")
        if len(ci):
            if ci.min() < 0 or ci.max() >= self.ncols:
                raise ValueError("column index out of range")
            # strictly increasing inside each row: a non-increase is only
            # allowed where a new row begins
            step = np.diff(ci) <= 0
            boundary = np.zeros(len(ci) - 1, dtype=bool)
            starts = rs[1:-1]
            starts = starts[(starts > 0) & (starts < len(ci))]
            boundary[starts - 1] = True
            if np.any(step & ~boundary):
                raise ValueError("column indices must be strictly increasing within a row")
        if np.any(vals == 0.0):
            raise ValueError("explicit zeros are not allowed in canonical form")
        object.__setattr__(self, "row_starts", _frozen(rs))
        object.__setattr__(self, "col_indices", _frozen(ci))
        object.__setattr__(self, "values", _frozen(vals))

    # construction -------------------------------------------------------

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals) -> "SparseMatrix":
        """Build a canonical matrix from triplets; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have the same length")
        if len(rows) and (rows.min() < 0 or rows.max() >= nrows
                          or cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("triplet index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            first = np.ones(len(rows), dtype=bool)
            first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(first) - 1
            summed = np.zeros(int(group[-1]) + 1)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[first], cols[first], summed
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        counts = np.bincount(rows, minlength=nrows)
        row_starts = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(counts, out=row_starts[1:])
        return cls(int(nrows), int(ncols), row_starts, cols, vals)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("expected a 2-d array")
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    # views ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def density(self) -> float:
        cells = self.nrows * self.ncols
        return self.nnz / cells if cells else 0.0

    @property
    def T(self) -> "SparseMatrix":
        return transpose(self)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO expansion of row_starts)."""
        return np.repeat(np.arange(self.nrows), np.diff(self.row_starts))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_indices] = self.values
        return out

    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2)))

    def max_nnz_per_line(self) -> int:
        """Largest number of stored entries in any row or column."""
        if self.nnz == 0:
            return 0
        per_row = np.diff(self.row_starts).max()
        per_col = np.bincount(self.col_indices, minlength=self.ncols).max()
        return int(max(per_row, per_col))

    def matvec(self, x) -> np.ndarray:
        return spmv(self, x)

    def rmatvec(self, y) -> np.ndarray:
        return spmv_t(self, y)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_starts, other.row_starts)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def as_sparse(a) -> SparseMatrix:
    """Accept a SparseMatrix, a dense array or anything with ``toarray``/``tocoo``."""
    if isinstance(a, SparseMatrix):
        return a
    if hasattr(a, "tocoo"):
        coo = a.tocoo()
        return SparseMatrix.from_coo(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)
    return SparseMatrix.from_dense(a)


# products -------------------------------------------------------------------


def _check_vector(x, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"dimension mismatch: {what} has shape {x.shape}, expected ({n},)")
    if not np.isfinite(x).all():
        raise ValueError(f"{what} has non-finite entries")
    return x


def spmv(A: SparseMatrix, x) -> np.ndarray:
    """y = A x, each row summed left to right in ascending column order."""
    x = _check_vector(x, A.ncols, "x")
    y = np.zeros(A.nrows)
    # np.add.at is unbuffered and applies updates in index order
    np.add.at(y, A.row_indices(), A.values * x[A.col_indices])
    return y


def spmv_t(A: SparseMatrix, y) -> np.ndarray:
    """x = A^T y by a column-scatter pass over the CSR arrays."""
    y = _check_vector(y, A.nrows, "y")
    x = np.zeros(A.ncols)
    np.add.at(x, A.col_indices, A.values * y[A.row_indices()])
    return x


def transpose(A: SparseMatrix) -> SparseMatrix:
    rows = A.row_indices()
    # stable sort by column keeps ascending rows within each new row
    order = np.argsort(A.col_indices, kind="stable")
    counts = np.bincount(A.col_indices, minlength=A.ncols)
    row_starts = np.zeros(A.ncols + 1, dtype=np.int64)
    np.cumsum(counts, out=row_starts[1:])
    return SparseMatrix(A.ncols, A.nrows, row_starts, rows[order], A.values[order])


# pruning ----------------------------------------------------------------------


@dataclass(frozen=True)
class PruneReport:
    kept_rows: np.ndarray
    kept_cols: np.ndarray
    removed_rows: int
    removed_cols: int
    original_shape: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "original_shape": list(self.original_shape),
            "removed_rows": self.removed_rows,
            "removed_cols": self.removed_cols,
        }


def prune_zero_rows_cols(A: SparseMatrix) -> tuple[SparseMatrix, PruneReport]:
    """Drop empty rows and columns; the report maps back to original indices."""
    if A.nnz == 0:
        raise ValueError("matrix has no nonzeros")
    kept_rows = np.flatnonzero(np.diff(A.row_starts) > 0)
    col_counts = np.bincount(A.col_indices, minlength=A.ncols)
    kept_cols = np.flatnonzero(col_counts > 0)
    new_col = np.full(A.ncols, -1, dtype=np.int64)
    new_col[kept_cols] = np.arange(len(kept_cols))
    row_starts = np.zeros(len(kept_rows) + 1, dtype=np.int64)
    np.cumsum(np.diff(A.row_starts)[kept_rows], out=row_starts[1:])
    # stored entries keep their relative order; only the labels change
    pruned = SparseMatrix(
        len(kept_rows), len(kept_cols), row_starts, new_col[A.col_indices], A.values
    )
    report = PruneReport(
        kept_rows=_frozen(kept_rows),
        kept_cols=_frozen(kept_cols),
        removed_rows=A.nrows - len(kept_rows),
        removed_cols=A.ncols - len(kept_cols),
        original_shape=A.shape,
    )
    return pruned, report


# Matrix Market ------------------------------------------------------------------

_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="ascii")
    return open(path, "r", encoding="ascii")


def mm_read(path) -> SparseMatrix:
    """Read a real/integer coordinate Matrix Market file (optionally gzipped)."""
    path = Path(path)
    with _open_text(path) as fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise MatrixMarketError("missing %%MatrixMarket header", 1)
        obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix":
            raise MatrixMarketError(f"unsupported object {obj!r}", 1)
        if fmt != "coordinate":
            raise MatrixMarketError(f"unsupported format {fmt!r}; only coordinate is read", 1)
        if field in ("complex", "pattern"):
            raise MatrixMarketError(f"unsupported field {field!r}; only real or integer", 1)
        if field not in ("real", "integer", "double"):
            raise MatrixMarketError(f"unknown field {field!r}", 1)
        if symmetry not in _SYMMETRIES:
            raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)

        lineno = 1
        size = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size = stripped.split()
            break
        if size is None:
            raise MatrixMarketError("missing size line", lineno)
        try:
            nrows, ncols, nnz = (int(s) for s in size)
        except ValueError:
            raise MatrixMarketError("size line must hold three integers", lineno) from None

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"expected 'row col value', got {stripped!r}", lineno)
            if k >= nnz:
                raise MatrixMarketError("more entries than declared", lineno)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"cannot parse entry {stripped!r}", lineno) from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(f"index ({i}, {j}) outside {nrows}x{ncols}", lineno)
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"declared {nnz} entries, found {k}", lineno)

    if symmetry != "general":
        off = rows != cols
        sign = -1.0 if symmetry == "skew-symmetric" else 1.0
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, sign * vals[off]]),
        )
    return SparseMatrix.from_coo(nrows, ncols, rows, cols, vals)


def mm_write(path, A: SparseMatrix, comment: str | None = None) -> None:
    """Write ``A`` as a general real coordinate file with 17 significant digits."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
        for i, j, v in zip(A.row_indices(), A.col_indices, A.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
