import gzip

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from krylov_stab.dense import EPS
from krylov_stab.sparse import (
    MatrixMarketError,
    SparseMatrix,
    as_sparse,
    mm_read,
    mm_write,
    prune_zero_rows_cols,
    spmv,
    spmv_t,
    transpose,
)


def random_sparse(seed, m, n, density):
    rng = np.random.default_rng(seed)
    mask = rng.random((m, n)) < density
    return SparseMatrix.from_dense(np.where(mask, rng.standard_normal((m, n)), 0.0))


sparse_matrices = st.builds(
    random_sparse,
    st.integers(0, 2**32 - 1),
    st.integers(1, 25),
    st.integers(1, 25),
    st.floats(0.05, 1.0),
)

dense_with_zeros = hnp.arrays(
    np.float64,
    hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8),
    elements=st.sampled_from([0.0, 0.0, 0.0, 1.0, -2.5, 1e-300, 3.75e10, -0.125]),
)


def write_text(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


# construction and canonical form


def test_from_dense_roundtrip(rng):
    a = np.where(rng.random((7, 5)) < 0.4, rng.standard_normal((7, 5)), 0.0)
    A = SparseMatrix.from_dense(a)
    assert np.array_equal(A.to_dense(), a)
    assert A.nnz == np.count_nonzero(a)


def test_from_coo_sums_duplicates_and_drops_cancellations():
    A = SparseMatrix.from_coo(2, 2, [0, 0, 1, 1], [0, 0, 1, 1], [1.0, 1.0, 3.0, -3.0])
    assert A.nnz == 1
    assert A.values.tolist() == [2.0]
    assert A.to_dense().tolist() == [[2.0, 0.0], [0.0, 0.0]]


def test_raw_constructor_rejects_noncanonical():
    with pytest.raises(ValueError, match="explicit zeros"):
        SparseMatrix(1, 2, [0, 1], [0], [0.0])
    with pytest.raises(ValueError, match="strictly increasing"):
        SparseMatrix(1, 3, [0, 2], [2, 1], [1.0, 1.0])
    with pytest.raises(ValueError, match="row_starts"):
        SparseMatrix(2, 2, [0, 1], [0], [1.0])
    with pytest.raises(ValueError, match="out of range"):
        SparseMatrix(1, 2, [0, 1], [2], [1.0])


def test_arrays_are_read_only():
    A = SparseMatrix.identity(3)
    with pytest.raises(ValueError):
        A.values[0] = 5.0


@given(dense_with_zeros)
def test_canonical_invariants(a):
    A = SparseMatrix.from_dense(a)
    rs = A.row_starts
    assert rs[0] == 0 and rs[-1] == A.nnz == len(A.col_indices)
    assert np.all(np.diff(rs) >= 0)
    for i in range(A.nrows):
        cols = A.col_indices[rs[i]:rs[i + 1]]
        assert np.all(np.diff(cols) > 0)
        assert np.all(cols < A.ncols)
    assert not np.any(A.values == 0.0)
    assert np.array_equal(A.to_dense(), a)


def test_as_sparse_accepts_dense_and_scipy():
    sp = pytest.importorskip("scipy.sparse")
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert as_sparse(a) == SparseMatrix.from_dense(a)
    assert as_sparse(sp.csr_matrix(a)) == SparseMatrix.from_dense(a)


# transpose


def test_transpose_identity():
    assert transpose(SparseMatrix.identity(3)) == SparseMatrix.identity(3)


def test_transpose_small():
    A = SparseMatrix.from_dense([[1, 0, 2], [0, 3, 0]])
    assert transpose(A).to_dense().tolist() == [[1, 0], [0, 3], [2, 0]]


def test_transpose_roundtrip_random_2pct():
    A = random_sparse(7, 50, 80, 0.02)
    AT = transpose(A)
    assert AT.shape == (80, 50)
    B = transpose(AT)
    assert B == A
    assert np.array_equal(B.values, A.values)


@given(sparse_matrices)
def test_transpose_matches_dense(A):
    assert np.array_equal(transpose(A).to_dense(), A.to_dense().T)
    assert transpose(transpose(A)) == A


# products


def test_spmv_examples():
    I3 = SparseMatrix.identity(3)
    assert spmv(I3, [1.0, 2.0, 3.0]).tolist() == [1.0, 2.0, 3.0]
    A = SparseMatrix.from_dense([[1, 0, 2], [0, 3, 0]])
    assert spmv(A, np.ones(3)).tolist() == [3.0, 3.0]
    assert spmv_t(A, np.ones(2)).tolist() == [1.0, 3.0, 2.0]


def test_spmv_dimension_mismatch():
    A = SparseMatrix.identity(3)
    with pytest.raises(ValueError):
        spmv(A, np.ones(2))
    with pytest.raises(ValueError):
        spmv_t(A, np.ones(4))


def test_spmv_rejects_nonfinite():
    with pytest.raises(ValueError):
        spmv(SparseMatrix.identity(2), [1.0, np.nan])


def test_spmv_t_bitwise_equals_materialized_transpose():
    rng = np.random.default_rng(3)
    A = random_sparse(11, 100, 60, 0.1)
    y = rng.standard_normal(100)
    assert np.array_equal(spmv_t(A, y), spmv(transpose(A), y))


def test_spmv_matches_dense_product(rng):
    A = random_sparse(5, 30, 20, 0.3)
    x = rng.standard_normal(20)
    ref = A.to_dense() @ x
    assert np.allclose(spmv(A, x), ref, rtol=1e-14, atol=1e-14 * np.abs(ref).max())


@given(sparse_matrices, st.integers(0, 2**32 - 1))
def test_adjoint_identity(A, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.ncols)
    y = rng.standard_normal(A.nrows)
    lhs = y @ spmv(A, x)
    rhs = spmv_t(A, y) @ x
    c = 4 * max(A.max_nnz_per_line(), 1)
    assert abs(lhs - rhs) <= c * EPS * A.frobenius_norm() * np.linalg.norm(x) * np.linalg.norm(y)


@given(sparse_matrices, st.integers(0, 2**32 - 1))
def test_spmv_deterministic(A, seed):
    x = np.random.default_rng(seed).standard_normal(A.ncols)
    assert np.array_equal(spmv(A, x), spmv(A, x.copy()))


# pruning


def test_prune_one_zero_row():
    A = SparseMatrix.from_dense([[1.0, 2.0], [0.0, 0.0], [0.0, 3.0]])
    P, rep = prune_zero_rows_cols(A)
    assert P.shape == (2, 2)
    assert rep.removed_rows == 1 and rep.removed_cols == 0
    assert rep.kept_rows.tolist() == [0, 2]
    assert P.to_dense().tolist() == [[1.0, 2.0], [0.0, 3.0]]


def test_prune_noop():
    A = SparseMatrix.identity(4)
    P, rep = prune_zero_rows_cols(A)
    assert P == A
    assert rep.removed_rows == rep.removed_cols == 0


def test_prune_all_zero_matrix():
    A = SparseMatrix.from_dense(np.zeros((3, 2)))
    with pytest.raises(ValueError, match="matrix has no nonzeros"):
        prune_zero_rows_cols(A)


@given(dense_with_zeros.filter(lambda a: np.any(a)), st.integers(0, 2**32 - 1))
def test_prune_then_spmv_is_projection(a, seed):
    A = SparseMatrix.from_dense(a)
    P, rep = prune_zero_rows_cols(A)
    assert np.all(np.diff(rep.kept_rows) > 0) and np.all(np.diff(rep.kept_cols) > 0)
    assert rep.removed_rows + len(rep.kept_rows) == A.nrows
    assert rep.removed_cols + len(rep.kept_cols) == A.ncols
    assert np.all(np.diff(P.row_starts) > 0)
    assert np.all(np.bincount(P.col_indices, minlength=P.ncols) > 0)
    x = np.random.default_rng(seed).standard_normal(A.ncols)
    full = spmv(A, x)
    assert np.array_equal(spmv(P, x[rep.kept_cols]), full[rep.kept_rows])


# Matrix Market


def test_mm_read_one_by_one(tmp_path):
    p = write_text(tmp_path, "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.0\n")
    A = mm_read(p)
    assert A.shape == (1, 1) and A.values.tolist() == [2.0]


def test_mm_read_duplicates_summed(tmp_path):
    p = write_text(tmp_path, "%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.0\n1 1 1.0\n")
    A = mm_read(p)
    assert A.nnz == 1 and A.values.tolist() == [2.0]


def test_mm_read_symmetric_and_skew(tmp_path):
    p = write_text(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 4\n2 1 3\n")
    assert mm_read(p).to_dense().tolist() == [[4.0, 3.0], [3.0, 0.0]]
    p = write_text(tmp_path, "%%MatrixMarket matrix coordinate integer skew-symmetric\n2 2 1\n2 1 5\n", "s.mtx")
    assert mm_read(p).to_dense().tolist() == [[0.0, -5.0], [5.0, 0.0]]


def test_mm_read_gzip(tmp_path):
    p = tmp_path / "m.mtx.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n2 3 1\n2 3 -1.5\n")
    A = mm_read(p)
    assert A.shape == (2, 3) and A.to_dense()[1, 2] == -1.5


@pytest.mark.parametrize("field", ["complex", "pattern"])
def test_mm_read_rejects_field(tmp_path, field):
    p = write_text(tmp_path, f"%%MatrixMarket matrix coordinate {field} general\n1 1 1\n1 1\n")
    with pytest.raises(MatrixMarketError, match=f"unsupported field '{field}'"):
        mm_read(p)


def test_mm_read_error_carries_line(tmp_path):
    p = write_text(tmp_path, "%%MatrixMarket matrix coordinate real general\n%x\n2 2 2\n1 1 1.0\n1 x 2.0\n")
    with pytest.raises(MatrixMarketError) as err:
        mm_read(p)
    assert err.value.line == 5
    assert "line 5" in str(err.value)


@pytest.mark.parametrize(
    "body",
    [
        "2 2 2\n1 1 1.0\n",  # too few entries
        "2 2 1\n3 1 1.0\n",  # index out of range
        "2 2\n",  # bad size line
    ],
)
def test_mm_read_malformed(tmp_path, body):
    p = write_text(tmp_path, "%%MatrixMarket matrix coordinate real general\n" + body)
    with pytest.raises(MatrixMarketError):
        mm_read(p)


def test_mm_read_bad_header(tmp_path):
    p = write_text(tmp_path, "not a header\n")
    with pytest.raises(MatrixMarketError, match="line 1"):
        mm_read(p)


@given(sparse_matrices)
def test_mm_roundtrip_exact(tmp_path_factory, A):
    p = tmp_path_factory.mktemp("mm") / "a.mtx"
    mm_write(p, A, comment="roundtrip")
    B = mm_read(p)
    assert B == A
