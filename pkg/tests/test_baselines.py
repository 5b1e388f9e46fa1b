import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krylov_stab.baselines import GolubKahan, run_lsmr, run_lsqr
from krylov_stab.krylov import Method, SolverOptions, Status, run_gmres
from krylov_stab.problems import ProblemSpec, make_random_rect
from krylov_stab.sparse import SparseMatrix

seeds = st.integers(0, 2**32 - 1)
RUNNERS = {"lsqr": run_lsqr, "lsmr": run_lsmr}


def problem(seed, consistent=True, m=20, n=30, **kw):
    return make_random_rect(ProblemSpec(nrows=m, ncols=n, rng_seed=seed, consistent=consistent, **kw))


def test_bidiagonalization_orthonormal():
    A, b, _ = problem(1, density=0.5)
    gk = GolubKahan(A, b)
    U, V = [gk.state.u], [gk.state.v]
    for _ in range(8):
        s = gk.step()
        assert abs(np.linalg.norm(s.u) - 1) <= 1e-10
        assert abs(np.linalg.norm(s.v) - 1) <= 1e-10
        U.append(s.u)
        V.append(s.v)
    U, V = np.array(U).T, np.array(V).T
    assert np.abs(U.T @ U - np.eye(U.shape[1])).max() <= 1e-8
    assert np.abs(V.T @ V - np.eye(V.shape[1])).max() <= 1e-8


@pytest.mark.parametrize("name", RUNNERS)
def test_identity_one_iteration(name, rng):
    b = rng.random(6)
    res = RUNNERS[name](SparseMatrix.identity(6), b)
    assert res.iterations == 1
    assert res.atr_best <= 1e-15
    assert np.allclose(res.x_best, b)


@pytest.mark.parametrize("name", RUNNERS)
def test_pseudoinverse_solution(name):
    A, b, _ = problem(4)
    res = RUNNERS[name](A, b, SolverOptions(target_relres=1e-13))
    xp = np.linalg.pinv(A.to_dense()) @ b
    assert np.linalg.norm(res.x_best - xp) <= 1e-8 * np.linalg.norm(xp)
    assert res.status is Status.CONVERGED


@pytest.mark.parametrize("name", RUNNERS)
def test_inconsistent_least_squares(name):
    A, b, _ = problem(5, consistent=False, m=30, n=20)
    res = RUNNERS[name](A, b, SolverOptions(target_relres=1e-12))
    xp = np.linalg.lstsq(A.to_dense(), b, rcond=None)[0]
    assert np.linalg.norm(res.x_best - xp) <= 1e-8 * np.linalg.norm(xp)


@pytest.mark.parametrize("name", RUNNERS)
def test_matches_scipy_iterates(name):
    linalg = pytest.importorskip("scipy.sparse.linalg")
    sp = pytest.importorskip("scipy.sparse")
    A, b, _ = problem(9, consistent=False, m=40, n=25, density=0.3)
    k = 10
    res = RUNNERS[name](A, b, SolverOptions(max_iter=k, target_relres=0))
    S = sp.csr_matrix(A.to_dense())
    if name == "lsqr":
        ref = linalg.lsqr(S, b, atol=0, btol=0, conlim=0, iter_lim=k)[0]
    else:
        ref = linalg.lsmr(S, b, atol=0, btol=0, conlim=0, maxiter=k)[0]
    # same recurrences, so after k steps the iterates agree closely
    last = res.trace[-1]
    assert last.iter == k
    r = b - A.matvec(ref)
    assert last.rnorm == pytest.approx(np.linalg.norm(r), rel=1e-9)


@given(seeds)
@settings(max_examples=20)
def test_lsqr_residual_monotone(seed):
    A, b, _ = problem(seed, consistent=False, density=0.4, m=30, n=20)
    res = run_lsqr(A, b, SolverOptions(target_relres=0, max_iter=25))
    rn = res.trace.column("rnorm")
    assert np.all(rn[1:] <= rn[:-1] * (1 + 1e-10) + 1e-13)


@given(seeds)
@settings(max_examples=20)
def test_lsmr_normal_residual_monotone(seed):
    A, b, _ = problem(seed, consistent=False, density=0.4, m=30, n=20)
    res = run_lsmr(A, b, SolverOptions(target_relres=0, max_iter=25))
    atr = res.trace.atr
    floor = 1e-12
    assert np.all(atr[1:] <= atr[:-1] * (1 + 1e-8) + floor)


@given(seeds)
@settings(max_examples=10)
def test_baselines_agree_with_ba_gmres(seed):
    A, b, _ = problem(seed, m=15, n=25)
    n = A.ncols
    ba = run_gmres(A, b, SolverOptions(method=Method.BA_GMRES, target_relres=1e-11, max_iter=n))
    lq = run_lsqr(A, b, SolverOptions(target_relres=1e-11, max_iter=n * 4))
    lm = run_lsmr(A, b, SolverOptions(target_relres=1e-11, max_iter=n * 4))
    for res in (ba, lq, lm):
        assert res.atr_best <= 1e-10


def test_default_budget_is_twenty_n():
    A, b, _ = problem(2, consistent=False, m=10, n=6)
    res = run_lsqr(A, b, SolverOptions(target_relres=0, stagnation_window=10**9))
    assert res.iterations <= 20 * A.ncols


def test_stagnation_stops_run():
    A, b, _ = problem(2, consistent=False, m=10, n=6)
    res = run_lsmr(A, b, SolverOptions(target_relres=0, stagnation_window=5, max_iter=500))
    assert res.status is Status.STAGNATED
    assert res.iterations < 500
    assert res.iterations - res.iter_best == 5


@pytest.mark.parametrize("name", RUNNERS)
def test_best_atr_is_trace_min(name):
    A, b, _ = problem(3, consistent=False)
    res = RUNNERS[name](A, b, SolverOptions(target_relres=0, max_iter=200))
    assert res.atr_best == res.trace.atr.min()
    assert res.method == name


@pytest.mark.parametrize("name", RUNNERS)
def test_input_errors(name):
    f = RUNNERS[name]
    with pytest.raises(ValueError):
        f(SparseMatrix.identity(3), np.zeros(3))
    with pytest.raises(ValueError):
        f(SparseMatrix.identity(3), np.ones(4))
    with pytest.raises(ValueError):
        f(SparseMatrix.from_dense(np.zeros((2, 2))), np.ones(2))


@pytest.mark.parametrize("name", RUNNERS)
def test_trace_rho_is_recurrence_estimate(name):
    A, b, _ = problem(8, consistent=False, m=25, n=15)
    res = RUNNERS[name](A, b, SolverOptions(target_relres=0, max_iter=10))
    rec = res.trace[-1]
    if name == "lsqr":
        assert rec.rho == pytest.approx(rec.rnorm, rel=1e-8)
    else:
        atr0 = np.linalg.norm(A.rmatvec(b))
        assert rec.rho == pytest.approx(rec.atr * atr0, rel=1e-6)
