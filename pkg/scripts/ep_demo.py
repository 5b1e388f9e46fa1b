"""Three-by-three example where GMRES reaches the least-squares solution at
step 2 and then loses it because R_2^T R_2 is numerically singular.

    python scripts/ep_demo.py
"""

import numpy as np

from krylov_stab.dense import EPS, cholesky
from krylov_stab.krylov import Method, SolverOptions, Subsolve, run_gmres
from krylov_stab.problems import make_ep3


def main():
    A, b = make_ep3()
    print("A =\n", A.to_dense())
    for sub in (Subsolve.PLAIN, Subsolve.STABILIZED):
        res = run_gmres(A, b, SolverOptions(method=Method.GMRES, subsolve=sub, target_relres=0))
        print(f"\n{sub.value}:")
        print(" iter  atr                     rnorm                   nonsingular")
        for r in res.trace:
            print(f" {r.iter:4d}  {r.atr:<22.17g}  {r.rnorm:<22.17g}  {r.theorem4_ok}")
        print(f" best atr {res.atr_best:.3e} at iter {res.iter_best}, status {res.status.value}")

    R2 = np.array([[1.0, 1.0], [0.0, np.sqrt(EPS)]])
    F = cholesky(R2.T @ R2)
    print("\nfl(R2^T R2) pivots:", F.pivots, "LDL^T fallback:", F.fallback_used)


if __name__ == "__main__":
    main()
