"""Benchmark harness: ``krylov-stab run`` and ``krylov-stab compare``.

``run`` builds or loads one problem, runs every requested solver on it and
writes one CSV trace per solver plus ``summary.json`` into ``--out``.
``compare`` renders summaries as a markdown table.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dense import EPS
from .krylov import Method, SolverOptions, SolverResult, Subsolve, TraceRecord, solve
from .problems import (
    ProblemKind,
    ProblemSpec,
    load_matrix,
    make_ep3,
    make_nullsym_square,
    make_random_rect,
    random_rhs,
)
from .sparse import SparseMatrix

SCHEMA_VERSION = 1
CSV_HEADER = ["iter", "atr", "rnorm", "rho", "cond_R", "switched", "theorem4_ok"]
SEED_ENV = "KRYLOV_STAB_SEED"

_SOLVER_NAMES = {
    "ab-gmres": Method.AB_GMRES,
    "ba-gmres": Method.BA_GMRES,
    "rr-ab-gmres": Method.RR_AB_GMRES,
    "gmres": Method.GMRES,
    "lsqr": Method.LSQR,
    "lsmr": Method.LSMR,
}


class CliError(Exception):
    pass


@dataclass(frozen=True)
class SolverChoice:
    name: str
    method: Method
    subsolve: Subsolve = Subsolve.PLAIN
    switching: bool = False

    @classmethod
    def parse(cls, text: str) -> "SolverChoice":
        name, _, sub = text.strip().lower().partition(":")
        key = name.replace("_", "-")
        if key not in _SOLVER_NAMES:
            raise CliError(f"unknown solver {name!r}; choose from {', '.join(_SOLVER_NAMES)}")
        method = _SOLVER_NAMES[key]
        if method in (Method.LSQR, Method.LSMR):
            if sub:
                raise CliError(f"{key} takes no subsolve")
            return cls(key, method)
        sub = sub.replace("-", "_") or "plain"
        if sub == "switching":
            if method is not Method.AB_GMRES:
                raise CliError("switching is only defined for ab-gmres")
            return cls(f"{key}:switching", method, Subsolve.PLAIN, True)
        try:
            subsolve = Subsolve(sub)
        except ValueError:
            raise CliError(f"unknown subsolve {sub!r}") from None
        return cls(f"{key}:{subsolve.value}", method, subsolve)

    @property
    def file_stem(self) -> str:
        return self.name.replace(":", "-")


@dataclass
class RunConfig:
    problem: ProblemSpec
    solvers: list[SolverChoice]
    output_dir: Path
    transpose: bool = False
    prune: bool = True
    seed: int = 0
    repeats: int = 1
    base_options: SolverOptions = field(default_factory=SolverOptions)
    cond_checkpoint_every: int = 0
    parallel: bool = False

    def __post_init__(self):
        if not self.solvers:
            raise CliError("at least one --solver is required")
        if self.repeats < 1:
            raise CliError("--repeats must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise CliError("--seed must be an unsigned 64-bit integer")


# problem construction ----------------------------------------------------------------


def build_problem(cfg: RunConfig, seed: int):
    """Return ``(A, b, matrix_info)`` for the configured problem."""
    spec = cfg.problem
    info: dict = {"kind": spec.kind.value}
    if spec.kind is ProblemKind.FROM_FILE:
        A, report = load_matrix(spec.path, transpose_it=cfg.transpose, prune=cfg.prune)
        name = Path(spec.path).name
        for suffix in (".gz", ".mtx"):
            if name.endswith(suffix):
                name = name[: -len(suffix)]
        info["name"] = name + ("T" if cfg.transpose else "")
        info["path"] = str(spec.path)
        info["prune"] = report.to_dict() if report is not None else None
        b = random_rhs(A.nrows, seed)
    elif spec.kind is ProblemKind.EP3:
        A, b = make_ep3()
        info["name"] = "ep3"
    elif spec.kind is ProblemKind.NULLSYM_SQUARE:
        A = SparseMatrix.from_dense(make_nullsym_square(spec.nrows, spec.rank_deficiency, seed))
        b = random_rhs(A.nrows, [seed, 1])
        info["name"] = f"nullsym_{spec.nrows}_{spec.rank_deficiency}"
    else:
        A, b, _ = make_random_rect(replace(spec, rng_seed=seed))
        info["name"] = f"random_{spec.nrows}x{spec.ncols}"
    info.update(nrows=A.nrows, ncols=A.ncols, nnz=A.nnz, density=A.density)
    return A, b, info


# trace output ---------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def trace_row(rec: TraceRecord) -> list[str]:
    return [_fmt(getattr(rec, name)) for name in CSV_HEADER]


class TraceWriter:
    """Append-only CSV writer flushed after every record."""

    def __init__(self, path: Path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(CSV_HEADER)
        self._fh.flush()

    def __call__(self, rec: TraceRecord) -> None:
        self._csv.writerow(trace_row(rec))
        self._fh.flush()

    def close(self):
        self._fh.close()


# running --------------------------------------------------------------------------


def derived_seed(seed: int, repeat: int) -> int:
    """Seed used by repeat ``k``; repeat 0 keeps the base seed."""
    if repeat == 0:
        return seed
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1, np.uint64)[0])


def _options(cfg: RunConfig, choice: SolverChoice, seed: int) -> SolverOptions:
    return replace(
        cfg.base_options,
        method=choice.method,
        subsolve=choice.subsolve,
        switching=choice.switching,
        rng_seed=seed,
        cond_every=cfg.cond_checkpoint_every,
    )


def _run_solver(cfg: RunConfig, choice: SolverChoice, problems) -> dict:
    entry: dict = {"solver": choice.name, "trace": f"{choice.file_stem}.csv"}
    try:
        walls = []
        first: SolverResult | None = None
        for k, (A, b, seed) in enumerate(problems):
            writer = TraceWriter(cfg.output_dir / entry["trace"]) if k == 0 else None
            try:
                res = solve(A, b, _options(cfg, choice, seed), callback=writer)
            finally:
                if writer is not None:
                    writer.close()
            walls.append(res.wall_seconds)
            if k == 0:
                first = res
        entry.update(
            status=first.status.value,
            iter_best=first.iter_best,
            atr_best=first.atr_best,
            iterations=first.iterations,
            switched_at=first.switched_at,
            wall_seconds=float(np.mean(walls)),
            wall_seconds_runs=walls,
        )
    except Exception as exc:  # isolate the failure, keep going with the others
        entry.update(status="error", error=_error_dict(exc))
    return entry


def _error_dict(exc: BaseException) -> dict:
    return {"type": type(exc).__name__, "message": str(exc)}


def cli_run(cfg: RunConfig) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    seeds = [derived_seed(cfg.seed, k) for k in range(cfg.repeats)]
    problems = []
    info = None
    for s in seeds:
        A, b, inf = build_problem(cfg, s)
        problems.append((A, b, s))
        info = info or inf

    if cfg.parallel and len(cfg.solvers) > 1:
        with ThreadPoolExecutor(max_workers=len(cfg.solvers)) as pool:
            entries = list(pool.map(lambda c: _run_solver(cfg, c, problems), cfg.solvers))
    else:
        entries = [_run_solver(cfg, c, problems) for c in cfg.solvers]

    opts = asdict(cfg.base_options)
    for key in ("method", "subsolve"):
        opts.pop(key)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "matrix": info,
        "environment": {
            "precision": "float64",
            "eps": EPS,
            "seed": cfg.seed,
            "repeats": cfg.repeats,
            "seeds": seeds,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "options": opts,
        "solvers": entries,
    }
    with open(cfg.output_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    failed = [e for e in entries if e["status"] == "error"]
    if failed:
        json.dump({"error": "solver_failure", "failed": failed}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


# compare ----------------------------------------------------------------------------


def load_summary(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        raise CliError(f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
    return data


def cli_compare(paths) -> str:
    if not paths:
        raise CliError("compare needs at least one summary file")
    rows = []
    for p in paths:
        data = load_summary(p)
        name = data["matrix"]["name"]
        for e in data["solvers"]:
            rows.append((name, e["solver"], e))
    rows.sort(key=lambda r: (r[0], r[1]))
    out = ["| matrix | solver | iter | atr | seconds |", "|---|---|---:|---:|---:|"]
    for name, solver, e in rows:
        if e["status"] == "error":
            out.append(f"| {name} | {solver} | error | {e['error']['type']} | |")
            continue
        out.append(
            f"| {name} | {solver} | {e['iter_best']} | {e['atr_best']:.3e} | {e['wall_seconds']:.3f} |"
        )
    return "\n".join(out) + "\n"


# argument parsing ------------------------------------------------------------------------


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    # usage errors go through the JSON error path instead of printing usage
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="krylov-stab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run solvers on one problem")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", choices=[k.value for k in ProblemKind if k is not ProblemKind.FROM_FILE])
    src.add_argument("--matrix", type=Path, help="Matrix Market file (optionally .gz)")
    run.add_argument("--transpose", action="store_true")
    run.add_argument("--no-prune", action="store_true")
    run.add_argument("--solver", action="append", nargs="+", required=True,
                     help="name[:subsolve], e.g. ab-gmres:plain ab-gmres:switching lsqr")
    run.add_argument("--seed", type=_u64, default=None, help=f"RHS seed (env {SEED_ENV} overrides the default 0)")
    run.add_argument("--max-iter", type=int)
    run.add_argument("--mu", type=float, default=1e-8)
    run.add_argument("--lambda", dest="lam", type=float, default=1e-16)
    run.add_argument("--switch-factor", type=float, default=10.0)
    run.add_argument("--target-relres", type=float, default=0.0,
                     help="early-stop threshold; 0 scans the whole budget for the best iterate")
    run.add_argument("--eval-cadence", type=int, default=1)
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--repeats", type=int, default=1)
    run.add_argument("--cond-every", type=int, default=0)
    run.add_argument("--parallel", action="store_true")
    gen = run.add_argument_group("generator options")
    gen.add_argument("--nrows", type=int, default=40)
    gen.add_argument("--ncols", type=int, default=60)
    gen.add_argument("--density", type=float, default=1.0)
    gen.add_argument("--rank-deficiency", type=int, default=0)
    gen.add_argument("--consistent", action="store_true")

    cmp_ = sub.add_parser("compare", help="tabulate summary.json files")
    cmp_.add_argument("summaries", nargs="+", type=Path)
    return ap


def resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _u64(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise CliError(f"{SEED_ENV}={env!r} is not an unsigned 64-bit integer") from None
    return 0


def config_from_args(args) -> RunConfig:
    if args.matrix is not None:
        if not args.matrix.exists():
            raise CliError(f"matrix file not found: {args.matrix}")
        spec = ProblemSpec(kind=ProblemKind.FROM_FILE, path=str(args.matrix))
    else:
        spec = ProblemSpec(
            kind=ProblemKind(args.problem),
            nrows=args.nrows,
            ncols=args.ncols,
            density=args.density,
            rank_deficiency=args.rank_deficiency,
            consistent=args.consistent,
        )
    base = SolverOptions(
        mu=args.mu,
        lam=args.lam,
        switch_factor=args.switch_factor,
        max_iter=args.max_iter,
        target_relres=args.target_relres,
        eval_cadence=args.eval_cadence,
    )
    solvers = [SolverChoice.parse(s) for group in args.solver for s in group]
    return RunConfig(
        problem=spec,
        solvers=solvers,
        output_dir=args.out,
        transpose=args.transpose,
        prune=not args.no_prune,
        seed=resolve_seed(args.seed),
        repeats=args.repeats,
        base_options=base,
        cond_checkpoint_every=args.cond_every,
        parallel=args.parallel,
    )


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "compare":
            sys.stdout.write(cli_compare(args.summaries))
            return 0
        return cli_run(config_from_args(args))
    except Exception as exc:
        err = _error_dict(exc)
        if not isinstance(exc, (CliError, ValueError, OSError)):
            err["traceback"] = traceback.format_exc()
        json.dump({"error": err}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
