"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 numerical failure,
4 convergence bound violated.

Activation files hold samples as rows (``X^T``, k x n), either as one CLMX
file or as a directory of ``chunk_*.clmx`` row blocks. Weight files hold W
(m x n).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, synthetic
from .io import ClmxFormatError, read_clmx, write_clmx
from .matcore import (
    CoalaError,
    DimensionError,
    FactorPair,
    NumericalFailure,
    Precision,
    PreconditionError,
    ProblemInstance,
    as_array,
    check_alpha,
    objective_value,
)
from .tsqr import DEFAULT_CHUNK_ROWS, TsqrPlan, augment_with_regularizer, open_source, run_plan
from .wlra import solve, solve_alpha, solve_from_r

log = logging.getLogger("coala")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_BOUND_VIOLATION = 4
STATUS_SCHEMA_VERSION = 1
DEFAULT_SEED = 42

METHODS = {
    "coala": "CoalaQR",
    "gram-cholesky": "GramCholesky",
    "gram-svd": "GramSVD",
    "reference": "Reference",
}


def resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("COALA_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise PreconditionError(f"COALA_SEED must be an integer, got {env!r}") from None


def float_grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid numeric grid {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def int_grid(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer grid {text!r}") from None


def shape_list(text):
    try:
        shapes = [tuple(int(d) for d in item.lower().split("x")) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid shape list {text!r}; expected e.g. 64x4096,128x8192") from None
    if not shapes or any(len(s) != 2 or min(s) < 1 for s in shapes):
        raise argparse.ArgumentTypeError(f"invalid shape list {text!r}")
    return shapes


def _load_activations(path, dtype, chunk_rows) -> np.ndarray:
    """Whole ``n x k`` activation matrix, for methods that cannot stream."""
    blocks = list(open_source(path, chunk_rows, dtype=dtype))
    if not blocks:
        raise DimensionError(f"no activation data in {path}")
    widths = {b.shape[1] for b in blocks}
    if len(widths) != 1:
        raise DimensionError(f"activation chunks in {path} have inconsistent widths {sorted(widths)}")
    return as_array(np.concatenate(blocks, axis=0).T, "activations")


def _write_status(out: Path, status: dict) -> None:
    (out / "status.json").write_text(json.dumps(status, indent=2, sort_keys=True))


def cmd_factorize(args) -> int:
    if args.rank < 1:
        raise PreconditionError(f"invalid rank {args.rank}: must be >= 1")
    if args.mu < 0:
        raise PreconditionError(f"invalid mu {args.mu}: must be >= 0")
    if args.alpha is not None:
        check_alpha(args.alpha)
    precision = Precision.parse(args.precision)
    dtype = precision.dtype
    method = METHODS[args.method]
    out = Path(args.out)
    W = as_array(read_clmx(args.weights), "weights").astype(dtype)
    started = time.perf_counter()
    short_data = False
    if method == "CoalaQR" and args.alpha in (None, 1):
        plan = TsqrPlan(args.strategy, args.chunk_rows, args.workers)
        R0 = run_plan(open_source(args.activations, args.chunk_rows, dtype=dtype), plan)
        if R0.n != W.shape[1]:
            raise DimensionError(f"activations have {R0.n} features but W has {W.shape[1]} columns")
        short_data = R0.short_data
        factors = solve_from_r(W, augment_with_regularizer(R0, args.mu), args.rank)
        # ||(W - W')X||_F equals ||(W - W')R^T||_F for R^T R = X X^T
        objective = objective_value(W, factors, R0.matrix.T)
    else:
        X = _load_activations(args.activations, dtype, args.chunk_rows)
        alpha = 1 if args.alpha is None else args.alpha
        if method != "CoalaQR" and args.mu > 0:
            raise PreconditionError(f"--mu applies to the coala method only, not {args.method}")
        if method == "CoalaQR" and args.mu > 0:
            raise PreconditionError("--mu and --alpha other than 1 cannot be combined")
        inst = ProblemInstance(W, X, args.rank, mu=args.mu, alpha=alpha)
        if method == "CoalaQR":
            factors = solve_alpha(inst)
        else:
            factors = solve(inst, method)
        objective = objective_value(W, factors, X)
    elapsed = time.perf_counter() - started
    out.mkdir(parents=True, exist_ok=True)
    write_clmx(out / "A.clmx", factors.A)
    write_clmx(out / "B.clmx", factors.B)
    st = factors.status
    _write_status(out, dict(
        schema_version=STATUS_SCHEMA_VERSION,
        method=st.method, path_taken=st.path_taken, objective=objective,
        mu=args.mu, alpha=1 if args.alpha is None else args.alpha, rank=args.rank,
        degenerate=st.degenerate, gap_degenerate=st.gap_degenerate, elapsed_seconds=elapsed,
        precision=precision.value, short_data=short_data,
    ))
    log.info("%s rank %d: objective %.6e in %.3fs", st.method, args.rank, objective, elapsed)
    return EXIT_OK


def cmd_tsqr(args) -> int:
    precision = Precision.parse(args.precision)
    if args.mu < 0:
        raise PreconditionError(f"invalid mu {args.mu}: must be >= 0")
    plan = TsqrPlan(args.strategy, args.chunk_rows, args.workers)
    R = run_plan(open_source(args.activations, args.chunk_rows, dtype=precision.dtype), plan)
    R = augment_with_regularizer(R, args.mu)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_clmx(out, R.matrix)
    log.info("R %dx%d from %d rows (%s)", R.n, R.n, R.total_rows, plan.strategy.value)
    return EXIT_OK


def _weights_and_activations(args, default):
    if (args.weights is None) != (args.activations is None):
        raise PreconditionError("--weights and --activations must be given together")
    if args.weights is None:
        return default()
    W = as_array(read_clmx(args.weights), "weights").astype(np.float64)
    X = _load_activations(args.activations, np.float64, DEFAULT_CHUNK_ROWS)
    return W, X


def cmd_study(args) -> int:
    seed = resolve_seed(args.seed)
    kind = analysis.StudyKind(args.kind)
    if kind is analysis.StudyKind.CONVERGENCE:
        W, X = _weights_and_activations(args, lambda: synthetic.random_instance(seed, 12, 8, 32))
        grid = args.mu_grid or [10.0 ** -i for i in range(1, 7)]
        report = analysis.convergence_study(W, X, args.rank or 3, grid, args.bound_scale, seed)
    elif kind is analysis.StudyKind.GAP:
        grid = args.gap_grid or [2.0 ** -i for i in range(11)]
        template = synthetic.SpectrumTemplate(seed=seed)
        report = analysis.gap_study(template, grid, args.rank or 4, args.mu if args.mu is not None else 1e-6)
    elif kind is analysis.StudyKind.STABILITY:
        def default():
            W = synthetic.rng_for(seed).standard_normal((32, 32))
            return W, synthetic.ill_conditioned_activations(seed + 1, 32, 256, 1e8)
        W, X = _weights_and_activations(args, default)
        report = analysis.stability_study(W, X, args.rank_grid or [1, 2, 4, 8], args.precision or "f32", seed)
    else:
        shapes = args.shapes or [(64, 4096), (128, 8192)]
        report = analysis.timing_study(shapes, repeats=args.repeats, chunk_rows=args.chunk_rows, seed=seed,
                                       workers=args.workers)
    csv_path, _ = report.write(args.out)
    log.info("wrote %s (%d rows)", csv_path, len(report.rows))
    if kind is analysis.StudyKind.CONVERGENCE and report.violations:
        print(f"convergence bound violated in {report.violations} row(s); see {csv_path}", file=sys.stderr)
        return EXIT_BOUND_VIOLATION
    return EXIT_OK


def cmd_fixture(args) -> int:
    """Write seeded synthetic inputs (W.clmx, X.clmx, fixture.json) for docs and CI."""
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(kind=args.kind, seed=seed)
    if args.kind == "spectrum":
        m, n, k = args.m or 12, args.n or 8, args.k or 32
        wx = np.linspace(8.0, 0.5, min(m, n))
        fx = synthetic.weighted_fixture(seed, m, n, k, wx, np.logspace(0, -1, n))
        W, X = fx.W, fx.X
        meta.update(wx_sigmas=fx.wx_sigmas.tolist(),
                    tail_energy={r: fx.tail_energy(r) for r in range(1, min(m, n) + 1)})
    elif args.kind == "random":
        W, X = synthetic.random_instance(seed, args.m or 12, args.n or 8, args.k or 32)
    elif args.kind == "ill-conditioned":
        n, k = args.n or 32, args.k or 256
        W = synthetic.rng_for(seed).standard_normal((args.m or 32, n))
        X = synthetic.ill_conditioned_activations(seed + 1, n, k, args.condition)
        meta.update(condition=args.condition)
    elif args.kind == "gram-loss":
        X = synthetic.gram_loss_activations(np.float32)
        # a heavy second row of W makes the direction lost by the Gram matrix matter
        W = np.diag([1.0, 1e3]).astype(np.float32)
        meta.update(sigmas=list(synthetic.gram_loss_sigmas(np.float32)))
    elif args.kind == "identity":
        n = args.n or 4
        W, X = np.eye(n), np.eye(n)
    else:
        raise PreconditionError(f"unknown fixture kind {args.kind!r}")
    write_clmx(out / "W.clmx", W)
    write_clmx(out / "X.clmx", np.ascontiguousarray(X.T))
    if args.chunk_rows:
        chunks = out / "chunks"
        chunks.mkdir(exist_ok=True)
        Xt = np.ascontiguousarray(X.T)
        for i, start in enumerate(range(0, Xt.shape[0], args.chunk_rows)):
            write_clmx(chunks / f"chunk_{i:05d}.clmx", Xt[start:start + args.chunk_rows])
    meta.update(m=W.shape[0], n=W.shape[1], k=X.shape[1])
    (out / "fixture.json").write_text(json.dumps(meta, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coala", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{factorize,tsqr,study}")

    p = sub.add_parser("factorize", help="rank-r factors A, B of W weighted by activations")
    p.add_argument("--weights", required=True)
    p.add_argument("--activations", required=True, help="CLMX file or chunk directory, samples as rows")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--alpha", type=int, default=None)
    p.add_argument("--method", choices=sorted(METHODS), default="coala")
    p.add_argument("--precision", choices=["f32", "f64"], default="f64")
    p.add_argument("--chunk-rows", type=int, default=DEFAULT_CHUNK_ROWS)
    p.add_argument("--strategy", choices=["sequential", "tree"], default="sequential")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("tsqr", help="R factor of streamed activations")
    p.add_argument("--activations", required=True)
    p.add_argument("--chunk-rows", type=int, default=DEFAULT_CHUNK_ROWS)
    p.add_argument("--strategy", choices=["sequential", "tree"], default="sequential")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--precision", choices=["f32", "f64"], default="f64")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tsqr)

    p = sub.add_parser("study", help="run an analysis study, write CSV + JSON")
    p.add_argument("--kind", required=True, choices=[k.value for k in analysis.StudyKind])
    p.add_argument("--mu-grid", type=float_grid)
    p.add_argument("--gap-grid", type=float_grid)
    p.add_argument("--rank-grid", type=int_grid)
    p.add_argument("--rank", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=["f32", "f64"])
    p.add_argument("--weights")
    p.add_argument("--activations")
    p.add_argument("--shapes", type=shape_list)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--chunk-rows", type=int, default=DEFAULT_CHUNK_ROWS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bound-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("fixture")
    p.add_argument("--kind", default="spectrum",
                   choices=["spectrum", "random", "ill-conditioned", "gram-loss", "identity"])
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--condition", type=float, default=1e8)
    p.add_argument("--chunk-rows", type=int, default=0, help="also write a chunk directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CoalaError, ClmxFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
