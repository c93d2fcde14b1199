"""Empirical checks of the stability and convergence claims.

Each study returns a :class:`StudyReport` whose rows serialize to a CSV with a
fixed column set per study kind, plus a JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synthetic
from .matcore import (
    DEFAULT_TOLERANCES,
    NumericalFailure,
    Precision,
    PreconditionError,
    ProblemInstance,
    SpectralSummary,
    as_array,
)
from .tsqr import (
    ArrayChunks,
    BufferMeter,
    TsqrPlan,
    sequential_buffer_bound,
    tsqr_sequential,
    tsqr_tree,
)
from .wlra import qr_reduce, solve_coala, solve_gram_cholesky, solve_gram_svd, solve_regularized


class StudyKind(str, enum.Enum):
    CONVERGENCE = "convergence"
    GAP = "gap"
    STABILITY = "stability"
    TIMING = "timing"


COLUMNS = {
    StudyKind.CONVERGENCE: ["mu", "measured_error", "bound_value", "bound_general",
                            "bound_full_row_rank", "slope", "violation"],
    StudyKind.GAP: ["gap", "sigma_r", "sigma_r1", "mu", "measured_error", "exponent"],
    StudyKind.STABILITY: ["method", "rank", "precision", "rel_error", "note"],
    StudyKind.TIMING: ["strategy", "n", "k", "chunk_rows", "repeats", "median_seconds",
                       "min_seconds", "max_seconds", "peak_buffer_scalars", "buffer_bound_scalars"],
}


@dataclass
class StudyReport:
    kind: StudyKind
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        return [row[name] for row in self.rows]

    @property
    def violations(self) -> int:
        return sum(1 for row in self.rows if row.get("violation"))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=COLUMNS[self.kind], extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _csv_value(row.get(k, "")) for k in COLUMNS[self.kind]})
        return path

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = self.write_csv(out_dir / f"{self.kind.value}.csv")
        json_path = out_dir / f"{self.kind.value}.json"
        json_path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=str))
        return csv_path, json_path


def _csv_value(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- slope fitting -----------------------------------------------------------

def fit_loglog_slope(x, y, noise_floor: float = 0.0, portion: str = "smallest_half") -> float:
    """OLS slope of ``log y`` against ``log x``.

    Uses the smallest half of the positive ``x`` values and drops points with
    ``y`` below ``noise_floor``. Returns NaN when fewer than two points remain.
    """
    pts = sorted((float(a), float(b)) for a, b in zip(x, y) if a > 0)
    if portion == "smallest_half":
        pts = pts[:math.ceil(len(pts) / 2)]
    pts = [(a, b) for a, b in pts if b > noise_floor and b > 0]
    if len(pts) < 2:
        return float("nan")
    lx = np.log([a for a, _ in pts])
    ly = np.log([b for _, b in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def noise_floor(W) -> float:
    return 1e3 * np.finfo(np.float64).eps * float(np.linalg.norm(W))


# -- convergence -------------------------------------------------------------

def convergence_bounds(W, X, r: int, mu: float) -> tuple[float, float]:
    """Return (general bound, full-row-rank bound); NaN where a bound's hypotheses fail.

    General: rank(X) = k >= r,
    ``2 ||W||_2^2 ||W||_F (s1(X)/sk(X) + max(1, mu / (4 sk(X)^2))) mu / (sr(WX)^2 - sr+1(WX)^2)``.
    Full row rank: ``||W||_2 ||W||_F mu / ((sr(WX) - sr+1(WX)) smin(X))``.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, k = X.shape
    sx = np.linalg.svd(X, compute_uv=False)
    rank = int(np.sum(sx > sx[0] * max(n, k) * np.finfo(np.float64).eps))
    wx = SpectralSummary.of(W @ X)
    w2 = float(np.linalg.svd(W, compute_uv=False)[0])
    wf = float(np.linalg.norm(W))
    s_r, s_r1 = wx.sigma(r), wx.sigma(r + 1)
    general = full_row = float("nan")
    if rank == k and k >= r:
        sk = sx[k - 1]
        general = (2 * w2 ** 2 * wf * (sx[0] / sk + max(1.0, mu / (4 * sk ** 2))) * mu
                   / (s_r ** 2 - s_r1 ** 2))
    if rank == n:
        full_row = w2 * wf * mu / ((s_r - s_r1) * sx[n - 1])
    return general, full_row


def convergence_study(W, X, r: int, mu_grid, bound_scale: float = 1.0, seed=None) -> StudyReport:
    """Distance between the regularized and unregularized solutions across ``mu``.

    ``bound_scale`` multiplies every bound before comparison; values below 1
    falsify the bounds on purpose, as a negative control.
    """
    W = as_array(W, "W").astype(np.float64)
    X = as_array(X, "X").astype(np.float64)
    inst = ProblemInstance(W, X, r)
    mus = [float(mu) for mu in mu_grid]
    if not mus:
        raise PreconditionError("mu_grid is empty")
    if any(not mu >= 0 for mu in mus):
        raise PreconditionError("mu_grid entries must be non-negative")
    if any(a <= b for a, b in zip(mus, mus[1:])):
        raise PreconditionError(f"mu_grid must be strictly decreasing, got {mus}")
    wx = SpectralSummary.of(W @ X)
    if wx.gap_at(r) <= DEFAULT_TOLERANCES.gap_rtol_double * wx.sigma(1):
        raise PreconditionError(f"sigma_r(WX) == sigma_(r+1)(WX) at r={r}: the limit solution is not unique")
    W0 = solve_coala(inst).product()
    rows = []
    for mu in mus:
        Wmu = solve_regularized(ProblemInstance(W, X, r, mu=mu)).product()
        measured = float(np.linalg.norm(W0 - Wmu))
        general, full_row = (bound_scale * b for b in convergence_bounds(W, X, r, mu))
        applicable = [b for b in (general, full_row) if not math.isnan(b)]
        bound = min(applicable) if applicable else float("nan")
        rows.append(dict(mu=mu, measured_error=measured, bound_value=bound, bound_general=general,
                         bound_full_row_rank=full_row, violation=bool(applicable and measured > bound)))
    slope = fit_loglog_slope(mus, [row["measured_error"] for row in rows], noise_floor(W))
    for row in rows:
        row["slope"] = slope
    m, n = W.shape
    meta = dict(seed=seed, m=m, n=n, k=X.shape[1], r=r, precision="double", strategy="sequential",
                bound_scale=bound_scale, gap=wx.gap_at(r))
    return StudyReport(StudyKind.CONVERGENCE, rows, meta)


# -- gap dependence ----------------------------------------------------------

def gap_study(template: synthetic.SpectrumTemplate, gap_grid, r: int, mu_fixed: float) -> StudyReport:
    """Error ``||W_0 - W_mu||_F`` at fixed ``mu`` as only ``sigma_r - sigma_(r+1)`` of WX varies."""
    gaps = [float(g) for g in gap_grid]
    if not gaps or any(not g > 0 for g in gaps):
        raise PreconditionError("gap_grid must contain positive values")
    if mu_fixed < 0:
        raise PreconditionError(f"mu must be non-negative, got {mu_fixed}")
    rows = []
    for gap in gaps:
        try:
            fx = template.build(r, gap)
        except ValueError as exc:
            raise PreconditionError(str(exc)) from exc
        W0 = solve_coala(ProblemInstance(fx.W, fx.X, r)).product()
        Wmu = solve_regularized(ProblemInstance(fx.W, fx.X, r, mu=mu_fixed)).product()
        rows.append(dict(gap=gap, sigma_r=fx.wx_sigmas[r - 1], sigma_r1=fx.wx_sigmas[r], mu=mu_fixed,
                         measured_error=float(np.linalg.norm(W0 - Wmu))))
    floor = noise_floor(template.build(r, gaps[0]).W)
    exponent = fit_loglog_slope(gaps, [row["measured_error"] for row in rows], floor)
    for row in rows:
        row["exponent"] = exponent
    meta = dict(seed=template.seed, m=template.m, n=template.n, k=template.k, r=r,
                precision="double", strategy="sequential", mu=mu_fixed,
                wx_sigmas=list(template.wx_sigmas), x_sigmas=list(template.x_sigmas))
    return StudyReport(StudyKind.GAP, rows, meta)


def halving_ratios(report: StudyReport) -> list[float]:
    """``error(g / 2) / error(g)`` for every grid pair related by an exact halving."""
    by_gap = {row["gap"]: row["measured_error"] for row in report.rows}
    return [by_gap[g / 2] / by_gap[g] for g in sorted(by_gap) if g / 2 in by_gap and by_gap[g] > 0]


# -- stability ---------------------------------------------------------------

STABILITY_METHODS = {
    "CoalaQR": solve_coala,
    "GramCholesky": solve_gram_cholesky,
    "GramSVD": solve_gram_svd,
}


def stability_study(W, X, r_grid, precision="single", seed=None) -> StudyReport:
    """Relative error of each method, run in ``precision``, against double-precision CoalaQR."""
    precision = Precision.parse(precision)
    W = as_array(W, "W").astype(np.float64)
    X = as_array(X, "X").astype(np.float64)
    ranks = [int(r) for r in r_grid]
    if not ranks:
        raise PreconditionError("r_grid is empty")
    for r in ranks:
        if not 1 <= r <= min(W.shape):
            raise PreconditionError(f"rank {r} outside [1, {min(W.shape)}]")
    rows = []
    for r in ranks:
        ref = solve_coala(ProblemInstance(W, X, r)).product()
        ref_norm = float(np.linalg.norm(ref))
        inst = ProblemInstance(W, X, r).astype(precision)
        for name, solver in STABILITY_METHODS.items():
            note = ""
            try:
                approx = solver(inst).product().astype(np.float64)
                err = float(np.linalg.norm(approx - ref)) / ref_norm
                if not math.isfinite(err):
                    err, note = float("inf"), "non-finite result"
            except NumericalFailure as exc:
                err, note = float("inf"), str(exc)
            rows.append(dict(method=name, rank=r, precision=precision.value, rel_error=err, note=note))
    m, n = W.shape
    meta = dict(seed=seed, m=m, n=n, k=X.shape[1], r=ranks, precision=precision.value, strategy="sequential",
                x_condition=float(np.linalg.cond(X)))
    return StudyReport(StudyKind.STABILITY, rows, meta)


def gram_loss_example(precision="single") -> dict:
    """Small singular value of the 2x2 precision-loss fixture, by Gram and by QR.

    Gram route: square roots of the eigenvalues of ``X X^T`` formed in the
    working precision. QR route: singular values of the R factor of ``X^T``.
    """
    dtype = Precision.parse(precision).dtype
    X = synthetic.gram_loss_activations(dtype)
    true_big, true_small = synthetic.gram_loss_sigmas(dtype)
    lam = np.linalg.eigvalsh(X @ X.T)
    gram_small = float(np.sqrt(max(float(lam[0]), 0.0)))
    qr_small = float(np.linalg.svd(qr_reduce(X).matrix, compute_uv=False)[-1])
    return dict(sigma2_true=true_small, sigma1_true=true_big, sigma2_gram=gram_small, sigma2_qr=qr_small,
                gram_error=abs(gram_small - true_small), qr_error=abs(qr_small - true_small))


# -- timing ------------------------------------------------------------------

TIMING_STRATEGIES = ("qr_reduce", "tsqr_sequential", "tsqr_tree", "gram_eigh")


def _gram_eigh(X, chunk_rows):
    n = X.shape[0]
    G = np.zeros((n, n))
    for start in range(0, X.shape[1], chunk_rows):
        block = X[:, start:start + chunk_rows]
        G += block @ block.T
    lam, P = np.linalg.eigh(G)
    return (P * np.sqrt(np.clip(lam, 0, None))) @ P.T


def timing_study(shapes, strategies=TIMING_STRATEGIES, repeats: int = 3, chunk_rows: int = 8192,
                 seed: int = 42, workers: int = 1) -> StudyReport:
    """Wall-clock medians for computing a square root of ``X X^T`` by several routes.

    Times are informational; ``peak_buffer_scalars`` for the sequential driver
    is the one figure meant to be checked.
    """
    if repeats < 3:
        raise PreconditionError(f"repeats must be >= 3, got {repeats}")
    for s in strategies:
        if s not in TIMING_STRATEGIES:
            raise PreconditionError(f"unknown timing strategy {s!r}")
    rows = []
    rng = synthetic.rng_for(seed)
    for n, k in shapes:
        X = rng.standard_normal((n, k))
        for strategy in strategies:
            times = []
            meter = BufferMeter() if strategy == "tsqr_sequential" else None
            for _ in range(repeats):
                t0 = time.perf_counter()
                if strategy == "qr_reduce":
                    if k < n:
                        break
                    qr_reduce(X)
                elif strategy == "tsqr_sequential":
                    tsqr_sequential(ArrayChunks.from_activations(X, chunk_rows), meter)
                elif strategy == "tsqr_tree":
                    tsqr_tree(ArrayChunks.from_activations(X, chunk_rows),
                              TsqrPlan("tree", chunk_rows, workers))
                else:
                    _gram_eigh(X, chunk_rows)
                times.append(time.perf_counter() - t0)
            if not times:
                continue
            rows.append(dict(strategy=strategy, n=n, k=k, chunk_rows=chunk_rows, repeats=len(times),
                             median_seconds=statistics.median(times), min_seconds=min(times),
                             max_seconds=max(times),
                             peak_buffer_scalars=meter.peak if meter else "",
                             buffer_bound_scalars=sequential_buffer_bound(n, chunk_rows) if meter else ""))
    meta = dict(seed=seed, shapes=[list(s) for s in shapes], repeats=repeats, chunk_rows=chunk_rows,
                precision="double", strategy=list(strategies), m=None, n=None, k=None, r=None)
    return StudyReport(StudyKind.TIMING, rows, meta)
