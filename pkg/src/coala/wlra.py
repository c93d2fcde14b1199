"""Weighted low-rank approximation solvers.

The inversion-free solvers all reduce to one step: take the leading ``r`` left
singular vectors ``U_r`` of some ``W S`` with ``S S^T`` equal to the weighting,
and return ``A = U_r``, ``B = U_r^T W``. They differ only in which ``S`` they
build, and none forms ``X X^T`` or inverts anything.

The Gram-based baselines (Cholesky, symmetric square root) and the
eigendecomposition reference are kept deliberately literal so their numerical
behaviour can be compared against the QR route.
"""

from __future__ import annotations

import enum
import time

import numpy as np
from scipy.linalg import get_lapack_funcs

from .matcore import (
    DEFAULT_TOLERANCES,
    CholeskyBreakdown,
    DimensionError,
    FactorPair,
    NumericalFailure,
    Precision,
    PreconditionError,
    ProblemInstance,
    RFactor,
    SolveStatus,
    Tolerances,
    as_array,
    check_rank,
)
from .tsqr import augment_with_regularizer, r_of


class SolverMethod(str, enum.Enum):
    COALA_QR = "CoalaQR"
    COALA_DIRECT = "CoalaDirect"
    REFERENCE = "Reference"
    GRAM_CHOLESKY = "GramCholesky"
    GRAM_SVD = "GramSVD"
    ALPHA = "Alpha"


PATH_QR = "QR"
PATH_DIRECT = "direct"


def _leading_left_factors(M: np.ndarray, W: np.ndarray, r: int, method: str, path: str,
                          tolerances: Tolerances, started: float) -> FactorPair:
    m = W.shape[0]
    precision = Precision.of(W)
    if not np.any(M):
        A = np.eye(m, r, dtype=W.dtype)
        B = np.zeros((r, W.shape[1]), dtype=W.dtype)
        status = SolveStatus(method, path, degenerate=True, gap_degenerate=True,
                             elapsed_seconds=time.perf_counter() - started)
        return FactorPair(A, B, status)
    # economy SVD loses columns when M has fewer than r of them
    U, s, _ = np.linalg.svd(M, full_matrices=min(M.shape) < r)
    A = np.ascontiguousarray(U[:, :r])
    B = A.T @ W
    s_r = s[r - 1] if r <= s.size else 0.0
    s_next = s[r] if r < s.size else 0.0
    gap_degenerate = bool(s_r - s_next <= tolerances.gap_rtol(precision) * s[0])
    status = SolveStatus(method, path, gap_degenerate=gap_degenerate,
                         elapsed_seconds=time.perf_counter() - started)
    return FactorPair(A, B, status)


def solve_projection(W, X, r: int, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """``W' = U_r U_r^T W`` with ``U_r`` taken straight from the SVD of ``W X``."""
    started = time.perf_counter()
    inst = ProblemInstance(W, X, r)
    return _leading_left_factors(inst.W @ inst.X, inst.W, r, SolverMethod.COALA_DIRECT.value,
                                 PATH_DIRECT, tolerances, started)


def qr_reduce(X) -> RFactor:
    """R factor of ``X^T`` (``n x n``, upper triangular, non-negative diagonal).

    Requires at least as many samples as features; with fewer, use the direct
    path or augment first.
    """
    X = as_array(X, "X")
    n, k = X.shape
    if k < n:
        raise DimensionError(
            f"X is {n}x{k} with k < n; QR reduction needs k >= n. "
            f"Use solve_projection (direct SVD of WX) or augment X with a regularizer first")
    return RFactor(r_of(np.array(X.T, order="F", copy=True), n, overwrite=True), total_rows=k)


def _short_r(X: np.ndarray) -> RFactor:
    # k < n: QR of the k x n matrix X^T padded with zero rows
    n, k = X.shape
    return RFactor(r_of(np.array(X.T, order="F", copy=True), n, overwrite=True), total_rows=k, short_data=True)


def solve_from_r(W, R, r: int, tolerances: Tolerances = DEFAULT_TOLERANCES,
                 method: str = SolverMethod.COALA_QR.value) -> FactorPair:
    """Leading left singular vectors of ``W R^T`` for any R with ``R^T R = X X^T``."""
    started = time.perf_counter()
    W = as_array(W, "W")
    R = R.matrix if isinstance(R, RFactor) else as_array(R, "R")
    if R.shape != (W.shape[1], W.shape[1]):
        raise DimensionError(f"R is {R.shape[0]}x{R.shape[1]} but W has {W.shape[1]} columns")
    check_rank(r, W.shape)
    R = R.astype(W.dtype, copy=False)
    return _leading_left_factors(W @ R.T, W, r, method, PATH_QR, tolerances, started)


def solve_coala(instance: ProblemInstance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """QR-reduce the activations, then take the top-r left singular vectors of ``W R^T``.

    ``instance.mu`` is ignored here. With fewer samples than features the QR
    step is skipped and ``W X`` is decomposed directly; ``status.path_taken``
    says which route ran.
    """
    if instance.k < instance.n:
        started = time.perf_counter()
        return _leading_left_factors(instance.W @ instance.X, instance.W, instance.r,
                                     SolverMethod.COALA_DIRECT.value, PATH_DIRECT, tolerances, started)
    return solve_from_r(instance.W, qr_reduce(instance.X), instance.r, tolerances)


def solve_regularized(instance: ProblemInstance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """Minimize ``||(W - W')X||_F^2 + mu ||W' - W||_F^2`` over rank-r ``W'``.

    The augmentation by ``sqrt(mu) I`` is applied to the R factor rather than
    to X, which keeps the work at ``n x n`` whatever the sample count.
    """
    if instance.mu == 0:
        return solve_coala(instance, tolerances)
    R = qr_reduce(instance.X) if instance.k >= instance.n else _short_r(instance.X)
    return solve_from_r(instance.W, augment_with_regularizer(R, instance.mu), instance.r, tolerances)


def solve_alpha(instance: ProblemInstance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """Rank-r minimizer of ``tr((W - W')(X X^T)^alpha (W - W')^T)``.

    ``(X X^T)^(alpha/2) = V diag(s^alpha) V^T`` comes from the SVD of the R
    factor (or of X itself when ``k < n``). The trailing ``V^T`` does not change
    left singular vectors, so only ``W V diag(s^alpha)`` is decomposed.
    """
    started = time.perf_counter()
    W, X, alpha = instance.W, instance.X, instance.alpha
    if alpha == 0:
        M = W
        path = PATH_DIRECT
    elif instance.k >= instance.n:
        R = qr_reduce(X).matrix
        _, s, Vt = np.linalg.svd(R)
        M = (W @ Vt.T) * s ** alpha
        path = PATH_QR
    else:
        U, s, _ = np.linalg.svd(X, full_matrices=True)
        s_full = np.zeros(instance.n, dtype=s.dtype)
        s_full[:s.size] = s
        M = (W @ U) * s_full ** alpha
        path = PATH_DIRECT
    return _leading_left_factors(M, W, instance.r, SolverMethod.ALPHA.value, path, tolerances, started)


def _require_full_row_rank(X: np.ndarray, min_rcond: float, who: str) -> None:
    n, k = X.shape
    if k < n:
        raise PreconditionError(f"{who} needs X with full row rank, but X is {n}x{k}; use solve_coala")
    s = np.linalg.svd(X.astype(np.float64), compute_uv=False)
    if s[0] == 0 or s[-1] <= min_rcond * s[0]:
        rcond = s[-1] / s[0] if s[0] else 0.0
        raise PreconditionError(
            f"{who} needs well-conditioned full-row-rank X (sigma_min/sigma_max = {rcond:.2e} "
            f"<= {min_rcond:.0e}); use solve_coala, which has no rank requirement")


def solve_reference(instance: ProblemInstance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """Closed form ``W' = U Sigma_r V^T S^{-1}`` with ``S = (X X^T)^{1/2}``, always in double.

    A cross-check for well-conditioned inputs only.
    """
    started = time.perf_counter()
    W = instance.W.astype(np.float64)
    X = instance.X.astype(np.float64)
    r = instance.r
    _require_full_row_rank(X, tolerances.reference_min_rcond, "solve_reference")
    lam, P = np.linalg.eigh(X @ X.T)
    root = np.sqrt(lam)
    S = (P * root) @ P.T
    S_inv = (P / root) @ P.T
    U, s, Vt = np.linalg.svd(W @ S)
    A = np.ascontiguousarray(U[:, :r])
    B = (s[:r, None] * Vt[:r]) @ S_inv
    gap = (s[r - 1] - (s[r] if r < s.size else 0.0)) <= tolerances.gap_rtol_double * s[0]
    status = SolveStatus(SolverMethod.REFERENCE.value, "eig", gap_degenerate=bool(gap),
                         elapsed_seconds=time.perf_counter() - started)
    return FactorPair(A, B, status)


def _finite_or_fail(B: np.ndarray, method: str) -> None:
    if not np.all(np.isfinite(B)):
        raise NumericalFailure(f"{method}: inverse of the Gram factor produced non-finite entries")


def solve_gram_cholesky(instance: ProblemInstance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """Cholesky baseline: ``S = chol(X X^T)``, SVD of ``W S``, ``B = Sigma_r V_r^T S^{-1}``.

    Runs in the instance's precision. ``S`` is the lower factor so that
    ``S S^T = X X^T``.
    """
    started = time.perf_counter()
    W, X, r = instance.W, instance.X, instance.r
    G = X @ X.T
    potrf, = get_lapack_funcs(("potrf",), (G,))
    L, info = potrf(G, lower=1, clean=1)
    if info > 0:
        raise CholeskyBreakdown(int(info), f"{instance.precision.value} precision Gram matrix")
    if info < 0:
        raise NumericalFailure(f"potrf argument {-info} invalid")
    with np.errstate(all="ignore"):
        U, s, Vt = np.linalg.svd(W @ L)
        B = (s[:r, None] * Vt[:r]) @ np.linalg.inv(L)
    _finite_or_fail(B, SolverMethod.GRAM_CHOLESKY.value)
    status = SolveStatus(SolverMethod.GRAM_CHOLESKY.value, "gram",
                         elapsed_seconds=time.perf_counter() - started)
    return FactorPair(np.ascontiguousarray(U[:, :r]), B, status)


def solve_gram_svd(instance: ProblemInstance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """Symmetric-root baseline: ``X X^T = U_s S U_s^T`` by SVD, then
    ``B = Sigma_r V_r^T S^{-1/2} U_s^T``."""
    started = time.perf_counter()
    W, X, r = instance.W, instance.X, instance.r
    G = X @ X.T
    Us, S, _ = np.linalg.svd(G)
    with np.errstate(all="ignore"):
        M = (W @ Us) * np.sqrt(S)
        U, s, Vt = np.linalg.svd(M)
        inv_root = 1 / np.sqrt(S)
        B = ((s[:r, None] * Vt[:r]) * inv_root) @ Us.T
    _finite_or_fail(B, SolverMethod.GRAM_SVD.value)
    status = SolveStatus(SolverMethod.GRAM_SVD.value, "gram",
                         elapsed_seconds=time.perf_counter() - started)
    return FactorPair(np.ascontiguousarray(U[:, :r]), B, status)


_DISPATCH = {
    SolverMethod.COALA_QR: solve_coala,
    SolverMethod.COALA_DIRECT: lambda inst, tol=DEFAULT_TOLERANCES: solve_projection(inst.W, inst.X, inst.r, tol),
    SolverMethod.REFERENCE: solve_reference,
    SolverMethod.GRAM_CHOLESKY: solve_gram_cholesky,
    SolverMethod.GRAM_SVD: solve_gram_svd,
    SolverMethod.ALPHA: solve_alpha,
}


def solve(instance: ProblemInstance, method=SolverMethod.COALA_QR,
          tolerances: Tolerances = DEFAULT_TOLERANCES) -> FactorPair:
    """Dispatch by method; ``CoalaQR`` honours ``instance.mu``."""
    method = SolverMethod(method)
    if method is SolverMethod.COALA_QR and instance.mu > 0:
        return solve_regularized(instance, tolerances)
    return _DISPATCH[method](instance, tolerances)
