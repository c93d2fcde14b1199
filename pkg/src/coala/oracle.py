"""Slow, literal reference solutions used to certify the solvers in tests.

Nothing here imports from :mod:`coala.wlra`. The SVDs go through scipy's
``gesvd`` driver and the matrix roots through ``scipy.linalg.sqrtm``, so a
bug in the solver path cannot cancel against the same bug here.
"""

import numpy as np
import scipy.linalg as sla

from .matcore import PreconditionError, as_array

MIN_RCOND = 1e-10


def _svd(M):
    return sla.svd(M, full_matrices=False, lapack_driver="gesvd")


def _double(M, name):
    return as_array(M, name).astype(np.float64)


def oracle_best_rank_r(M, r):
    """Truncated SVD of M and the exact residual ``sqrt(sum_{i>r} sigma_i^2)``."""
    M = _double(M, "M")
    if not 1 <= r <= min(M.shape):
        raise PreconditionError(f"rank {r} out of range for a {M.shape[0]}x{M.shape[1]} matrix")
    U, s, Vt = _svd(M)
    approx = (U[:, :r] * s[:r]) @ Vt[:r]
    return approx, float(np.sqrt(np.sum(s[r:] ** 2)))


def _check_full_row_rank(X):
    n, k = X.shape
    s = sla.svdvals(X)
    if k < n or s[-1] <= MIN_RCOND * s[0]:
        raise PreconditionError("oracle requires X with full row rank and sigma_min/sigma_max > 1e-10")


def _spd_root(Q):
    root = sla.sqrtm(Q)
    return np.real(root)


def manton_solution(W, Q_right, Q_left, r):
    """Kronecker-weighted closed form.

    Weighting ``Q_right`` acts on the columns of ``W - W'`` and ``Q_left`` on
    its rows. With ``Q_left^{1/2} W Q_right^{1/2} = U S V^T``::

        W' = Q_left^{-1/2} U S_r V^T Q_right^{-1/2}
    """
    right_root = _spd_root(Q_right)
    left_root = _spd_root(Q_left)
    U, s, Vt = _svd(left_root @ W @ right_root)
    s_r = np.where(np.arange(s.size) < r, s, 0.0)
    return sla.inv(left_root) @ (U * s_r) @ Vt @ sla.inv(right_root)


def oracle_manton(W, X, r):
    W = _double(W, "W")
    X = _double(X, "X")
    _check_full_row_rank(X)
    return manton_solution(W, X @ X.T, np.eye(W.shape[0]), r)


def oracle_corda_closed_form(W, X, r):
    """``W' = U_r S_r V_r^T (X X^T)^{-1}`` where ``U S V^T`` is the SVD of ``W X X^T``."""
    W = _double(W, "W")
    X = _double(X, "X")
    _check_full_row_rank(X)
    G = X @ X.T
    U, s, Vt = _svd(W @ G)
    return (U[:, :r] * s[:r]) @ Vt[:r] @ sla.inv(G)


def brute_force_min_objective(W, X, r=1, samples=100_000, seed=0, around=None, spread=0.05):
    """Smallest ``||(W - a b^T) X||_F`` over random rank-r candidates.

    Half of the candidates are Gaussian, scaled to W; if ``around`` (a factor
    pair ``(A, B)``) is given, the rest are small perturbations of it.
    """
    W = _double(W, "W")
    X = _double(X, "X")
    rng = np.random.default_rng(seed)
    m, n = W.shape
    scale = np.sqrt(np.linalg.norm(W) / max(r, 1))
    n_far = samples if around is None else samples // 2
    a = rng.standard_normal((n_far, m, r)) * scale / np.sqrt(m)
    b = rng.standard_normal((n_far, r, n)) * scale / np.sqrt(n)
    if around is not None:
        A0, B0 = (np.asarray(f, dtype=np.float64) for f in around)
        n_near = samples - n_far
        a_near = A0 + spread * rng.standard_normal((n_near, m, r)) * np.abs(A0).max()
        b_near = B0 + spread * rng.standard_normal((n_near, r, n)) * np.abs(B0).max()
        a = np.concatenate([a, a_near])
        b = np.concatenate([b, b_near])
    WX = W @ X
    best = np.inf
    for start in range(0, samples, 10_000):
        aa, bb = a[start:start + 10_000], b[start:start + 10_000]
        resid = WX - aa @ (bb @ X)
        best = min(best, float(np.sqrt((resid ** 2).sum(axis=(1, 2))).min()))
    return best
