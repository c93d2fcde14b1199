"""Seeded synthetic instances with controlled spectra."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def rng_for(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def haar_orthogonal(rng, rows: int, cols: int) -> np.ndarray:
    """``rows x cols`` matrix with orthonormal columns, Haar-distributed."""
    rng = rng_for(rng)
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diagonal(r))


def with_spectrum(rng, rows: int, cols: int, sigmas) -> np.ndarray:
    """``U diag(sigmas) V^T`` with random orthonormal U, V; len(sigmas) <= min(rows, cols)."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    p = sigmas.size
    U = haar_orthogonal(rng, rows, p)
    V = haar_orthogonal(rng, cols, p)
    return (U * sigmas) @ V.T


def random_instance(seed, m: int, n: int, k: int):
    rng = rng_for(seed)
    return rng.standard_normal((m, n)), rng.standard_normal((n, k))


def ill_conditioned_activations(seed, n: int, k: int, condition: float) -> np.ndarray:
    """``n x k`` activations whose singular values run log-uniformly from 1 to 1/condition."""
    sigmas = np.logspace(0, -np.log10(condition), min(n, k))
    return with_spectrum(seed, n, k, sigmas)


def gram_loss_activations(dtype=np.float32) -> np.ndarray:
    """2x2 activations whose Gram is ``[[1, 1], [1, 1 + eps]]`` with eps = machine eps / 2.

    In the working precision ``1 + eps`` rounds to 1, so forming ``X X^T``
    erases the small singular value ``~sqrt(eps / 2)`` entirely.
    """
    dtype = np.dtype(dtype)
    eps = np.finfo(dtype).eps / 2
    M = np.array([[1.0, 1.0], [0.0, np.sqrt(eps)]], dtype=dtype)
    return np.ascontiguousarray(M.T)


def gram_loss_sigmas(dtype=np.float32) -> tuple[float, float]:
    """Exact singular values of :func:`gram_loss_activations` (closed form, double)."""
    eps = float(np.finfo(np.dtype(dtype)).eps) / 2
    # eigenvalues of [[1, 1], [1, 1 + eps]]; small root via the product to avoid cancellation
    trace, det = 2.0 + eps, eps
    big = (trace + np.sqrt(trace * trace - 4 * det)) / 2
    return float(np.sqrt(big)), float(np.sqrt(det / big))


@dataclass
class WeightedFixture:
    """W and X with ``W X = U diag(wx_sigmas) V^T`` known exactly."""

    W: np.ndarray
    X: np.ndarray
    wx_sigmas: np.ndarray
    x_sigmas: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def tail_energy(self, r: int) -> float:
        return float(np.sqrt(np.sum(self.wx_sigmas[r:] ** 2)))


def weighted_fixture(seed, m: int, n: int, k: int, wx_sigmas, x_sigmas) -> WeightedFixture:
    """Build W, X (full row rank, ``k >= n``) with prescribed spectra for X and W X.

    ``X = P diag(x) Q^T`` and ``W = U diag(wx) Z^T diag(1/x) P^T`` give
    ``W X = U diag(wx) (Q Z)^T`` without inverting anything ill-conditioned:
    only the prescribed ``x`` values are divided.
    """
    if k < n:
        raise ValueError("weighted_fixture needs k >= n")
    rng = rng_for(seed)
    wx_sigmas = np.asarray(wx_sigmas, dtype=np.float64)
    x_sigmas = np.asarray(x_sigmas, dtype=np.float64)
    if x_sigmas.size != n or wx_sigmas.size > min(m, n):
        raise ValueError("need n x-sigmas and at most min(m, n) wx-sigmas")
    P = haar_orthogonal(rng, n, n)
    Q = haar_orthogonal(rng, k, n)
    X = (P * x_sigmas) @ Q.T
    p = wx_sigmas.size
    U = haar_orthogonal(rng, m, p)
    Z = haar_orthogonal(rng, n, p)
    W = ((U * wx_sigmas) @ Z.T / x_sigmas) @ P.T
    full = np.zeros(min(m, k))
    full[:p] = wx_sigmas
    return WeightedFixture(W, X, full, x_sigmas, seed if isinstance(seed, int) else None)


@dataclass(frozen=True)
class SpectrumTemplate:
    """Fixed singular vectors and spectra for gap studies.

    ``wx_sigmas`` is the baseline spectrum of ``W X``; a study replaces entries
    ``r`` and ``r + 1`` (1-based) by ``center +- gap / 2`` where ``center`` is
    their baseline midpoint.
    """

    m: int = 10
    n: int = 8
    k: int = 24
    wx_sigmas: tuple = (10.0, 8.0, 6.0, 4.5, 3.5, 2.0, 1.0, 0.5)
    x_sigmas: tuple = (2.0, 1.7, 1.5, 1.2, 1.0, 0.8, 0.7, 0.5)
    seed: int = 42

    def center(self, r: int) -> float:
        return 0.5 * (self.wx_sigmas[r - 1] + self.wx_sigmas[r])

    def spectrum_for_gap(self, r: int, gap: float) -> np.ndarray:
        s = np.array(self.wx_sigmas, dtype=np.float64)
        if not 1 <= r < s.size:
            raise ValueError(f"rank {r} must leave a sigma_(r+1) in a spectrum of length {s.size}")
        if not gap > 0:
            raise ValueError(f"gap must be positive, got {gap}")
        c = self.center(r)
        hi, lo = c + gap / 2, c - gap / 2
        if (r >= 2 and hi >= s[r - 2]) or (r + 1 < s.size and lo <= s[r + 1]) or lo < 0:
            raise ValueError(
                f"gap {gap} moves sigma_r/sigma_(r+1) to {hi:.4g}/{lo:.4g}, colliding with fixed neighbours")
        s[r - 1], s[r] = hi, lo
        return s

    def build(self, r: int, gap: float) -> WeightedFixture:
        # same seed -> same singular vectors for every gap
        return weighted_fixture(self.seed, self.m, self.n, self.k,
                                self.spectrum_for_gap(r, gap), self.x_sigmas)
