"""Dense linear-algebra and sampling primitives shared by the whole package.

Thin, contract-checked wrappers around LAPACK (via numpy/scipy). The value
added over raw ``np.linalg`` calls is uniform error types, the jitter
escalation policy for nearly-singular SPD systems, and descending-order
conventions for spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NotPositiveDefinite(Exception):
    """Matrix is not positive definite, even after jitter escalation."""


class NoConvergence(Exception):
    """Iterative factorization failed to converge."""


SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SpdFactorization:
    """Lower-triangular Cholesky factor of an SPD matrix.

    ``lower @ lower.T`` reproduces the input plus ``jitter * I`` (the jitter
    actually applied, zero for well-conditioned input).
    """

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b using the stored factor."""
        return scipy.linalg.cho_solve((self.lower, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        """Dense A^-1 (needed for trace terms in likelihood gradients)."""
        return self.solve(np.eye(self.n))

    def log_det(self) -> float:
        """log |A| from the factor diagonal."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def cholesky(a: np.ndarray) -> SpdFactorization:
    """Cholesky-factorize a symmetric positive-definite matrix.

    Tries the bare factorization first; on failure adds a diagonal jitter of
    ``1e-10 * trace(a) / n`` escalated by factors of 10, at most 3 attempts,
    before raising :class:`NotPositiveDefinite`.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = max(abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")

    jitter = 0.0
    base = 1e-10 * max(np.trace(a), 0.0) / n
    if base == 0.0:
        base = 1e-12
    for attempt in range(4):
        try:
            lower = np.linalg.cholesky(a if jitter == 0.0 else a + jitter * np.eye(n))
            return SpdFactorization(lower=lower, jitter=jitter)
        except np.linalg.LinAlgError:
            jitter = base * (10.0 ** attempt)
    raise NotPositiveDefinite(
        f"matrix of size {n} not positive definite after jitter {jitter:.3e}"
    )


def svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD, A = U diag(s) V^T with s sorted descending.

    Returns (U, s, V); columns of U and V are orthonormal.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return u, s, vt.T


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns,
    orthonormal, ordered to match the eigenvalues.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > SYMMETRY_TOL * scale * 10:
        raise ValueError("matrix is not symmetric within tolerance")
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.arange(vals.size)[::-1]  # eigh returns ascending; stable flip
    return vals[order], vecs[:, order]


def standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    """n i.i.d. standard-normal draws from the given generator."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return rng.standard_normal(n)
