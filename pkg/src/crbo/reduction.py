"""Constraint-output dimensionality reduction.

Rows of the constraint matrix (one row per evaluated design, one column per
constraint) are projected from G dimensions down to g, either linearly via a
truncated SVD basis or nonlinearly via kernel PCA. An affine inverse map
regressed on the training data recovers full-space constraint estimates from
reduced coordinates so feasibility can still be tested componentwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import numkit
from .numkit import NotPositiveDefinite

__all__ = [
    "ConstantConstraints",
    "InsufficientPositiveEigenvalues",
    "ZeroNorm",
    "LinearSubspace",
    "NonlinearSubspace",
    "InverseMap",
    "KERNEL_KINDS",
    "fit_pca",
    "project_linear",
    "reconstruct_linear",
    "reconstruction_error",
    "fit_kpca",
    "project_kpca",
    "fit_inverse_map",
    "apply_inverse_map",
    "spectrum_rows",
]

KERNEL_KINDS = ("linear", "exponential", "squared-exponential")

# Positive-eigenvalue cutoff for the kPCA eigenproblem.
EIG_CUTOFF = 1e-12


class ConstantConstraints(Exception):
    """All constraint rows identical: no variance to reduce."""


class InsufficientPositiveEigenvalues(Exception):
    """Kernel matrix has fewer positive eigenvalues than requested components."""


class ZeroNorm(Exception):
    """Relative reconstruction error undefined for an all-zero matrix."""


@dataclass(frozen=True)
class LinearSubspace:
    """Truncated principal-direction basis of the constraint output space."""

    column_mean: np.ndarray       # (G,)
    basis: np.ndarray             # (G, g), orthonormal columns
    singular_values: np.ndarray   # full descending spectrum of the centered matrix

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class NonlinearSubspace:
    """Kernel-PCA subspace fitted on centered constraint rows."""

    column_mean: np.ndarray        # (G,)
    train_points: np.ndarray       # (N, G), centered rows
    kernel_kind: str
    kernel_scale: float            # length parameter of the kernel (unused for linear)
    coefficients: np.ndarray       # (N, g), scaled so lambda_q * |a_q|^2 = 1
    eigenvalues: np.ndarray        # (g,), positive, descending
    row_means: np.ndarray          # (N,), row means of the uncentered kernel matrix
    grand_mean: float              # grand mean of the uncentered kernel matrix
    train_projections: np.ndarray  # (N, g)

    @property
    def n_components(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class InverseMap:
    """Affine map from reduced coordinates back to the full constraint space."""

    weights: np.ndarray   # (G, g)
    offset: np.ndarray    # (G,)
    ridge_penalty: float


def _as_rows(c: np.ndarray, width: int, what: str) -> tuple[np.ndarray, bool]:
    c = np.asarray(c, dtype=float)
    single = c.ndim == 1
    rows = np.atleast_2d(c)
    if rows.shape[1] != width:
        raise ValueError(f"{what}: expected width {width}, got {rows.shape[1]}")
    return rows, single


def fit_pca(
    c: np.ndarray,
    g: int | None = None,
    eigen_threshold: float | None = None,
) -> LinearSubspace:
    """Column-center the constraint matrix and truncate its SVD.

    Exactly one of ``g`` (component count) or ``eigen_threshold`` (keep
    components with sigma_i / sigma_1 above the threshold) must be given.
    The count is clamped to the numerical rank; a matrix of identical rows
    raises :class:`ConstantConstraints`.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    if (g is None) == (eigen_threshold is None):
        raise ValueError("give exactly one of g or eigen_threshold")
    if eigen_threshold is not None and eigen_threshold <= 0:
        raise ValueError("eigen_threshold must be positive")

    mean = c.mean(axis=0)
    centered = c - mean
    _, s, v = numkit.svd(centered)

    if s.size == 0 or s[0] <= 0.0:
        raise ConstantConstraints("all constraint rows identical after centering")
    rank = int(np.sum(s > s[0] * max(c.shape) * np.finfo(float).eps))
    if rank == 0:
        raise ConstantConstraints("centered constraint matrix has rank zero")

    if eigen_threshold is not None:
        keep = int(np.sum(s / s[0] > eigen_threshold))
    else:
        keep = int(g)
        if keep < 1:
            raise ValueError("g must be at least 1")
    keep = max(1, min(keep, rank))
    return LinearSubspace(column_mean=mean, basis=v[:, :keep], singular_values=s)


def project_linear(s: LinearSubspace, c: np.ndarray) -> np.ndarray:
    """Project full-space constraint values onto the reduced basis."""
    rows, single = _as_rows(c, s.column_mean.size, "project_linear")
    z = (rows - s.column_mean) @ s.basis
    return z[0] if single else z


def reconstruct_linear(s: LinearSubspace, z: np.ndarray) -> np.ndarray:
    """Map reduced coordinates back to the full constraint space."""
    rows, single = _as_rows(z, s.n_components, "reconstruct_linear")
    c = rows @ s.basis.T + s.column_mean
    return c[0] if single else c


def reconstruction_error(s: LinearSubspace, c_star: np.ndarray) -> float:
    """Relative squared Frobenius error of project-then-reconstruct."""
    rows, _ = _as_rows(c_star, s.column_mean.size, "reconstruction_error")
    denom = float(np.sum(rows * rows))
    if denom == 0.0:
        raise ZeroNorm("reference matrix has zero Frobenius norm")
    recon = reconstruct_linear(s, project_linear(s, rows))
    resid = rows - recon
    return float(np.sum(resid * resid)) / denom


def _kernel_values(kind: str, scale: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return a @ b.T
    dist = cdist(a, b)
    if kind == "exponential":
        return np.exp(-dist / scale)
    if kind == "squared-exponential":
        return np.exp(-0.5 * (dist / scale) ** 2)
    raise ValueError(f"unknown kernel kind {kind!r}")


def _median_distance(points: np.ndarray) -> float:
    d = pdist(points)
    if d.size == 0:
        return 1.0
    med = float(np.median(d))
    if med > 0:
        return med
    positive = d[d > 0]
    return float(np.mean(positive)) if positive.size else 1.0


def fit_kpca(c: np.ndarray, kernel_kind: str, g: int) -> NonlinearSubspace:
    """Kernel PCA on centered constraint rows.

    The N x N kernel matrix is double-centered and its top ``g`` positive
    eigenpairs kept; coefficient vectors are scaled so the feature-space
    directions have unit norm. The exponential and squared-exponential
    kernels use the median pairwise distance as length parameter.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    if kernel_kind not in KERNEL_KINDS:
        raise ValueError(f"kernel_kind must be one of {KERNEL_KINDS}")
    if g < 1:
        raise ValueError("g must be at least 1")

    mean = c.mean(axis=0)
    points = c - mean
    scale = 1.0 if kernel_kind == "linear" else _median_distance(points)

    n = points.shape[0]
    k = _kernel_values(kernel_kind, scale, points, points)
    row_means = k.mean(axis=1)
    grand = float(k.mean())
    kc = k - row_means[None, :] - row_means[:, None] + grand

    vals, vecs = numkit.sym_eig(kc)
    positive = vals > EIG_CUTOFF
    if int(np.sum(positive)) < g:
        raise InsufficientPositiveEigenvalues(
            f"requested {g} components, only {int(np.sum(positive))} positive eigenvalues"
        )
    vals = vals[:g]
    vecs = vecs[:, :g]
    coeff = vecs / np.sqrt(vals)[None, :]
    return NonlinearSubspace(
        column_mean=mean,
        train_points=points,
        kernel_kind=kernel_kind,
        kernel_scale=scale,
        coefficients=coeff,
        eigenvalues=vals,
        row_means=row_means,
        grand_mean=grand,
        train_projections=coeff * vals[None, :],
    )


def project_kpca(s: NonlinearSubspace, c: np.ndarray) -> np.ndarray:
    """Project constraint values through the kernel map onto the components."""
    rows, single = _as_rows(c, s.column_mean.size, "project_kpca")
    k = _kernel_values(s.kernel_kind, s.kernel_scale, rows - s.column_mean, s.train_points)
    kc = k - s.row_means[None, :] - k.mean(axis=1, keepdims=True) + s.grand_mean
    z = kc @ s.coefficients
    return z[0] if single else z


def fit_inverse_map(
    projections: np.ndarray, targets: np.ndarray, ridge_penalty: float = 0.0
) -> InverseMap:
    """Least-squares affine map from reduced coordinates to full constraints.

    Minimizes ||targets - (z W^T + b)||_F^2 + ridge ||W||_F^2 in closed form;
    the intercept is not penalized. A singular Gram matrix with zero ridge
    raises :class:`NotPositiveDefinite`.
    """
    z = np.atleast_2d(np.asarray(projections, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if z.shape[0] != t.shape[0]:
        raise ValueError("projection/target row counts differ")
    if ridge_penalty < 0:
        raise ValueError("ridge_penalty must be non-negative")

    n, g = z.shape
    a = np.hstack([z, np.ones((n, 1))])
    gram = a.T @ a
    if ridge_penalty > 0:
        gram = gram + ridge_penalty * np.diag([1.0] * g + [0.0])
    try:
        lower = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "singular Gram matrix; increase ridge_penalty"
        ) from exc
    import scipy.linalg

    coeff = scipy.linalg.cho_solve((lower, True), a.T @ t, check_finite=False)
    return InverseMap(
        weights=coeff[:g].T.copy(),
        offset=coeff[g].copy(),
        ridge_penalty=float(ridge_penalty),
    )


def apply_inverse_map(m: InverseMap, z: np.ndarray) -> np.ndarray:
    """Reconstruct full-space constraint estimates from reduced coordinates."""
    rows, single = _as_rows(z, m.weights.shape[1], "apply_inverse_map")
    c = rows @ m.weights.T + m.offset
    return c[0] if single else c


def spectrum_rows(s: LinearSubspace) -> list[tuple[int, float, float, float]]:
    """(index, sigma, sigma/sigma_1, cumulative energy) rows for reporting."""
    sv = s.singular_values
    total = float(np.sum(sv**2))
    rows = []
    running = 0.0
    for i, sigma in enumerate(sv, start=1):
        running += float(sigma**2)
        rows.append((i, float(sigma), float(sigma / sv[0]), running / total if total > 0 else 0.0))
    return rows
