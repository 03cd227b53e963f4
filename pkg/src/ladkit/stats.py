"""Background statistics: band mean, covariance, and optional precision.

The mean and covariance are the maximum-likelihood estimates over all N
pixels (divisor N, not N-1); anomalies are assumed small enough not to
perturb them. The precision matrix is obtained through a Cholesky
factorization of the (optionally ridge-regularized) covariance rather than
a general inverse, and ships with a LAPACK reciprocal-condition estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, get_lapack_funcs

from .cube import ImageCube, _freeze
from .errors import SingularCovarianceError, ValidationError
from .instrumentation import count_inversion

# |C @ Q - I| max-norm bound the precision must satisfy after regularization
PRECISION_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class BackgroundStats:
    """Per-band mean and covariance of the background model.

    Attributes:
        mean: Length-m band mean.
        covariance: m x m biased sample covariance (divisor N).
        precision: Optional inverse of the (regularized) covariance.
        precision_rcond: Reciprocal condition estimate from the
            factorization used to build ``precision``; None when absent.
        ridge: Diagonal regularization that was added before inverting.
    """

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray | None = None
    precision_rcond: float | None = None
    ridge: float = 0.0

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        cov = np.ascontiguousarray(self.covariance, dtype=np.float64)
        m = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (m, m):
            raise ValidationError(
                f"mean of length {mean.shape} incompatible with covariance {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("statistics contain non-finite values")
        scale = float(np.abs(cov).max())
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-10 * (1.0 + scale)):
            raise ValidationError("covariance is not symmetric")
        object.__setattr__(self, "mean", _freeze(mean))
        object.__setattr__(self, "covariance", _freeze(cov))
        if self.precision is not None:
            prec = np.ascontiguousarray(self.precision, dtype=np.float64)
            if prec.shape != (m, m):
                raise ValidationError(f"precision shape {prec.shape} != ({m}, {m})")
            object.__setattr__(self, "precision", _freeze(prec))

    @property
    def n_bands(self) -> int:
        return self.mean.shape[0]

    def require_precision(self) -> np.ndarray:
        if self.precision is None:
            raise ValidationError(
                "these statistics were estimated without a precision matrix; "
                "re-estimate with compute_precision=True"
            )
        return self.precision


def _column_sums(pixels: np.ndarray) -> np.ndarray:
    # Sum along the contiguous axis so numpy applies pairwise summation,
    # keeping the estimate stable under pixel reordering.
    return np.ascontiguousarray(pixels.T).sum(axis=1)


def invert_spd(matrix: np.ndarray, ridge: float = 0.0) -> tuple[np.ndarray, float]:
    """Invert a symmetric PSD matrix via Cholesky.

    Returns ``(inverse, rcond)`` where rcond is LAPACK's reciprocal
    condition estimate of the regularized matrix. Raises
    :class:`SingularCovarianceError` when the matrix is not numerically
    positive definite or the inverse fails the residual check.
    """
    if ridge < 0:
        raise ValidationError(f"ridge must be nonnegative, got {ridge}")
    m = matrix.shape[0]
    a = matrix + ridge * np.eye(m) if ridge > 0 else matrix
    count_inversion()
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise _singularity_error(matrix, ridge) from None
    inverse = cho_solve(factor, np.eye(m), check_finite=False)
    inverse = (inverse + inverse.T) / 2.0
    residual = float(np.abs(a @ inverse - np.eye(m)).max())
    if residual > PRECISION_RESIDUAL_TOL:
        raise _singularity_error(matrix, ridge, residual=residual)
    (pocon,) = get_lapack_funcs(("pocon",), (a,))
    anorm = float(np.abs(a).sum(axis=0).max())
    rcond, info = pocon(factor[0], anorm, uplo="L")
    if info != 0:
        rcond = 0.0
    return inverse, float(rcond)


def _singularity_error(matrix: np.ndarray, ridge: float, residual: float | None = None):
    eigvals = np.linalg.eigvalsh(matrix)
    tol = 1e-12 * max(float(eigvals[-1]), 1e-300)
    rank = int((eigvals > tol).sum())
    detail = f"residual {residual:.3e} exceeds {PRECISION_RESIDUAL_TOL:.0e}" if residual else "factorization failed"
    return SingularCovarianceError(
        f"covariance of order {matrix.shape[0]} has numerical rank {rank}; {detail}. "
        "Pass a positive ridge to regularize.",
        order=matrix.shape[0],
        rank=rank,
        ridge=ridge,
    )


def estimate_background_stats(
    cube: ImageCube,
    compute_precision: bool = False,
    ridge: float = 0.0,
) -> BackgroundStats:
    """Estimate mean and covariance over every pixel of the cube.

    Args:
        cube: Input image; needs at least two pixels.
        compute_precision: Also invert the covariance (counted as one
            inversion by the instrumentation module).
        ridge: Nonnegative diagonal regularization applied only to the
            inversion, never to the stored covariance.

    Returns:
        BackgroundStats with the biased (divisor N) covariance.
    """
    pixels = cube.pixels
    n = pixels.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 pixels to estimate statistics, got {n}")
    mean = _column_sums(pixels) / n
    centered = pixels - mean
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2.0
    if not compute_precision:
        return BackgroundStats(mean=mean, covariance=cov, ridge=ridge)
    precision, rcond = invert_spd(cov, ridge=ridge)
    return BackgroundStats(
        mean=mean, covariance=cov, precision=precision, precision_rcond=rcond, ridge=ridge
    )


def center_pixel(x: np.ndarray, stats: BackgroundStats) -> np.ndarray:
    """Subtract the background mean from one pixel vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != stats.mean.shape:
        raise ValidationError(
            f"pixel length {x.shape} does not match band count {stats.mean.shape[0]}"
        )
    return x - stats.mean


def center_cube(cube: ImageCube, stats: BackgroundStats) -> np.ndarray:
    """Return the (N, m) matrix of mean-subtracted pixel vectors."""
    if cube.n_bands != stats.n_bands:
        raise ValidationError(
            f"cube has {cube.n_bands} bands but statistics expect {stats.n_bands}"
        )
    return cube.pixels - stats.mean
