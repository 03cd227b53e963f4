"""Background graph models: weights, Laplacians, and their eigensystems.

Bands (and, for the spatially-aware variant, neighboring pixels) become
graph nodes; edge weights encode inter-band similarity. Two weight rules
are provided: partial correlation read off the precision matrix, and an
inversion-free Cauchy similarity built from the band means alone. The
Laplacian of the resulting graph plays the role the inverse covariance
plays in Mahalanobis scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import _freeze
from .errors import ModelConstructionError, NumericError, ParameterError, ValidationError
from .instrumentation import count_eigendecomposition
from .stats import BackgroundStats

SPECTRAL = "spectral"
SPATIAL_SPECTRAL = "spatial-spectral"

COMBINATORIAL = "combinatorial"
SYMMETRIC_NORMALIZED = "symmetric_normalized"

# Spatial connectivity -> number of stacked pixel blocks (center + neighbors)
_BLOCKS = {4: 5, 6: 7}


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric nonnegative adjacency with zero diagonal.

    Attributes:
        matrix: The n x n weight matrix.
        topology: ``"spectral"`` (n = bands) or ``"spatial-spectral"``
            (n = blocks * bands).
        bands: Bands per pixel block.
        connectivity: None for spectral-only graphs, else 4 (2-D) or 6 (3-D).
        clamped: How many negative raw weights were clamped to zero.
    """

    matrix: np.ndarray
    topology: str = SPECTRAL
    bands: int = 0
    connectivity: int | None = None
    clamped: int = 0

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError(f"weight matrix must be square, got {w.shape}")
        if not np.array_equal(w, w.T):
            raise ValidationError("weight matrix is not exactly symmetric")
        if np.any(np.diagonal(w) != 0.0):
            raise ValidationError("weight matrix has nonzero diagonal entries")
        if not np.all(np.isfinite(w)) or w.min() < 0.0:
            raise ValidationError("weights must be finite and nonnegative")
        if self.topology not in (SPECTRAL, SPATIAL_SPECTRAL):
            raise ValidationError(f"unknown topology {self.topology!r}")
        bands = self.bands or w.shape[0]
        if self.topology == SPECTRAL:
            if bands != w.shape[0] or self.connectivity is not None:
                raise ValidationError("spectral topology requires order == bands and no connectivity")
        else:
            blocks = _BLOCKS.get(self.connectivity or 0)
            if blocks is None or w.shape[0] != blocks * bands:
                raise ValidationError(
                    f"spatial-spectral order {w.shape[0]} inconsistent with "
                    f"{bands} bands and connectivity {self.connectivity}"
                )
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "matrix", _freeze(w))

    @property
    def order(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class GraphModel:
    """A weight matrix with its degree vector, Laplacian, and optional eigensystem.

    ``mean`` is the band mean the signals are centered against before being
    scored with this model; it has length ``weights.bands`` even for
    spatial-spectral graphs (every block is centered with the same mean).
    """

    weights: WeightMatrix
    degrees: np.ndarray
    laplacian: np.ndarray
    variant: str
    mean: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.variant not in (COMBINATORIAL, SYMMETRIC_NORMALIZED):
            raise ValidationError(f"unknown Laplacian variant {self.variant!r}")
        n = self.weights.order
        deg = np.ascontiguousarray(self.degrees, dtype=np.float64)
        lap = np.ascontiguousarray(self.laplacian, dtype=np.float64)
        if deg.shape != (n,) or lap.shape != (n, n):
            raise ValidationError("degree/Laplacian shapes do not match the weight matrix")
        object.__setattr__(self, "degrees", _freeze(deg))
        object.__setattr__(self, "laplacian", _freeze(lap))
        if self.mean is not None:
            mean = np.ascontiguousarray(self.mean, dtype=np.float64)
            if mean.shape != (self.weights.bands,):
                raise ValidationError(
                    f"model mean has length {mean.shape[0]}, expected {self.weights.bands}"
                )
            object.__setattr__(self, "mean", _freeze(mean))
        if (self.eigenvalues is None) != (self.eigenvectors is None):
            raise ValidationError("eigenvalues and eigenvectors must be provided together")
        if self.eigenvalues is not None:
            vals = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
            vecs = np.ascontiguousarray(self.eigenvectors, dtype=np.float64)
            if vals.shape != (n,) or vecs.shape != (n, n):
                raise ValidationError("eigensystem shapes do not match the Laplacian")
            object.__setattr__(self, "eigenvalues", _freeze(vals))
            object.__setattr__(self, "eigenvectors", _freeze(vecs))

    @property
    def order(self) -> int:
        return self.weights.order

    def require_mean(self) -> np.ndarray:
        if self.mean is None:
            raise ValidationError("graph model carries no centering mean")
        return self.mean

    def require_eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        if self.eigenvalues is None:
            raise ValidationError(
                "graph model has no eigensystem; call eigendecompose(model) first"
            )
        return self.eigenvalues, self.eigenvectors


def partial_correlation_weights(stats: BackgroundStats) -> WeightMatrix:
    """Fully-connected spectral weights from partial correlations.

    The weight between bands a and b is ``-Q[a,b] / sqrt(Q[a,a] * Q[b,b])``
    with the precision matrix Q; negative values (anti-correlated bands)
    are clamped to zero to keep the Laplacian positive semi-definite. The
    number of clamped entries is reported on the result.
    """
    q = stats.require_precision()
    q = (q + q.T) / 2.0
    d = np.diagonal(q)
    if np.any(d <= 0.0):
        bad = int(np.flatnonzero(d <= 0.0)[0])
        raise ModelConstructionError(
            f"precision diagonal entry {bad} is not strictly positive", band=bad
        )
    scale = np.sqrt(np.outer(d, d))
    w = -q / scale
    np.fill_diagonal(w, 0.0)
    clamped = int((w < 0.0).sum()) // 2
    w = np.maximum(w, 0.0)
    return WeightMatrix(matrix=w, topology=SPECTRAL, clamped=clamped)


def cauchy_weights(mean: np.ndarray, alpha: float | str = "auto") -> WeightMatrix:
    """Fully-connected spectral weights from band means only.

    ``w[a,b] = 1 / (1 + ((mean[a] - mean[b]) / alpha)^2)``. With
    ``alpha="auto"`` the scale is the mean of the band means. Needs no
    covariance and no inversion.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if mean.ndim != 1 or mean.shape[0] < 2:
        raise ParameterError(f"need at least 2 band means, got shape {mean.shape}")
    if isinstance(alpha, str):
        if alpha != "auto":
            raise ParameterError(f"alpha must be a positive number or 'auto', got {alpha!r}")
        alpha = float(mean.mean())
        if alpha == 0.0:
            raise ParameterError("auto alpha is zero (band means average to 0); pass alpha explicitly")
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ParameterError(f"alpha must be strictly positive, got {alpha}")
    diff = (mean[:, None] - mean[None, :]) / alpha
    w = 1.0 / (1.0 + diff * diff)
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(matrix=w, topology=SPECTRAL)


def spatial_spectral_weights(
    spectral: WeightMatrix,
    spatial_weight: float = 1.0,
    connectivity: int = 4,
) -> WeightMatrix:
    """Extend a spectral graph with same-band links to lattice neighbors.

    The result stacks ``2d + 1`` pixel blocks (center plus its 2-D
    4-neighbors or 3-D 6-neighbors). Every block carries a copy of the
    spectral weights; node j of the center block is linked to node j of
    each neighbor block with ``spatial_weight``. Neighbor blocks are not
    linked to each other (they are not lattice-adjacent).
    """
    if spectral.topology != SPECTRAL:
        raise ParameterError("base weights must be a spectral-only graph")
    if connectivity not in _BLOCKS:
        raise ParameterError(f"connectivity must be 4 (2-D) or 6 (3-D), got {connectivity}")
    if not np.isfinite(spatial_weight) or spatial_weight < 0.0:
        raise ParameterError(f"spatial weight must be nonnegative, got {spatial_weight}")
    m = spectral.order
    blocks = _BLOCKS[connectivity]
    n = blocks * m
    w = np.zeros((n, n))
    for b in range(blocks):
        w[b * m:(b + 1) * m, b * m:(b + 1) * m] = spectral.matrix
    for b in range(1, blocks):
        idx = np.arange(m)
        w[idx, b * m + idx] = spatial_weight
        w[b * m + idx, idx] = spatial_weight
    return WeightMatrix(
        matrix=w,
        topology=SPATIAL_SPECTRAL,
        bands=m,
        connectivity=connectivity,
        clamped=spectral.clamped,
    )


def degree_vector(weights: WeightMatrix) -> np.ndarray:
    """Sum of incident edge weights per node."""
    return weights.matrix.sum(axis=1)


def degree_matrix(weights: WeightMatrix) -> np.ndarray:
    return np.diag(degree_vector(weights))


def build_laplacian(
    weights: WeightMatrix,
    variant: str = SYMMETRIC_NORMALIZED,
    mean: np.ndarray | None = None,
) -> GraphModel:
    """Build the combinatorial (D - W) or symmetric normalized Laplacian.

    Zero-degree (isolated) nodes follow the pseudo-inverse convention for
    the normalized variant: their D^(-1/2) entry is 0, so their row and
    column vanish. ``mean`` is attached for later signal centering.
    """
    deg = degree_vector(weights)
    lap = np.diag(deg) - weights.matrix
    if variant == COMBINATORIAL:
        pass
    elif variant == SYMMETRIC_NORMALIZED:
        with np.errstate(divide="ignore"):
            dm = np.where(deg > 0.0, 1.0 / np.sqrt(deg), 0.0)
        # np.outer of a vector with itself is exactly symmetric, so the
        # elementwise product keeps the Laplacian's exact symmetry.
        lap = lap * np.outer(dm, dm)
    else:
        raise ParameterError(f"unknown Laplacian variant {variant!r}")
    return GraphModel(weights=weights, degrees=deg, laplacian=lap, variant=variant, mean=mean)


def _deterministic_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs so each column's first nonzero entry is positive."""
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        top = float(np.abs(col).max())
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(top, 1e-300))
        if nz.size and col[nz[0]] < 0.0:
            vecs[:, j] = -col
    return vecs


def eigendecompose(model: GraphModel) -> GraphModel:
    """Attach the full eigensystem (ascending eigenvalues) to a model.

    Eigenvector signs are fixed deterministically; the reconstruction
    ``U diag(lam) U^T`` is verified against the Laplacian before returning.
    """
    if model.eigenvalues is not None:
        return model
    count_eigendecomposition()
    try:
        vals, vecs = np.linalg.eigh(model.laplacian)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigendecomposition failed for Laplacian of order {model.order}: {exc}",
            order=model.order,
        ) from exc
    vecs = _deterministic_signs(vecs)
    scale = 1.0 + float(np.abs(model.laplacian).max())
    residual = float(np.abs(model.laplacian - (vecs * vals) @ vecs.T).max())
    if residual > 1e-8 * scale:
        raise NumericError(
            f"eigendecomposition residual {residual:.3e} too large for order {model.order}",
            order=model.order,
        )
    return GraphModel(
        weights=model.weights,
        degrees=model.degrees,
        laplacian=model.laplacian,
        variant=model.variant,
        mean=model.mean,
        eigenvalues=vals,
        eigenvectors=vecs,
    )
