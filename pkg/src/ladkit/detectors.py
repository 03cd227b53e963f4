"""Anomaly scorers and their estimator-style wrappers.

Two families are implemented. The Mahalanobis family scores each pixel by
``x_c^T Q x_c`` against the background precision Q (optionally de-noised by
keeping only the p largest-eigenvalue components of the covariance
eigenbasis, where the score becomes ``sum_j y_j^2 / kappa_j``). The graph
family scores the centered pixel signal s by the Laplacian quadratic form
``s^T L s`` (equivalently ``sum_j lambda_j st_j^2`` in the eigenbasis), with
an optional low-frequency truncation and a spatially-aware variant that
stacks the pixel with its lattice neighbors.

The module-level functions are pure; :class:`RXDetector` and
:class:`LaplacianAnomalyDetector` wrap them in the scikit-learn
fit/predict idiom so they compose with pipelines and grid search.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .cube import ImageCube, Mask, ScoreMap, as_cube
from .errors import ParameterError, TruncationError, ValidationError
from .graph import (
    COMBINATORIAL,
    SPATIAL_SPECTRAL,
    SPECTRAL,
    SYMMETRIC_NORMALIZED,
    GraphModel,
    build_laplacian,
    cauchy_weights,
    eigendecompose,
    partial_correlation_weights,
    spatial_spectral_weights,
)
from .stats import BackgroundStats, center_cube, estimate_background_stats
from .transforms import (
    DEFAULT_ENERGY_FRACTION,
    TruncationPolicy,
    cumulative_energy_curve,
    klt_basis,
)

# Chunk size for the per-pixel quadratic forms; fixed so results and
# throughput are independent of the total pixel count.
_SCORE_CHUNK = 1024

# Relative floor below which covariance eigenvalues count as zero
_EIGENVALUE_FLOOR = 1e-12

# Neighbor offsets per connectivity, one unit step along each axis.
# Block order everywhere: center first, then these offsets in order.
_NEIGHBOR_OFFSETS = {
    4: ((-1, 0), (1, 0), (0, -1), (0, 1)),
    6: ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)),
}


def _quadratic_form(signals: np.ndarray, matrix: np.ndarray, mean: np.ndarray | None = None) -> np.ndarray:
    """Row-wise (s - mean)^T M (s - mean), evaluated in fixed-size chunks.

    Chunking keeps temporaries at O(chunk * n) regardless of the pixel
    count, so per-pixel cost does not depend on N.
    """
    out = np.empty(signals.shape[0])
    for start in range(0, signals.shape[0], _SCORE_CHUNK):
        block = signals[start:start + _SCORE_CHUNK]
        if mean is not None:
            block = block - mean
        out[start:start + _SCORE_CHUNK] = np.einsum("ij,ij->i", block @ matrix, block)
    return out


def rxd_score(cube: ImageCube, stats: BackgroundStats) -> ScoreMap:
    """Squared Mahalanobis distance of every pixel from the background."""
    precision = stats.require_precision()
    if cube.n_bands != stats.n_bands:
        raise ValidationError(
            f"cube has {cube.n_bands} bands but statistics expect {stats.n_bands}"
        )
    scores = _quadratic_form(cube.pixels, precision, mean=stats.mean)
    return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))


def _check_retained_eigenvalues(eigvals_desc: np.ndarray, p: int) -> None:
    floor = _EIGENVALUE_FLOOR * max(float(eigvals_desc[0]), 0.0)
    usable = int((eigvals_desc > floor).sum())
    if p > usable:
        raise TruncationError(
            f"component {usable + 1} has a numerically zero eigenvalue; "
            f"reduce p to at most {usable}",
            requested=p,
            usable=usable,
        )


def rxd_p_score(
    cube: ImageCube,
    stats: BackgroundStats,
    policy: TruncationPolicy = TruncationPolicy.full(),
) -> ScoreMap:
    """De-noised Mahalanobis score keeping the top-p covariance components.

    With the full policy this reproduces :func:`rxd_score` (identity of the
    quadratic form under the orthonormal change of basis). Energy policies
    resolve p on the cube being scored.
    """
    eigvals, eigvecs = klt_basis(stats)
    centered = center_cube(cube, stats)
    coeffs = centered @ eigvecs
    energies = cumulative_energy_curve(coeffs) if policy.mode == "energy" else None
    p = policy.resolve(eigvals.shape[0], energies=energies)
    _check_retained_eigenvalues(eigvals, p)
    scores = ((coeffs[:, :p] ** 2) / eigvals[:p]).sum(axis=1)
    return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))


def lad_score(cube: ImageCube, model: GraphModel) -> ScoreMap:
    """Laplacian quadratic form of the centered spectral signal.

    Works directly on the Laplacian: no inversion, no eigendecomposition.
    """
    if model.weights.topology != SPECTRAL:
        raise ValidationError("spectral scoring needs a spectral-only graph model")
    if model.order != cube.n_bands:
        raise ValidationError(
            f"model order {model.order} does not match cube band count {cube.n_bands}"
        )
    scores = _quadratic_form(cube.pixels, model.laplacian, mean=model.require_mean())
    return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))


def lad_p_score(
    cube: ImageCube,
    model: GraphModel,
    policy: TruncationPolicy = TruncationPolicy.full(),
) -> ScoreMap:
    """Graph-frequency-truncated score keeping the p lowest frequencies.

    Eigenvalues are ascending, so the retained components are the smooth
    ones; the zero eigenvalue of a connected combinatorial Laplacian is
    included in the count.
    """
    if model.weights.topology != SPECTRAL:
        raise ValidationError("spectral scoring needs a spectral-only graph model")
    if model.order != cube.n_bands:
        raise ValidationError(
            f"model order {model.order} does not match cube band count {cube.n_bands}"
        )
    eigvals, eigvecs = model.require_eigensystem()
    signals = cube.pixels - model.require_mean()
    coeffs = signals @ eigvecs
    energies = cumulative_energy_curve(coeffs) if policy.mode == "energy" else None
    p = policy.resolve(eigvals.shape[0], energies=energies)
    scores = ((coeffs[:, :p] ** 2) * eigvals[:p]).sum(axis=1)
    return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))


def stack_neighbor_signals(cube: ImageCube, connectivity: int) -> np.ndarray:
    """Concatenate each pixel's bands with those of its lattice neighbors.

    Returns an (N, (2d+1)*m) matrix; out-of-image neighbors are clamped to
    the nearest valid pixel, so border rows repeat the edge pixel.
    """
    offsets = _NEIGHBOR_OFFSETS.get(connectivity)
    if offsets is None:
        raise ParameterError(f"connectivity must be 4 or 6, got {connectivity}")
    if len(cube.dims) != len(offsets[0]):
        raise ValidationError(
            f"connectivity {connectivity} needs a {len(offsets[0])}-D grid, "
            f"cube is {len(cube.dims)}-D"
        )
    blocks = [cube.data]
    for offset in offsets:
        shifted = cube.data
        for axis, delta in enumerate(offset):
            if delta == 0:
                continue
            idx = np.clip(np.arange(cube.dims[axis]) + delta, 0, cube.dims[axis] - 1)
            shifted = np.take(shifted, idx, axis=axis)
        blocks.append(shifted)
    stacked = np.concatenate([b.reshape(cube.n_pixels, cube.n_bands) for b in blocks], axis=1)
    return stacked


def lad_s_score(cube: ImageCube, model: GraphModel) -> ScoreMap:
    """Spatially-aware Laplacian score on the stacked neighbor signal."""
    if model.weights.topology != SPATIAL_SPECTRAL:
        raise ValidationError("spatially-aware scoring needs a spatial-spectral model")
    connectivity = model.weights.connectivity
    if model.weights.bands != cube.n_bands:
        raise ValidationError(
            f"model expects {model.weights.bands} bands, cube has {cube.n_bands}"
        )
    signals = stack_neighbor_signals(cube, connectivity)
    mean = model.require_mean()
    tiled = np.tile(mean, signals.shape[1] // mean.shape[0])
    scores = _quadratic_form(signals, model.laplacian, mean=tiled)
    return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))


def apply_threshold(scores: ScoreMap, t: float) -> Mask:
    """Binarize a score map at the adaptive threshold ``t * max(score)``.

    Pixels scoring greater than or equal to the threshold are anomalous,
    so t=0 flags everything and t=1 flags only the argmax pixels.
    """
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"threshold fraction must lie in [0, 1], got {t}")
    if scores.flat.size == 0:
        raise ValidationError("cannot threshold an empty score map")
    eta = t * float(scores.scores.max())
    return Mask(dims=scores.dims, values=(scores.scores >= eta).astype(np.uint8))


def _as_policy(truncation, p, energy_fraction) -> TruncationPolicy:
    if truncation == "full":
        return TruncationPolicy.full()
    if truncation == "fixed":
        return TruncationPolicy.fixed(p)
    if truncation == "energy":
        return TruncationPolicy.energy(energy_fraction)
    raise ParameterError(f"truncation must be 'full', 'fixed' or 'energy', got {truncation!r}")


_VARIANTS = {
    "sym": SYMMETRIC_NORMALIZED,
    "comb": COMBINATORIAL,
    SYMMETRIC_NORMALIZED: SYMMETRIC_NORMALIZED,
    COMBINATORIAL: COMBINATORIAL,
}


class RXDetector(BaseEstimator):
    """Mahalanobis-distance anomaly detector in the sklearn idiom.

    Parameters:
        truncation: "full" scores against the exact precision matrix;
            "fixed"/"energy" score in the covariance eigenbasis keeping
            ``p`` components or the smallest count retaining
            ``energy_fraction`` of the fit data's energy.
        p: Component count for ``truncation="fixed"``.
        energy_fraction: Retained-energy target for ``truncation="energy"``.
        threshold: Adaptive threshold fraction used by :meth:`predict`.
        ridge: Diagonal regularization for the covariance inversion.

    Attributes (after fit):
        stats_: Estimated background statistics.
        basis_values_, basis_vectors_: Covariance eigensystem (descending),
            present for truncated variants.
        p_: Resolved component count, present for truncated variants.
    """

    def __init__(
        self,
        truncation: str = "full",
        p: int | None = None,
        energy_fraction: float = DEFAULT_ENERGY_FRACTION,
        threshold: float = 0.5,
        ridge: float = 0.0,
    ) -> None:
        self.truncation = truncation
        self.p = p
        self.energy_fraction = energy_fraction
        self.threshold = threshold
        self.ridge = ridge

    def fit(self, X, y=None) -> "RXDetector":
        """Estimate the background model from all pixels of X.

        X may be an ImageCube, an ``(*spatial, m)`` array, or an ``(N, m)``
        sample matrix.
        """
        cube = as_cube(X)
        policy = _as_policy(self.truncation, self.p, self.energy_fraction)
        self.stats_ = estimate_background_stats(
            cube, compute_precision=policy.mode == "full", ridge=self.ridge
        )
        self.n_features_in_ = cube.n_bands
        if policy.mode != "full":
            self.basis_values_, self.basis_vectors_ = klt_basis(self.stats_)
            energies = None
            if policy.mode == "energy":
                coeffs = center_cube(cube, self.stats_) @ self.basis_vectors_
                energies = cumulative_energy_curve(coeffs)
            self.p_ = policy.resolve(cube.n_bands, energies=energies)
            _check_retained_eigenvalues(self.basis_values_, self.p_)
        return self

    def score_map(self, X) -> ScoreMap:
        """Anomaly scores for X against the fitted background."""
        self._check_fitted()
        cube = as_cube(X)
        if self.truncation == "full":
            return rxd_score(cube, self.stats_)
        centered = center_cube(cube, self.stats_)
        coeffs = centered @ self.basis_vectors_
        scores = ((coeffs[:, : self.p_] ** 2) / self.basis_values_[: self.p_]).sum(axis=1)
        return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))

    def score_samples(self, X) -> np.ndarray:
        """Flat per-pixel anomaly scores; higher means more anomalous."""
        return self.score_map(X).flat

    def predict(self, X) -> np.ndarray:
        """Flat 0/1 anomaly labels at the adaptive threshold."""
        return apply_threshold(self.score_map(X), self.threshold).flat

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)

    def _check_fitted(self) -> None:
        if not hasattr(self, "stats_"):
            raise ValidationError("detector is not fitted; call fit(X) first")


class LaplacianAnomalyDetector(BaseEstimator):
    """Graph-Laplacian anomaly detector in the sklearn idiom.

    Parameters:
        weights: "cauchy" builds inversion-free weights from band means;
            "partial-correlation" reads weights off the precision matrix.
        laplacian: "sym" (normalized, default) or "comb" (combinatorial).
        spatial: Stack each pixel with its lattice neighbors (4-connected
            in 2-D, 6-connected in 3-D) before scoring.
        spatial_weight: Weight of the center-to-neighbor same-band edges.
        alpha: Cauchy scale, or "auto" for the mean of the band means.
        truncation / p / energy_fraction: Optional low-graph-frequency
            truncation; the component count is resolved on the fit data.
        threshold: Adaptive threshold fraction used by :meth:`predict`.
        ridge: Regularization for the precision estimate (partial
            correlation weights only).

    Attributes (after fit):
        stats_: Background statistics (precision only when needed).
        model_: The fitted graph model, eigendecomposed iff truncated.
        p_: Resolved component count, present for truncated variants.
    """

    def __init__(
        self,
        weights: str = "cauchy",
        laplacian: str = "sym",
        spatial: bool = False,
        spatial_weight: float = 1.0,
        alpha: float | str = "auto",
        truncation: str = "full",
        p: int | None = None,
        energy_fraction: float = DEFAULT_ENERGY_FRACTION,
        threshold: float = 0.5,
        ridge: float = 0.0,
    ) -> None:
        self.weights = weights
        self.laplacian = laplacian
        self.spatial = spatial
        self.spatial_weight = spatial_weight
        self.alpha = alpha
        self.truncation = truncation
        self.p = p
        self.energy_fraction = energy_fraction
        self.threshold = threshold
        self.ridge = ridge

    def fit(self, X, y=None) -> "LaplacianAnomalyDetector":
        """Estimate statistics and build the background graph from X."""
        cube = as_cube(X)
        policy = _as_policy(self.truncation, self.p, self.energy_fraction)
        variant = _VARIANTS.get(self.laplacian)
        if variant is None:
            raise ParameterError(f"laplacian must be 'sym' or 'comb', got {self.laplacian!r}")
        if self.weights == "partial-correlation":
            self.stats_ = estimate_background_stats(cube, compute_precision=True, ridge=self.ridge)
            spectral = partial_correlation_weights(self.stats_)
        elif self.weights == "cauchy":
            self.stats_ = estimate_background_stats(cube, compute_precision=False)
            spectral = cauchy_weights(self.stats_.mean, alpha=self.alpha)
        else:
            raise ParameterError(
                f"weights must be 'cauchy' or 'partial-correlation', got {self.weights!r}"
            )
        if self.spatial:
            connectivity = 4 if len(cube.dims) == 2 else 6
            weights = spatial_spectral_weights(
                spectral, spatial_weight=self.spatial_weight, connectivity=connectivity
            )
        else:
            weights = spectral
        self.model_ = build_laplacian(weights, variant=variant, mean=self.stats_.mean)
        self.n_features_in_ = cube.n_bands
        if policy.mode != "full":
            self.model_ = eigendecompose(self.model_)
            energies = None
            if policy.mode == "energy":
                signals = self._signals(cube)
                energies = cumulative_energy_curve(signals @ self.model_.eigenvectors)
            self.p_ = policy.resolve(self.model_.order, energies=energies)
        return self

    def _signals(self, cube: ImageCube) -> np.ndarray:
        mean = self.model_.require_mean()
        if self.spatial:
            stacked = stack_neighbor_signals(cube, self.model_.weights.connectivity)
            return stacked - np.tile(mean, stacked.shape[1] // mean.shape[0])
        if cube.n_bands != self.model_.weights.bands:
            raise ValidationError(
                f"model expects {self.model_.weights.bands} bands, cube has {cube.n_bands}"
            )
        return cube.pixels - mean

    def score_map(self, X) -> ScoreMap:
        """Anomaly scores for X against the fitted graph model."""
        self._check_fitted()
        cube = as_cube(X)
        if self.truncation == "full":
            scorer = lad_s_score if self.spatial else lad_score
            return scorer(cube, self.model_)
        eigvals, eigvecs = self.model_.require_eigensystem()
        coeffs = self._signals(cube) @ eigvecs
        scores = ((coeffs[:, : self.p_] ** 2) * eigvals[: self.p_]).sum(axis=1)
        return ScoreMap(dims=cube.dims, scores=scores.reshape(cube.dims))

    def score_samples(self, X) -> np.ndarray:
        """Flat per-pixel anomaly scores; higher means more anomalous."""
        return self.score_map(X).flat

    def predict(self, X) -> np.ndarray:
        """Flat 0/1 anomaly labels at the adaptive threshold."""
        return apply_threshold(self.score_map(X), self.threshold).flat

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise ValidationError("detector is not fitted; call fit(X) first")
