"""Core data containers: image cubes, binary masks, and score maps.

An image cube holds N pixels on a 2-D or 3-D spatial grid with m channels
per pixel, stored channel-interleaved (the per-pixel channel vector is
contiguous). All containers are immutable after construction; the backing
arrays are marked read-only so they can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def validate_spatial_dims(dims: Sequence[int]) -> tuple[int, ...]:
    """Check spatial extents: 2 or 3 of them, each >= 1."""
    dims = tuple(int(d) for d in dims)
    if len(dims) not in (2, 3):
        raise ValidationError(
            f"spatial grid must be 2-D or 3-D, got {len(dims)} extents", dims=list(dims)
        )
    if any(d < 1 for d in dims):
        raise ValidationError(f"all spatial extents must be >= 1, got {dims}", dims=list(dims))
    return dims


@dataclass(frozen=True)
class ImageCube:
    """N pixels on a spatial grid, m channels each.

    Attributes:
        dims: Spatial extents (2 or 3 of them).
        data: float64 array of shape ``(*dims, m)``.
        band_labels: Optional channel names, one per band.
    """

    dims: tuple[int, ...]
    data: np.ndarray
    band_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        dims = validate_spatial_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != len(dims) + 1 or data.shape[:-1] != dims:
            raise ValidationError(
                f"data shape {data.shape} does not match spatial dims {dims} plus a band axis"
            )
        if data.shape[-1] < 1:
            raise ValidationError("cube must have at least one band")
        if not np.all(np.isfinite(data)):
            bad = int(np.flatnonzero(~np.isfinite(data))[0]) // data.shape[-1]
            raise ValidationError("cube contains non-finite values", pixel=bad)
        if self.band_labels is not None:
            labels = tuple(str(b) for b in self.band_labels)
            if len(labels) != data.shape[-1]:
                raise ValidationError(
                    f"{len(labels)} band labels for {data.shape[-1]} bands"
                )
            object.__setattr__(self, "band_labels", labels)
        object.__setattr__(self, "data", _freeze(data))

    @property
    def n_bands(self) -> int:
        return self.data.shape[-1]

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.dims))

    @property
    def pixels(self) -> np.ndarray:
        """Read-only (N, m) view of the pixel vectors."""
        return self.data.reshape(self.n_pixels, self.n_bands)

    @classmethod
    def from_array(cls, data: np.ndarray, band_labels: Sequence[str] | None = None) -> "ImageCube":
        """Wrap an ``(*spatial, m)`` array; spatial rank inferred as ndim - 1."""
        data = np.asarray(data)
        if data.ndim not in (3, 4):
            raise ValidationError(
                f"expected (rows, cols, bands) or (rows, cols, slices, bands), got shape {data.shape}"
            )
        labels = tuple(band_labels) if band_labels is not None else None
        return cls(dims=data.shape[:-1], data=data, band_labels=labels)


@dataclass(frozen=True)
class Mask:
    """Binary per-pixel mask aligned with a cube's spatial grid."""

    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        dims = validate_spatial_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        values = np.asarray(self.values)
        if values.shape != dims:
            raise ValidationError(f"mask shape {values.shape} does not match dims {dims}")
        values = np.ascontiguousarray(values)
        if not np.isin(values, (0, 1)).all():
            raise ValidationError("mask values must be 0 or 1")
        object.__setattr__(self, "values", _freeze(values.astype(np.uint8)))

    @property
    def n_positive(self) -> int:
        return int(self.values.sum())

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class ScoreMap:
    """One nonnegative anomaly score per pixel.

    Quadratic forms of PSD matrices are nonnegative up to rounding; tiny
    negative values (>= -1e-9 absolute) are clamped to zero on construction.
    """

    dims: tuple[int, ...]
    scores: np.ndarray

    _NEGATIVE_TOL = 1e-9

    def __post_init__(self) -> None:
        dims = validate_spatial_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if scores.shape != dims:
            raise ValidationError(f"score shape {scores.shape} does not match dims {dims}")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("scores contain non-finite values")
        low = float(scores.min()) if scores.size else 0.0
        if low < -self._NEGATIVE_TOL * (1.0 + float(np.abs(scores).max())):
            raise ValidationError(f"scores contain genuinely negative values (min {low})")
        if low < 0.0:
            scores = np.maximum(scores, 0.0)
        object.__setattr__(self, "scores", _freeze(scores))

    @property
    def flat(self) -> np.ndarray:
        return self.scores.reshape(-1)


def as_cube(X, band_labels: Sequence[str] | None = None) -> ImageCube:
    """Coerce detector input to an :class:`ImageCube`.

    Accepts an ImageCube (returned as-is), an ``(*spatial, m)`` array with
    2 or 3 spatial dims, or an ``(N, m)`` sample matrix which is treated as
    a degenerate N x 1 grid.
    """
    if isinstance(X, ImageCube):
        return X
    X = np.asarray(X)
    if X.ndim == 2:
        return ImageCube(dims=(X.shape[0], 1), data=X[:, None, :], band_labels=band_labels)
    return ImageCube.from_array(X, band_labels=band_labels)
