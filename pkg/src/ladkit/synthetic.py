"""Synthetic anomalies: square-line masks, target implants, GMRF scenes.

The implant substitutes masked pixels of a target image with random pixels
drawn from a chosen class of a labeled source scene. The GMRF sampler
produces controlled background scenes (i.i.d. pixels from a zero-mean
Gaussian with a given precision matrix) used as detector test oracles.
All randomness flows through the counter-based Philox generator, so
outputs are reproducible from the seed alone and draws are indexed by
pixel rank rather than generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cube import ImageCube, Mask, validate_spatial_dims
from .errors import ParameterError, ValidationError

DEFAULT_SQUARE_SIDES = (1, 2, 3, 4, 5, 6)
DEFAULT_SQUARE_SPACING = 2
DEFAULT_LINE_SEPARATION = 3
DEFAULT_ROTATION = math.pi / 6


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _line_layout(sides: Sequence[int], spacing: int) -> np.ndarray:
    height = max(sides)
    width = sum(sides) + spacing * (len(sides) - 1)
    cells = np.zeros((height, width), dtype=bool)
    x = 0
    for s in sides:
        cells[:s, x:x + s] = True
        x += s + spacing
    return cells


def square_line_mask(
    dims: Sequence[int],
    sides: Sequence[int] = DEFAULT_SQUARE_SIDES,
    rotation: float = DEFAULT_ROTATION,
    spacing: int = DEFAULT_SQUARE_SPACING,
    separation: int = DEFAULT_LINE_SEPARATION,
) -> Mask:
    """Two mirrored lines of squares, rotated and centered in the grid.

    The first line places squares of the given sides left to right; the
    second line is its horizontal mirror (reversed order) one separation
    below. Rotation resamples the pattern with nearest-neighbor lookup
    around the grid center, so the pattern stays hole-free and pixel
    counts change only by rasterization effects.

    Args:
        dims: 2-D mask extents (rows, cols).
        sides: Square side lengths, each >= 1.
        rotation: Rotation angle in radians.
        spacing: Gap between consecutive squares within a line.
        separation: Gap between the two lines.
    """
    dims = validate_spatial_dims(dims)
    if len(dims) != 2:
        raise ParameterError("square-line masks are 2-D patterns; pass 2 extents")
    sides = tuple(int(s) for s in sides)
    if not sides or any(s < 1 for s in sides):
        raise ParameterError(f"square sides must be positive integers, got {sides}")
    if spacing < 1 or separation < 1:
        raise ParameterError("spacing and separation must be >= 1 to keep squares disjoint")
    line = _line_layout(sides, spacing)
    height = 2 * line.shape[0] + separation
    pattern = np.zeros((height, line.shape[1]), dtype=bool)
    pattern[: line.shape[0]] = line
    pattern[line.shape[0] + separation:] = line[:, ::-1]

    ph, pw = pattern.shape
    cos, sin = math.cos(rotation), math.sin(rotation)
    rot_h = ph * abs(cos) + pw * abs(sin)
    rot_w = ph * abs(sin) + pw * abs(cos)
    if rot_h > dims[0] or rot_w > dims[1]:
        raise ParameterError(
            f"rotated layout ({rot_h:.0f} x {rot_w:.0f}) exceeds mask dims {dims}",
            layout=[float(rot_h), float(rot_w)],
            dims=list(dims),
        )

    # Inverse nearest-neighbor warp: rotate each target pixel center back
    # into pattern coordinates and sample.
    rows, cols = np.meshgrid(np.arange(dims[0]), np.arange(dims[1]), indexing="ij")
    y = rows + 0.5 - dims[0] / 2.0
    x = cols + 0.5 - dims[1] / 2.0
    src_y = cos * y + sin * x + ph / 2.0
    src_x = -sin * y + cos * x + pw / 2.0
    sr = np.floor(src_y).astype(np.int64)
    sc = np.floor(src_x).astype(np.int64)
    inside = (sr >= 0) & (sr < ph) & (sc >= 0) & (sc < pw)
    values = np.zeros(dims, dtype=np.uint8)
    values[inside] = pattern[sr[inside], sc[inside]]
    return Mask(dims=dims, values=values)


@dataclass(frozen=True)
class ImplantSpec:
    """Where and what to implant: mask, source class map, class id, seed."""

    mask: Mask
    source_labels: np.ndarray
    k: int
    seed: int = 0

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.source_labels)
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValidationError("source labels must be integers")
            labels = labels.astype(np.int64)
        labels.flags.writeable = False
        object.__setattr__(self, "source_labels", labels)
        if not np.any(labels == self.k):
            raise ParameterError(f"source scene has no pixels of class {self.k}", k=self.k)


def implant(target: ImageCube, spec: ImplantSpec, source: ImageCube) -> ImageCube:
    """Replace masked target pixels with random pixels of the chosen class.

    Draws are uniform with replacement over the class pixels, one
    independent draw per masked pixel in raster order, seeded by the spec.
    Unmasked pixels are copied bit-for-bit.
    """
    if source.n_bands != target.n_bands:
        raise ValidationError(
            f"source has {source.n_bands} bands, target has {target.n_bands}"
        )
    if spec.mask.dims != target.dims:
        raise ValidationError(
            f"implant mask dims {spec.mask.dims} do not match target dims {target.dims}"
        )
    if spec.source_labels.shape != source.dims:
        raise ValidationError(
            f"label map shape {spec.source_labels.shape} does not match source dims {source.dims}"
        )
    pool = source.pixels[spec.source_labels.reshape(-1) == spec.k]
    masked = np.flatnonzero(spec.mask.flat)
    out = target.pixels.copy()
    if masked.size:
        draws = _rng(spec.seed).integers(0, pool.shape[0], size=masked.size)
        out[masked] = pool[draws]
    return ImageCube(
        dims=target.dims,
        data=out.reshape(target.data.shape),
        band_labels=target.band_labels,
    )


def sample_gmrf_scene(
    dims: Sequence[int],
    n_bands: int,
    precision: np.ndarray,
    anomaly: tuple[Mask, np.ndarray] | None = None,
    seed: int = 0,
) -> tuple[ImageCube, Mask]:
    """Sample a scene of i.i.d. zero-mean Gaussian pixels with given precision.

    Pixels are drawn through the spectral factorization of the precision
    matrix; anomalous pixels (per the optional mask) are additionally
    shifted by the given per-band vector. Returns the cube and the truth
    mask (all zeros when no anomaly was requested).
    """
    dims = validate_spatial_dims(dims)
    precision = np.asarray(precision, dtype=np.float64)
    if precision.shape != (n_bands, n_bands):
        raise ValidationError(
            f"precision shape {precision.shape} does not match {n_bands} bands"
        )
    if not np.allclose(precision, precision.T, rtol=1e-10, atol=1e-12):
        raise ValidationError("precision matrix must be symmetric")
    eigvals, eigvecs = np.linalg.eigh((precision + precision.T) / 2.0)
    if eigvals[0] <= 0.0:
        raise ValidationError(
            f"precision matrix is not positive definite (min eigenvalue {eigvals[0]:.3e})"
        )
    # covariance square root: C = (E L^-1/2)(E L^-1/2)^T
    half = eigvecs * (1.0 / np.sqrt(eigvals))
    n = int(np.prod(dims))
    data = _rng(seed).standard_normal((n, n_bands)) @ half.T
    if anomaly is None:
        truth = Mask(dims=dims, values=np.zeros(dims, dtype=np.uint8))
    else:
        mask, shift = anomaly
        if mask.dims != dims:
            raise ValidationError(f"anomaly mask dims {mask.dims} do not match scene dims {dims}")
        shift = np.asarray(shift, dtype=np.float64)
        if shift.shape != (n_bands,):
            raise ValidationError(f"mean-shift vector must have length {n_bands}")
        data[mask.flat.astype(bool)] += shift
        truth = mask
    cube = ImageCube(dims=dims, data=data.reshape(*dims, n_bands))
    return cube, truth


def band_std(precision: np.ndarray) -> np.ndarray:
    """Per-band standard deviations implied by a precision matrix."""
    cov = np.linalg.inv(np.asarray(precision, dtype=np.float64))
    return np.sqrt(np.diagonal(cov))
