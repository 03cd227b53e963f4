"""On-disk formats: image cubes, masks, score maps, statistics, graph models.

Cubes are stored as a JSON header next to a raw little-endian payload
(band-interleaved by pixel), keeping reads dependency-free and bit-exact.
Masks use 8-bit binary PGM for 2-D grids (0 background, 255 anomalous)
and the cube container for 3-D volumes. Statistics and graph models use
the same header-plus-payload scheme with named array segments. All writes
go through a temp-file rename so partially written files never appear.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .cube import ImageCube, Mask, ScoreMap
from .errors import DataFormatError, ValidationError
from .graph import GraphModel, WeightMatrix
from .stats import BackgroundStats

CUBE_FORMAT = "cube/1"
STATS_FORMAT = "background-stats/1"
MODEL_FORMAT = "graph-model/1"

_DTYPES = {"f64": "<f8", "f32": "<f4", "u16": "<u2"}

# 1-based indices of the water absorption bands conventionally discarded
# from 224-band AVIRIS cubes.
WATER_ABSORPTION_BANDS = tuple(range(108, 113)) + tuple(range(154, 168)) + (224,)


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _write_json(path: Path, obj: dict) -> None:
    _atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _read_json(path: Path, expected_format: str) -> dict:
    try:
        header = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read header {path}: {exc}", path=str(path)) from exc
    if header.get("format") != expected_format:
        raise DataFormatError(
            f"{path} declares format {header.get('format')!r}, expected {expected_format!r}",
            path=str(path),
        )
    return header


def _payload_path(header_path: Path, header: dict | None = None) -> Path:
    if header is not None and header.get("payload"):
        return header_path.parent / header["payload"]
    return header_path.with_suffix(".raw")


def _read_payload(path: Path, expected_bytes: int) -> bytes:
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read payload {path}: {exc}", path=str(path)) from exc
    if len(blob) != expected_bytes:
        raise DataFormatError(
            f"payload {path} holds {len(blob)} bytes, expected {expected_bytes}",
            expected=expected_bytes,
            actual=len(blob),
        )
    return blob


def write_cube(
    cube: ImageCube,
    path: str | Path,
    dtype: str = "f64",
    provenance: dict | None = None,
) -> None:
    """Write header JSON at ``path`` and the raw payload beside it.

    u16 requires exactly representable integer values; f32 round-trips
    whatever survives the narrowing cast.
    """
    path = Path(path)
    if dtype not in _DTYPES:
        raise DataFormatError(f"unknown dtype {dtype!r}; use one of {sorted(_DTYPES)}")
    values = cube.data
    if dtype == "u16":
        if not np.all((values >= 0) & (values <= 65535) & (values == np.round(values))):
            raise DataFormatError("cube values are not representable as u16")
    raw = np.ascontiguousarray(values, dtype=_DTYPES[dtype]).tobytes()
    payload = _payload_path(path)
    header = {
        "format": CUBE_FORMAT,
        "dims": list(cube.dims),
        "m": cube.n_bands,
        "dtype": dtype,
        "layout": "band-interleaved-by-pixel",
        "band_labels": list(cube.band_labels) if cube.band_labels else None,
        "payload": payload.name,
        "provenance": provenance or {},
    }
    _atomic_write(payload, raw)
    _write_json(path, header)


def read_cube(path: str | Path) -> ImageCube:
    """Read a cube, widening f32/u16 payloads to float64."""
    path = Path(path)
    header = _read_json(path, CUBE_FORMAT)
    dims = tuple(int(d) for d in header.get("dims", ()))
    m = int(header.get("m", 0))
    if len(dims) not in (2, 3) or any(d < 1 for d in dims) or m < 1:
        raise DataFormatError(
            f"{path} declares invalid dims {list(dims)} / m {m}", path=str(path)
        )
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise DataFormatError(f"{path} declares unknown dtype {dtype!r}", path=str(path))
    if header.get("layout") != "band-interleaved-by-pixel":
        raise DataFormatError(
            f"{path} declares unsupported layout {header.get('layout')!r}", path=str(path)
        )
    np_dtype = np.dtype(_DTYPES[dtype])
    count = int(np.prod(dims)) * m
    blob = _read_payload(_payload_path(path, header), count * np_dtype.itemsize)
    data = np.frombuffer(blob, dtype=np_dtype).astype(np.float64).reshape(*dims, m)
    finite = np.isfinite(data)
    if not finite.all():
        pixel = int(np.flatnonzero(~finite.reshape(-1))[0]) // m
        raise DataFormatError(f"{path} payload contains non-finite values", pixel=pixel)
    labels = header.get("band_labels")
    return ImageCube(dims=dims, data=data, band_labels=tuple(labels) if labels else None)


def write_scores(scores: ScoreMap, path: str | Path, provenance: dict | None = None) -> None:
    """Score maps are single-band f64 cubes."""
    cube = ImageCube(dims=scores.dims, data=scores.scores[..., None])
    write_cube(cube, path, dtype="f64", provenance=provenance)


def read_scores(path: str | Path) -> ScoreMap:
    cube = read_cube(path)
    if cube.n_bands != 1:
        raise DataFormatError(f"{path} is not a score map (has {cube.n_bands} bands)")
    return ScoreMap(dims=cube.dims, scores=cube.data[..., 0])


def write_mask(mask: Mask, path: str | Path) -> None:
    """Write a mask: binary PGM for 2-D grids, cube container otherwise."""
    path = Path(path)
    if path.suffix == ".pgm":
        if len(mask.dims) != 2:
            raise DataFormatError("PGM masks are 2-D; use the cube container for volumes")
        rows, cols = mask.dims
        body = (mask.values * np.uint8(255)).tobytes()
        _atomic_write(path, f"P5\n{cols} {rows}\n255\n".encode() + body)
        return
    write_cube(ImageCube(dims=mask.dims, data=mask.values[..., None].astype(np.float64)), path)


def read_mask(path: str | Path) -> Mask:
    path = Path(path)
    if path.suffix == ".pgm":
        blob = path.read_bytes()
        if not blob.startswith(b"P5"):
            raise DataFormatError(f"{path} is not a binary PGM file", path=str(path))
        fields: list[bytes] = []
        pos = 2
        try:
            while len(fields) < 3:
                while pos < len(blob) and blob[pos:pos + 1].isspace():
                    pos += 1
                if blob[pos:pos + 1] == b"#":  # comment line
                    pos = blob.index(b"\n", pos) + 1
                    continue
                start = pos
                while pos < len(blob) and not blob[pos:pos + 1].isspace():
                    pos += 1
                fields.append(blob[start:pos])
            cols, rows, maxval = (int(f) for f in fields)
        except ValueError as exc:
            raise DataFormatError(f"{path} has a malformed PGM header", path=str(path)) from exc
        if maxval > 255:
            raise DataFormatError(f"{path}: 16-bit PGM masks are not supported")
        body = blob[pos + 1:]
        if len(body) != rows * cols:
            raise DataFormatError(
                f"{path} payload holds {len(body)} bytes, expected {rows * cols}",
                expected=rows * cols,
                actual=len(body),
            )
        values = (np.frombuffer(body, dtype=np.uint8).reshape(rows, cols) > 0).astype(np.uint8)
        return Mask(dims=(rows, cols), values=values)
    cube = read_cube(path)
    if cube.n_bands != 1:
        raise DataFormatError(f"{path} is not a mask (has {cube.n_bands} bands)")
    values = cube.data[..., 0]
    if not np.isin(values, (0.0, 1.0)).all():
        raise DataFormatError(f"{path} holds non-binary values")
    return Mask(dims=cube.dims, values=values.astype(np.uint8))


def _write_segments(path: Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    payload = _payload_path(path)
    chunks = []
    offset = 0
    segments = {}
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        segments[name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(raw)
        offset += len(raw)
    header = dict(header, arrays=segments, payload=payload.name)
    _atomic_write(payload, b"".join(chunks))
    _write_json(path, header)


def _read_segments(path: Path, header: dict) -> dict[str, np.ndarray]:
    segments = header.get("arrays", {})
    total = sum(int(np.prod(seg["shape"])) * 8 for seg in segments.values())
    blob = _read_payload(_payload_path(path, header), total)
    out = {}
    for name, seg in segments.items():
        shape = tuple(seg["shape"])
        count = int(np.prod(shape))
        start = int(seg["offset"])
        out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape)
    return out


def save_stats(stats: BackgroundStats, path: str | Path) -> None:
    arrays = {"mean": stats.mean, "covariance": stats.covariance}
    if stats.precision is not None:
        arrays["precision"] = stats.precision
    header = {
        "format": STATS_FORMAT,
        "m": stats.n_bands,
        "ridge": stats.ridge,
        "precision_rcond": stats.precision_rcond,
    }
    _write_segments(Path(path), header, arrays)


def load_stats(path: str | Path) -> BackgroundStats:
    path = Path(path)
    header = _read_json(path, STATS_FORMAT)
    arrays = _read_segments(path, header)
    return BackgroundStats(
        mean=arrays["mean"],
        covariance=arrays["covariance"],
        precision=arrays.get("precision"),
        precision_rcond=header.get("precision_rcond"),
        ridge=float(header.get("ridge", 0.0)),
    )


def save_model(model: GraphModel, path: str | Path) -> None:
    arrays = {
        "weights": model.weights.matrix,
        "degrees": model.degrees,
        "laplacian": model.laplacian,
    }
    if model.mean is not None:
        arrays["mean"] = model.mean
    if model.eigenvalues is not None:
        arrays["eigenvalues"] = model.eigenvalues
        arrays["eigenvectors"] = model.eigenvectors
    header = {
        "format": MODEL_FORMAT,
        "order": model.order,
        "variant": model.variant,
        "topology": model.weights.topology,
        "bands": model.weights.bands,
        "connectivity": model.weights.connectivity,
        "clamped": model.weights.clamped,
    }
    _write_segments(Path(path), header, arrays)


def load_model(path: str | Path) -> GraphModel:
    path = Path(path)
    header = _read_json(path, MODEL_FORMAT)
    arrays = _read_segments(path, header)
    weights = WeightMatrix(
        matrix=arrays["weights"],
        topology=header["topology"],
        bands=int(header["bands"]),
        connectivity=header.get("connectivity"),
        clamped=int(header.get("clamped", 0)),
    )
    return GraphModel(
        weights=weights,
        degrees=arrays["degrees"],
        laplacian=arrays["laplacian"],
        variant=header["variant"],
        mean=arrays.get("mean"),
        eigenvalues=arrays.get("eigenvalues"),
        eigenvectors=arrays.get("eigenvectors"),
    )


def discard_bands(cube: ImageCube, band_list: Sequence[int]) -> ImageCube:
    """Drop the given 1-based bands, preserving the order of the rest."""
    if not band_list:
        return cube
    bands = [int(b) for b in band_list]
    for b in bands:
        if not 1 <= b <= cube.n_bands:
            raise ValidationError(
                f"band index {b} outside the valid range [1, {cube.n_bands}]", band=b
            )
    if len(set(bands)) != len(bands):
        raise ValidationError("band discard list contains duplicates")
    drop = {b - 1 for b in bands}
    keep = [j for j in range(cube.n_bands) if j not in drop]
    if not keep:
        raise ValidationError("cannot discard every band")
    labels = None
    if cube.band_labels is not None:
        labels = tuple(cube.band_labels[j] for j in keep)
    return ImageCube(dims=cube.dims, data=cube.data[..., keep], band_labels=labels)


_ENVI_DTYPES = {1: "u1", 2: "<i2", 3: "<i4", 4: "<f4", 5: "<f8", 12: "<u2"}


def convert_envi(header_path: str | Path, out_path: str | Path) -> ImageCube:
    """Minimal ENVI-raster importer: parse the .hdr, rewrite as a cube.

    Supports bip/bil/bsq interleaves and the common integer/float data
    types; everything else is rejected. Convenience only, not a full ENVI
    implementation.
    """
    header_path = Path(header_path)
    fields: dict[str, str] = {}
    text = header_path.read_text()
    key = None
    depth = 0
    for line in text.splitlines():
        if "=" in line and depth == 0:
            key, _, value = line.partition("=")
            key = key.strip().lower()
            value = value.strip()
            depth = value.count("{") - value.count("}")
            fields[key] = value.strip("{} ")
        elif key and depth > 0:
            depth += line.count("{") - line.count("}")
            fields[key] += " " + line.strip("{} ")
    try:
        samples = int(fields["samples"])
        lines = int(fields["lines"])
        bands = int(fields["bands"])
        data_type = int(fields["data type"])
        interleave = fields.get("interleave", "bsq").lower()
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{header_path}: missing or malformed ENVI fields: {exc}") from exc
    if data_type not in _ENVI_DTYPES:
        raise DataFormatError(f"{header_path}: unsupported ENVI data type {data_type}")
    if int(fields.get("byte order", "0")) != 0:
        raise DataFormatError(f"{header_path}: only little-endian ENVI rasters are supported")
    offset = int(fields.get("header offset", "0"))
    raw_path = header_path.with_suffix("")
    if not raw_path.exists():
        raw_path = header_path.with_suffix(".img")
    if not raw_path.exists():
        raise DataFormatError(f"no raster found next to {header_path}", path=str(header_path))
    dtype = np.dtype(_ENVI_DTYPES[data_type])
    count = samples * lines * bands
    blob = raw_path.read_bytes()
    needed = offset + count * dtype.itemsize
    if len(blob) < needed:
        raise DataFormatError(
            f"raster {raw_path} holds {len(blob)} bytes, expected at least {needed}",
            expected=needed,
            actual=len(blob),
        )
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    if interleave == "bip":
        data = raw.reshape(lines, samples, bands)
    elif interleave == "bil":
        data = raw.reshape(lines, bands, samples).transpose(0, 2, 1)
    elif interleave == "bsq":
        data = raw.reshape(bands, lines, samples).transpose(1, 2, 0)
    else:
        raise DataFormatError(f"{header_path}: unsupported interleave {interleave!r}")
    cube = ImageCube(dims=(lines, samples), data=data.astype(np.float64))
    write_cube(cube, out_path, provenance={"source": header_path.name, "interleave": interleave})
    return cube
