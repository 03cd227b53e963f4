"""Command-line interface.

Subcommands: ``model`` (build and serialize a graph model plus background
statistics), ``detect`` (write a score map), ``threshold``, ``eval``,
``roc``, ``implant``, ``gmrf``, ``energy``, and ``convert-envi``. Options
can also be supplied through a JSON config file (``--config``); explicit
flags win over config values. Validation problems are collected and
reported all at once; runtime errors appear as one structured JSON object
on stderr. Verbosity is controlled by the ``LADKIT_LOG`` environment
variable; everything else flows through flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import cubeio
from .cube import ImageCube, Mask
from .detectors import (
    apply_threshold,
    lad_p_score,
    lad_s_score,
    lad_score,
    rxd_p_score,
    rxd_score,
)
from .errors import LadkitError, ParameterError, ValidationError
from .evaluation import confusion, evaluate, roc_curve, soi
from .graph import (
    build_laplacian,
    cauchy_weights,
    eigendecompose,
    partial_correlation_weights,
    spatial_spectral_weights,
)
from .instrumentation import counters
from .stats import estimate_background_stats
from .synthetic import ImplantSpec, band_std, implant, sample_gmrf_scene, square_line_mask
from .transforms import TruncationPolicy, cumulative_energy_curve, klt_basis

log = logging.getLogger("ladkit")

DETECTORS = ("rxd", "rxd-p", "lad", "lad-p", "lad-s")
WEIGHT_KINDS = ("cauchy", "partial-correlation")
LAPLACIAN_KINDS = ("sym", "comb")

_VARIANT = {"sym": "symmetric_normalized", "comb": "combinatorial"}


def _emit(obj: dict, stream=None) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True), file=stream or sys.stdout)


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _parse_bands(value) -> list[int]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [int(b) for b in value]
    if value == "water":
        return list(cubeio.WATER_ABSORPTION_BANDS)
    return [int(b) for b in str(value).split(",") if b.strip()]


def _load_cube(cfg: dict) -> ImageCube:
    cube = cubeio.read_cube(cfg["input"])
    bands = _parse_bands(cfg.get("discard_bands"))
    if bands:
        cube = cubeio.discard_bands(cube, bands)
    return cube


def _policy(cfg: dict) -> TruncationPolicy:
    if cfg.get("p") is not None:
        return TruncationPolicy.fixed(cfg["p"])
    return TruncationPolicy.energy(cfg["psi"])


def _build_model(cfg: dict, cube: ImageCube, spatial: bool):
    """Estimate stats and build the graph model a detect/model run needs."""
    if cfg.get("model"):
        stats = cubeio.load_stats(cfg["stats"]) if cfg.get("stats") else None
        return stats, cubeio.load_model(cfg["model"])
    if cfg.get("stats"):
        stats = cubeio.load_stats(cfg["stats"])
    else:
        needs_precision = cfg["weights"] == "partial-correlation"
        stats = estimate_background_stats(
            cube, compute_precision=needs_precision, ridge=cfg["ridge"]
        )
    if cfg["weights"] == "partial-correlation":
        spectral = partial_correlation_weights(stats)
    else:
        alpha = cfg.get("alpha")
        spectral = cauchy_weights(stats.mean, alpha="auto" if alpha is None else alpha)
    weights = spectral
    if spatial:
        expected = 4 if len(cube.dims) == 2 else 6
        connectivity = cfg.get("connectivity") or expected
        if connectivity != expected:
            raise ParameterError(
                f"connectivity {connectivity} is inconsistent with a "
                f"{len(cube.dims)}-D grid (expected {expected})",
                connectivity=connectivity,
                grid_dims=len(cube.dims),
            )
        weights = spatial_spectral_weights(
            spectral, spatial_weight=cfg["spatial_weight"], connectivity=connectivity
        )
    model = build_laplacian(weights, variant=_VARIANT[cfg["laplacian"]], mean=stats.mean)
    return stats, model


def _grid(cfg: dict) -> np.ndarray:
    return np.linspace(0.0, 1.0, int(cfg["grid_points"]))


# ---------------------------------------------------------------------------
# subcommands


def cmd_model(cfg: dict) -> dict:
    cube = _load_cube(cfg)
    stats, model = _build_model(cfg, cube, spatial=bool(cfg.get("spatial")))
    if cfg.get("eigen"):
        model = eigendecompose(model)
    cubeio.save_model(model, cfg["output"])
    if cfg.get("stats_output") and stats is not None:
        cubeio.save_stats(stats, cfg["stats_output"])
    return {
        "command": "model",
        "order": model.order,
        "variant": model.variant,
        "topology": model.weights.topology,
        "clamped_weights": model.weights.clamped,
        "eigensystem": model.eigenvalues is not None,
        "output": Path(cfg["output"]).name,
    }


def cmd_detect(cfg: dict) -> dict:
    before = counters.snapshot()
    cube = _load_cube(cfg)
    detector = cfg["detector"]
    truncation = None
    if detector in ("rxd-p", "lad-p"):
        policy = _policy(cfg)
        truncation = {"mode": policy.mode, "p": policy.p, "psi": policy.psi}
    if detector in ("rxd", "rxd-p"):
        if cfg.get("stats"):
            stats = cubeio.load_stats(cfg["stats"])
        else:
            stats = estimate_background_stats(
                cube, compute_precision=detector == "rxd", ridge=cfg["ridge"]
            )
        if detector == "rxd":
            scores = rxd_score(cube, stats)
        else:
            scores = rxd_p_score(cube, stats, policy)
    else:
        _, model = _build_model(cfg, cube, spatial=detector == "lad-s")
        if detector == "lad":
            scores = lad_score(cube, model)
        elif detector == "lad-s":
            scores = lad_s_score(cube, model)
        else:
            model = eigendecompose(model)
            scores = lad_p_score(cube, model, policy)
    after = counters.snapshot()
    provenance = {"detector": detector, "input": Path(cfg["input"]).name}
    cubeio.write_scores(scores, cfg["output"], provenance=provenance)
    report = {
        "command": "detect",
        "detector": detector,
        "counters": {k: after[k] - before[k] for k in after},
        "truncation": truncation,
        "score_min": float(scores.scores.min()),
        "score_max": float(scores.scores.max()),
        "output": Path(cfg["output"]).name,
    }
    if cfg.get("report"):
        _atomic_text(Path(cfg["report"]), json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_threshold(cfg: dict) -> dict:
    scores = cubeio.read_scores(cfg["scores"])
    mask = apply_threshold(scores, cfg["t"])
    cubeio.write_mask(mask, cfg["output"])
    return {
        "command": "threshold",
        "t": cfg["t"],
        "flagged": mask.n_positive,
        "pixels": int(mask.flat.size),
        "output": Path(cfg["output"]).name,
    }


def cmd_eval(cfg: dict) -> dict:
    truth = cubeio.read_mask(cfg["truth"])
    if cfg.get("pred"):
        pred = cubeio.read_mask(cfg["pred"])
        counts = confusion(pred, truth)
        summary = {
            "command": "eval",
            "confusion": counts.to_dict(),
            "soi": soi(pred, truth),
        }
    else:
        scores = cubeio.read_scores(cfg["scores"])
        report = evaluate(scores, truth, grid=_grid(cfg), t=cfg.get("t"))
        summary = dict(report.to_dict(), command="eval")
        del summary["roc"]
        if cfg.get("roc_csv"):
            _write_roc_csv(report.roc, Path(cfg["roc_csv"]))
    if cfg.get("output"):
        _atomic_text(Path(cfg["output"]), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _write_roc_csv(points, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["fpr", "tpr", "t"])
    for fpr, tpr, t in points:
        writer.writerow([repr(fpr), repr(tpr), repr(t)])
    _atomic_text(path, buf.getvalue())


def cmd_roc(cfg: dict) -> dict:
    scores = cubeio.read_scores(cfg["scores"])
    truth = cubeio.read_mask(cfg["truth"])
    points = roc_curve(scores, truth, grid=_grid(cfg))
    _write_roc_csv(points, Path(cfg["output"]))
    return {"command": "roc", "points": len(points), "output": Path(cfg["output"]).name}


def cmd_implant(cfg: dict) -> dict:
    target = cubeio.read_cube(cfg["target"])
    source = cubeio.read_cube(cfg["source"])
    labels_cube = cubeio.read_cube(cfg["labels"])
    if labels_cube.n_bands != 1:
        raise ValidationError("label cube must have a single integer channel")
    if cfg.get("mask"):
        mask = cubeio.read_mask(cfg["mask"])
        mask_meta = {"source": Path(cfg["mask"]).name}
    else:
        mask = square_line_mask(
            target.dims,
            sides=tuple(range(1, int(cfg["max_side"]) + 1)),
            rotation=cfg["rotation"],
            spacing=int(cfg["spacing"]),
            separation=int(cfg["separation"]),
        )
        mask_meta = {
            "generated": "square-line",
            "max_side": int(cfg["max_side"]),
            "rotation": cfg["rotation"],
            "spacing": int(cfg["spacing"]),
            "separation": int(cfg["separation"]),
        }
    spec = ImplantSpec(
        mask=mask, source_labels=labels_cube.data[..., 0], k=int(cfg["class_id"]), seed=int(cfg["seed"])
    )
    out = implant(target, spec, source)
    provenance = {
        "class": int(cfg["class_id"]),
        "seed": int(cfg["seed"]),
        "mask": mask_meta,
    }
    cubeio.write_cube(out, cfg["output"], provenance=provenance)
    cubeio.write_mask(mask, cfg["truth_out"])
    return {
        "command": "implant",
        "implanted_pixels": mask.n_positive,
        "output": Path(cfg["output"]).name,
        "truth": Path(cfg["truth_out"]).name,
    }


def _chain_precision(m: int) -> np.ndarray:
    lap = np.zeros((m, m))
    for a in range(m - 1):
        lap[a, a] += 1.0
        lap[a + 1, a + 1] += 1.0
        lap[a, a + 1] -= 1.0
        lap[a + 1, a] -= 1.0
    return np.eye(m) + lap


def cmd_gmrf(cfg: dict) -> dict:
    m = int(cfg["bands"])
    kind = cfg["precision"]
    if kind == "identity":
        precision = np.eye(m)
    elif kind == "chain":
        precision = _chain_precision(m)
    else:
        precision = np.asarray(json.loads(Path(kind).read_text()), dtype=np.float64)
    dims = tuple(int(d) for d in cfg["dims"])
    anomaly = None
    if cfg.get("anomaly_mask") or cfg.get("squares"):
        if cfg.get("anomaly_mask"):
            mask = cubeio.read_mask(cfg["anomaly_mask"])
        else:
            mask = square_line_mask(dims, rotation=cfg["rotation"])
        sigma = band_std(precision)
        signs = np.ones(m) if cfg["shift_pattern"] == "constant" else (-1.0) ** np.arange(m)
        anomaly = (mask, cfg["shift_sigma"] * sigma * signs)
    cube, truth = sample_gmrf_scene(dims, m, precision, anomaly=anomaly, seed=int(cfg["seed"]))
    provenance = {"generator": "gmrf", "seed": int(cfg["seed"]), "precision": str(kind)}
    cubeio.write_cube(cube, cfg["output"], provenance=provenance)
    cubeio.write_mask(truth, cfg["truth_out"])
    return {
        "command": "gmrf",
        "dims": list(dims),
        "bands": m,
        "anomalous_pixels": truth.n_positive,
        "output": Path(cfg["output"]).name,
        "truth": Path(cfg["truth_out"]).name,
    }


def cmd_energy(cfg: dict) -> dict:
    cube = _load_cube(cfg)
    basis = cfg["basis"]
    if basis == "rxd":
        stats = estimate_background_stats(cube)
        eigvals, eigvecs = klt_basis(stats)
        coeffs = (cube.pixels - stats.mean) @ eigvecs
        floor = 1e-12 * max(float(eigvals[0]), 0.0)
        with np.errstate(divide="ignore"):
            weights_col = np.where(eigvals > floor, 1.0 / eigvals, np.inf)
    elif basis == "lad":
        _, model = _build_model(cfg, cube, spatial=False)
        model = eigendecompose(model)
        eigvals, eigvecs = model.require_eigensystem()
        coeffs = (cube.pixels - model.require_mean()) @ eigvecs
        weights_col = eigvals
    else:
        raise ParameterError(f"basis must be 'rxd' or 'lad', got {basis!r}")
    energies = cumulative_energy_curve(coeffs)
    total = float(energies[-1])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["j", "eigenvalue", "score_weight", "cumulative_energy", "energy_ratio"])
    for j in range(eigvals.shape[0]):
        ratio = energies[j] / total if total > 0 else math.nan
        writer.writerow(
            [j + 1, repr(float(eigvals[j])), repr(float(weights_col[j])),
             repr(float(energies[j])), repr(float(ratio))]
        )
    _atomic_text(Path(cfg["output"]), buf.getvalue())
    return {
        "command": "energy",
        "basis": basis,
        "components": int(eigvals.shape[0]),
        "total_energy": total,
        "output": Path(cfg["output"]).name,
    }


def cmd_convert_envi(cfg: dict) -> dict:
    cube = cubeio.convert_envi(cfg["header"], cfg["output"])
    return {
        "command": "convert-envi",
        "dims": list(cube.dims),
        "bands": cube.n_bands,
        "output": Path(cfg["output"]).name,
    }


# ---------------------------------------------------------------------------
# argument plumbing: argparse definitions, config merging, bulk validation

_MODEL_DEFAULTS = {
    "weights": "cauchy",
    "laplacian": "sym",
    "alpha": None,
    "ridge": 0.0,
    "spatial": False,
    "spatial_weight": 1.0,
    "connectivity": None,
    "discard_bands": None,
    "stats": None,
    "model": None,
}

DEFAULTS: dict[str, dict] = {
    "model": {**_MODEL_DEFAULTS, "eigen": False, "stats_output": None},
    "detect": {**_MODEL_DEFAULTS, "detector": "lad", "p": None, "psi": 0.99, "report": None},
    "threshold": {"t": 0.5},
    "eval": {"pred": None, "scores": None, "t": None, "grid_points": 51,
             "roc_csv": None, "output": None},
    "roc": {"grid_points": 51},
    "implant": {"mask": None, "seed": 0, "max_side": 6, "rotation": math.pi / 6,
                "spacing": 2, "separation": 3},
    "gmrf": {"precision": "identity", "seed": 0, "anomaly_mask": None, "squares": False,
             "shift_sigma": 6.0, "shift_pattern": "alternating", "rotation": math.pi / 6},
    "energy": {**_MODEL_DEFAULTS, "basis": "rxd"},
    "convert-envi": {},
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "model": ("input", "output"),
    "detect": ("input", "output"),
    "threshold": ("scores", "output"),
    "eval": ("truth",),
    "roc": ("scores", "truth", "output"),
    "implant": ("target", "source", "labels", "class_id", "output", "truth_out"),
    "gmrf": ("dims", "bands", "output", "truth_out"),
    "energy": ("input", "output"),
    "convert-envi": ("header", "output"),
}

COMMANDS = {
    "model": cmd_model,
    "detect": cmd_detect,
    "threshold": cmd_threshold,
    "eval": cmd_eval,
    "roc": cmd_roc,
    "implant": cmd_implant,
    "gmrf": cmd_gmrf,
    "energy": cmd_energy,
    "convert-envi": cmd_convert_envi,
}


def _add_config_option(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=argparse.SUPPRESS,
                     help="JSON file with option values (flags win)")


def _add_model_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--weights", help="graph weights: cauchy | partial-correlation")
    sub.add_argument("--laplacian", help="laplacian variant: sym | comb")
    sub.add_argument("--alpha", type=float, help="Cauchy scale (default: auto)")
    sub.add_argument("--ridge", type=float, help="covariance inversion regularization")
    sub.add_argument("--spatial-weight", type=float, dest="spatial_weight",
                     help="weight of same-band neighbor edges")
    sub.add_argument("--connectivity", type=int,
                     help="4 (2-D) or 6 (3-D); default matches the grid")
    sub.add_argument("--discard-bands", dest="discard_bands",
                     help="comma-separated 1-based bands to drop, or 'water'")
    sub.add_argument("--stats", help="reuse serialized background statistics")
    sub.add_argument("--model", help="reuse a serialized graph model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ladkit",
        description="Graph-Laplacian and Mahalanobis anomaly detection for image cubes",
    )
    parser.add_argument("--config", help="JSON file with option values (flags win)")
    subs = parser.add_subparsers(dest="command")

    sub = subs.add_parser("model", help="build and serialize a graph model + statistics")
    sub.add_argument("--input", help="input cube header")
    sub.add_argument("--output", help="model header path")
    sub.add_argument("--stats-output", dest="stats_output", help="statistics header path")
    sub.add_argument("--spatial", action="store_const", const=True,
                     help="build the spatial-spectral graph")
    sub.add_argument("--eigen", action="store_const", const=True,
                     help="precompute the eigensystem")
    _add_model_options(sub)

    sub = subs.add_parser("detect", help="score a cube with a detector")
    sub.add_argument("--input", help="input cube header")
    sub.add_argument("--output", help="score map header path")
    sub.add_argument("--detector", help="rxd | rxd-p | lad | lad-p | lad-s")
    sub.add_argument("--p", type=int, help="fixed component count for *-p detectors")
    sub.add_argument("--psi", type=float, help="retained energy fraction for *-p detectors")
    sub.add_argument("--report", help="write the run report JSON here")
    _add_model_options(sub)

    sub = subs.add_parser("threshold", help="binarize a score map")
    sub.add_argument("--scores", help="score map header")
    sub.add_argument("--t", type=float, help="threshold fraction of the max score")
    sub.add_argument("--output", help="mask output path (.pgm for 2-D)")

    sub = subs.add_parser("eval", help="evaluate scores or a mask against ground truth")
    sub.add_argument("--scores", help="score map header (threshold sweep)")
    sub.add_argument("--pred", help="predicted mask (fixed prediction)")
    sub.add_argument("--truth", help="ground truth mask")
    sub.add_argument("--t", type=float, help="report confusion at this fraction")
    sub.add_argument("--grid-points", type=int, dest="grid_points",
                     help="threshold grid resolution")
    sub.add_argument("--roc-csv", dest="roc_csv", help="also write the ROC table here")
    sub.add_argument("--output", help="summary JSON path (default: stdout only)")

    sub = subs.add_parser("roc", help="write the ROC table for a score map")
    sub.add_argument("--scores", help="score map header")
    sub.add_argument("--truth", help="ground truth mask")
    sub.add_argument("--grid-points", type=int, dest="grid_points")
    sub.add_argument("--output", help="CSV output path")

    sub = subs.add_parser("implant", help="implant class pixels into a target cube")
    sub.add_argument("--target", help="target cube header")
    sub.add_argument("--source", help="labeled source cube header")
    sub.add_argument("--labels", help="per-pixel class map (single-channel cube)")
    sub.add_argument("--class-id", type=int, dest="class_id", help="class to draw from")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--mask", help="implant mask (default: generated square-line)")
    sub.add_argument("--max-side", type=int, dest="max_side")
    sub.add_argument("--rotation", type=float)
    sub.add_argument("--spacing", type=int)
    sub.add_argument("--separation", type=int)
    sub.add_argument("--output", help="implanted cube header path")
    sub.add_argument("--truth-out", dest="truth_out", help="truth mask path")

    sub = subs.add_parser("gmrf", help="sample a synthetic Gaussian scene")
    sub.add_argument("--dims", type=int, nargs="+", help="spatial extents")
    sub.add_argument("--bands", type=int)
    sub.add_argument("--precision", help="'identity', 'chain', or a JSON matrix path")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--anomaly-mask", dest="anomaly_mask", help="mask of shifted pixels")
    sub.add_argument("--squares", action="store_const", const=True,
                     help="use a generated square-line anomaly mask")
    sub.add_argument("--rotation", type=float)
    sub.add_argument("--shift-sigma", type=float, dest="shift_sigma",
                     help="mean shift in per-band standard deviations")
    sub.add_argument("--shift-pattern", dest="shift_pattern",
                     help="alternating | constant sign pattern")
    sub.add_argument("--output", help="scene cube header path")
    sub.add_argument("--truth-out", dest="truth_out", help="truth mask path")

    sub = subs.add_parser("energy", help="eigenvalue and cumulative-energy table")
    sub.add_argument("--input", help="input cube header")
    sub.add_argument("--basis", help="rxd (covariance) | lad (graph)")
    sub.add_argument("--output", help="CSV output path")
    _add_model_options(sub)

    sub = subs.add_parser("convert-envi", help="import an ENVI-style raster")
    sub.add_argument("--header", help="ENVI .hdr path")
    sub.add_argument("--output", help="cube header output path")

    for sub in subs.choices.values():
        _add_config_option(sub)
    return parser


def _resolve(args: argparse.Namespace, config: dict) -> tuple[dict, list[dict]]:
    command = args.command
    issues = []
    known = set(DEFAULTS[command]) | set(REQUIRED[command]) | {
        k for k in vars(args) if k not in ("command", "config")
    }
    for key in config:
        if key not in known:
            issues.append({"code": "bad-parameter",
                           "message": f"config key {key!r} is not used by '{command}'"})
    cfg = dict(DEFAULTS[command])
    cfg.update({k: v for k, v in config.items() if k in known})
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    return cfg, issues


def _validate(command: str, cfg: dict) -> list[dict]:
    issues = []

    def bad(message, **context):
        issues.append({"code": "bad-parameter", "message": message, "context": context})

    for key in REQUIRED[command]:
        if cfg.get(key) in (None, ""):
            flag = "--" + key.replace("_", "-")
            issues.append({"code": "missing-parameter", "message": f"{flag} is required"})
    if "detector" in cfg and cfg["detector"] not in DETECTORS:
        bad(f"detector must be one of {', '.join(DETECTORS)}", detector=cfg["detector"])
    if "weights" in cfg and cfg["weights"] not in WEIGHT_KINDS:
        bad(f"weights must be one of {', '.join(WEIGHT_KINDS)}", weights=cfg["weights"])
    if "laplacian" in cfg and cfg["laplacian"] not in LAPLACIAN_KINDS:
        bad(f"laplacian must be one of {', '.join(LAPLACIAN_KINDS)}", laplacian=cfg["laplacian"])
    if cfg.get("t") is not None and not 0.0 <= cfg["t"] <= 1.0:
        bad(f"t must lie in [0, 1], got {cfg['t']}")
    if cfg.get("psi") is not None and not 0.0 < cfg["psi"] <= 1.0:
        bad(f"psi must lie in (0, 1], got {cfg['psi']}")
    if cfg.get("p") is not None and cfg["p"] < 1:
        bad(f"p must be >= 1, got {cfg['p']}")
    if cfg.get("ridge") is not None and cfg["ridge"] < 0:
        bad(f"ridge must be nonnegative, got {cfg['ridge']}")
    if cfg.get("spatial_weight") is not None and cfg["spatial_weight"] < 0:
        bad(f"spatial weight must be nonnegative, got {cfg['spatial_weight']}")
    if cfg.get("grid_points") is not None and cfg["grid_points"] < 2:
        bad(f"grid needs at least 2 points, got {cfg['grid_points']}")
    if cfg.get("connectivity") not in (None, 4, 6):
        bad(f"connectivity must be 4 or 6, got {cfg['connectivity']}")
    if cfg.get("alpha") is not None and cfg["alpha"] <= 0:
        bad(f"alpha must be strictly positive, got {cfg['alpha']}")
    if command == "eval" and not cfg.get("scores") and not cfg.get("pred"):
        issues.append({"code": "missing-parameter",
                       "message": "eval needs --scores or --pred"})
    if command == "gmrf":
        if cfg.get("dims") is not None and len(cfg["dims"]) not in (2, 3):
            bad(f"dims must give 2 or 3 extents, got {cfg['dims']}")
        if cfg.get("shift_pattern") not in (None, "alternating", "constant"):
            bad(f"shift pattern must be 'alternating' or 'constant', got {cfg['shift_pattern']}")
        if cfg.get("bands") is not None and cfg["bands"] < 1:
            bad(f"bands must be >= 1, got {cfg['bands']}")
    if command == "energy" and cfg.get("basis") not in (None, "rxd", "lad"):
        bad(f"basis must be 'rxd' or 'lad', got {cfg['basis']}")
    return issues


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LADKIT_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    config = {}
    if getattr(args, "config", None):
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _emit({"errors": [{"code": "bad-config", "message": str(exc)}]}, sys.stderr)
            return 2
    cfg, issues = _resolve(args, config)
    issues += _validate(args.command, cfg)
    if issues:
        _emit({"errors": issues}, sys.stderr)
        return 2
    try:
        result = COMMANDS[args.command](cfg)
    except LadkitError as exc:
        _emit({"error": exc.to_dict()}, sys.stderr)
        return 1
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
