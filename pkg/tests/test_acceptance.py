"""Acceptance gate: one test per shipped guarantee, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS/FAIL
lines. Tolerances and floors are pinned here; the synthetic end-to-end
floors were frozen from the oracle run recorded alongside the suite.
"""

import json
import os
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from ladkit.cli import _chain_precision, main
from ladkit.cube import ImageCube, Mask
from ladkit.cubeio import discard_bands, read_scores
from ladkit.detectors import (
    LaplacianAnomalyDetector,
    RXDetector,
    lad_score,
    rxd_p_score,
    rxd_score,
)
from ladkit.errors import LadkitError
from ladkit.evaluation import best_threshold, confusion, f1_from_counts, soi
from ladkit.graph import (
    WeightMatrix,
    build_laplacian,
    cauchy_weights,
    eigendecompose,
    partial_correlation_weights,
    spatial_spectral_weights,
)
from ladkit.instrumentation import counters
from ladkit.stats import BackgroundStats, estimate_background_stats
from ladkit.synthetic import band_std, sample_gmrf_scene, square_line_mask
from ladkit.transforms import TruncationPolicy


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException as exc:
        status = "SKIP" if isinstance(exc, pytest.skip.Exception) else "FAIL"
        print(f"[acceptance] {name}: {status}")
        raise
    print(f"[acceptance] {name}: PASS")


def cube_from_pixels(pixels):
    pixels = np.asarray(pixels, dtype=np.float64)
    return ImageCube(dims=(pixels.shape[0], 1), data=pixels[:, None, :])


def random_symmetric_weights(rng, n):
    w = rng.uniform(0.0, 1.0, size=(n, n))
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(matrix=w)


def test_criterion_1_mahalanobis_eigenbasis_identity():
    with criterion("C1 full-basis eigenspace score equals direct Mahalanobis"):
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        for _ in range(100):
            m = int(rng.integers(4, 51))
            a = rng.standard_normal((m, m))
            cov = a @ a.T + 0.05 * np.eye(m)
            stats = BackgroundStats(
                mean=rng.standard_normal(m),
                covariance=cov,
                precision=np.linalg.inv(cov),
            )
            cube = cube_from_pixels(
                rng.standard_normal((1000, m)) * rng.uniform(0.5, 2.0) + stats.mean
            )
            direct = rxd_score(cube, stats).flat
            eigenspace = rxd_p_score(cube, stats, TruncationPolicy.full()).flat
            assert np.all(np.abs(direct - eigenspace) <= 1e-8 * (1.0 + direct))
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"criterion 1 took {elapsed:.2f}s"


def test_criterion_2_quadratic_form_equals_spectral_sum():
    with criterion("C2 direct Laplacian quadratic form equals spectral sum"):
        rng = np.random.default_rng(102)
        start = time.perf_counter()

        def spectral_weight_builders(m):
            mean = rng.uniform(1.0, 5.0, m)
            yield cauchy_weights(mean, alpha=float(mean.mean())), mean
            pix = rng.standard_normal((max(4 * m, 256), m)) @ rng.standard_normal((m, m))
            stats = estimate_background_stats(cube_from_pixels(pix), compute_precision=True, ridge=1e-8)
            yield partial_correlation_weights(stats), stats.mean

        cases = []
        for m in (16, 128):
            for weights, mean in spectral_weight_builders(m):
                cases.append((weights, mean, None))
        for m, connectivity in ((25, 4), (18, 6)):
            for weights, mean in spectral_weight_builders(m):
                cases.append(
                    (spatial_spectral_weights(weights, 1.0, connectivity), mean, connectivity)
                )
        for weights, mean, connectivity in cases:
            for variant in ("combinatorial", "symmetric_normalized"):
                model = eigendecompose(build_laplacian(weights, variant, mean=mean))
                n = model.order
                assert n <= 128
                signals = rng.standard_normal((200, n))
                direct = np.einsum("ij,ij->i", signals @ model.laplacian, signals)
                coeffs = signals @ model.eigenvectors
                spectral = (coeffs**2 * model.eigenvalues).sum(axis=1)
                assert np.all(np.abs(direct - spectral) <= 1e-10 * (1.0 + np.abs(direct)))
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"criterion 2 took {elapsed:.2f}s"


def test_criterion_3_laplacian_properties():
    with criterion("C3 combinatorial L annihilates constants; normalized spectrum in [0,2]"):
        rng = np.random.default_rng(103)
        for _ in range(100):
            n = int(rng.integers(2, 48))
            weights = random_symmetric_weights(rng, n)
            comb = build_laplacian(weights, "combinatorial")
            assert np.abs(comb.laplacian @ np.ones(n)).max() <= 1e-10
            sym = build_laplacian(weights, "symmetric_normalized")
            vals = np.linalg.eigvalsh(sym.laplacian)
            assert vals[0] >= -1e-9
            assert vals[-1] <= 2.0 + 1e-9


def test_criterion_4_overlap_index_equals_f1():
    with criterion("C4 overlap index equals F1 exactly on 10^4 mask pairs"):
        rng = np.random.default_rng(104)
        checked = 0
        while checked < 10_000:
            k = int(rng.integers(1, 48))
            a = rng.integers(0, 2, k).astype(np.uint8)
            b = (rng.random(k) < rng.random()).astype(np.uint8)
            if a.sum() + b.sum() == 0:
                continue
            pred = Mask(dims=(k, 1), values=a.reshape(-1, 1))
            truth = Mask(dims=(k, 1), values=b.reshape(-1, 1))
            assert soi(pred, truth) == f1_from_counts(confusion(pred, truth))
            checked += 1


def test_criterion_5_brute_force_quadratic_oracle():
    with criterion("C5 Laplacian score equals exhaustive edge-sum oracle (n <= 16)"):
        rng = np.random.default_rng(105)
        for n in range(2, 17):
            weights = random_symmetric_weights(rng, n)
            mean = rng.standard_normal(n)
            model = build_laplacian(weights, "combinatorial", mean=mean)
            pixels = rng.standard_normal((25, n)) + mean
            scores = lad_score(cube_from_pixels(pixels), model).flat
            for i in range(25):
                s = pixels[i] - mean
                oracle = 0.0
                for a in range(n):
                    for b in range(a + 1, n):
                        oracle += weights.matrix[a, b] * (s[a] - s[b]) ** 2
                assert abs(scores[i] - oracle) <= 1e-9 * (1.0 + abs(oracle))


# Floors frozen from the seeded oracle run (seed 20240811): observed
# RXD 0.9537, LAD(L_Q) 1.0, LAD(L_C) 1.0; criterion requires >= 0.9.
GMRF_SEED = 20240811
FROZEN_FLOORS = {"rxd": 0.94, "lad_q": 0.99, "lad_c": 0.99}


def _gmrf_case():
    m = 8
    precision = _chain_precision(m)
    mask = square_line_mask((64, 64))
    shift = 6.0 * band_std(precision) * (-1.0) ** np.arange(m)
    return sample_gmrf_scene((64, 64), m, precision, anomaly=(mask, shift), seed=GMRF_SEED)


def test_criterion_6_synthetic_end_to_end():
    with criterion("C6 seeded GMRF implant: best-threshold SOI at frozen floors"):
        start = time.perf_counter()
        cube, truth = _gmrf_case()
        results = {}
        results["rxd"] = best_threshold(RXDetector().fit(cube).score_map(cube), truth)[1]
        lad_q = LaplacianAnomalyDetector(weights="partial-correlation")
        results["lad_q"] = best_threshold(lad_q.fit(cube).score_map(cube), truth)[1]
        lad_c = LaplacianAnomalyDetector(weights="cauchy", alpha=1.0)
        results["lad_c"] = best_threshold(lad_c.fit(cube).score_map(cube), truth)[1]
        for name, value in results.items():
            assert value >= 0.9, f"{name} reached SOI {value:.4f} < 0.9"
            assert value >= FROZEN_FLOORS[name], (
                f"{name} reached SOI {value:.4f} < frozen floor {FROZEN_FLOORS[name]}"
            )
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"criterion 6 took {elapsed:.2f}s"


def test_criterion_7_inversion_free_detection(tmp_path):
    with criterion("C7 Cauchy-graph detection runs without inversions or eigendecompositions"):
        scene = tmp_path / "scene.json"
        truth = tmp_path / "truth.pgm"
        assert main([
            "gmrf", "--dims", "48", "48", "--bands", "6", "--precision", "chain",
            "--squares", "--seed", "1", "--output", str(scene), "--truth-out", str(truth),
        ]) == 0
        report_path = tmp_path / "report.json"
        before = counters.snapshot()
        assert main([
            "detect", "--input", str(scene), "--detector", "lad", "--weights", "cauchy",
            "--alpha", "1.0", "--output", str(tmp_path / "scores.json"),
            "--report", str(report_path),
        ]) == 0
        after = counters.snapshot()
        assert after["inversions"] == before["inversions"]
        assert after["eigendecompositions"] == before["eigendecompositions"]
        report = json.loads(report_path.read_text())
        assert report["counters"] == {"inversions": 0, "eigendecompositions": 0}


def _load_salinas(directory: Path):
    from scipy.io import loadmat

    def grab(path):
        data = loadmat(path)
        arrays = [v for v in data.values() if isinstance(v, np.ndarray) and v.ndim >= 2]
        return max(arrays, key=lambda a: a.size)

    scene = None
    for name in ("salinas_corrected.mat", "Salinas_corrected.mat"):
        if (directory / name).exists():
            scene = grab(directory / name).astype(np.float64)
            break
    if scene is None:
        for name in ("salinas.mat", "Salinas.mat"):
            if (directory / name).exists():
                from ladkit.cubeio import WATER_ABSORPTION_BANDS

                raw = grab(directory / name).astype(np.float64)
                cube = ImageCube(dims=raw.shape[:2], data=raw)
                scene = discard_bands(cube, list(WATER_ABSORPTION_BANDS)).data
                break
    gt = None
    for name in ("salinas_gt.mat", "Salinas_gt.mat"):
        if (directory / name).exists():
            gt = grab(directory / name).astype(np.int64)
            break
    return scene, gt


def test_criterion_8_salinas_implant():
    data_dir = os.environ.get("LADKIT_SALINAS_DIR")
    with criterion("C8 Salinas class-14 implant: LAD(partial-correlation) SOI >= 0.85"):
        if not data_dir or not Path(data_dir).is_dir():
            pytest.skip("Salinas dataset not available (set LADKIT_SALINAS_DIR)")
        scene, gt = _load_salinas(Path(data_dir))
        if scene is None or gt is None:
            pytest.skip("Salinas .mat files not found in LADKIT_SALINAS_DIR")
        assert scene.shape[-1] == 204, f"expected 204 bands, found {scene.shape[-1]}"
        crop = ImageCube(dims=(150, 126), data=scene[30:180, 40:166])
        mask = square_line_mask((150, 126))
        from ladkit.synthetic import ImplantSpec, implant

        source = ImageCube(dims=gt.shape, data=scene)
        spec = ImplantSpec(mask=mask, source_labels=gt, k=14, seed=0)
        implanted = implant(crop, spec, source)
        detector = LaplacianAnomalyDetector(weights="partial-correlation", ridge=1e-8)
        scores = detector.fit(implanted).score_map(implanted)
        _, value = best_threshold(scores, mask)
        assert value >= 0.85, f"LAD(L_Q) reached SOI {value:.4f} < 0.85"


def test_criterion_9_deterministic_cli_runs(tmp_path):
    with criterion("C9 fixed-seed CLI runs produce byte-identical outputs"):
        outputs = {}
        for tag in ("one", "two"):
            base = tmp_path / tag
            base.mkdir()
            steps = [
                ["gmrf", "--dims", "48", "48", "--bands", "5", "--precision", "chain",
                 "--squares", "--seed", "99", "--output", str(base / "scene.json"),
                 "--truth-out", str(base / "truth.pgm")],
                ["detect", "--input", str(base / "scene.json"), "--detector", "lad",
                 "--weights", "cauchy", "--alpha", "1.0",
                 "--output", str(base / "scores.json"), "--report", str(base / "report.json")],
                ["threshold", "--scores", str(base / "scores.json"), "--t", "0.2",
                 "--output", str(base / "mask.pgm")],
                ["eval", "--scores", str(base / "scores.json"),
                 "--truth", str(base / "truth.pgm"),
                 "--output", str(base / "eval.json"), "--roc-csv", str(base / "roc.csv")],
            ]
            for step in steps:
                result = subprocess.run(
                    [sys.executable, "-m", "ladkit.cli", *step],
                    capture_output=True, text=True,
                )
                assert result.returncode == 0, result.stderr
            outputs[tag] = {p.name: p.read_bytes() for p in sorted(base.iterdir())}
        assert outputs["one"].keys() == outputs["two"].keys()
        for name, blob in outputs["one"].items():
            assert blob == outputs["two"][name], f"{name} differs between runs"


def test_criterion_10_model_build_and_scoring_scale():
    with criterion("C10 O(m^2) model build under 50 ms; throughput linear within 20%"):
        rng = np.random.default_rng(110)
        mean = rng.uniform(100.0, 4000.0, 204)

        def build():
            return build_laplacian(cauchy_weights(mean), "combinatorial", mean=mean)

        model = build()  # warm-up
        build_time = min(
            (lambda t0: (build(), time.perf_counter() - t0)[1])(time.perf_counter())
            for _ in range(5)
        )
        assert build_time < 0.05, f"model build took {build_time * 1e3:.1f} ms"

        # Linearity in N: one 10^5-pixel call vs ten disjoint 10^4-pixel
        # calls over the same bytes, so both sides see identical memory
        # traffic and the ratio isolates per-pixel scoring cost.
        big = ImageCube(dims=(1000, 100), data=rng.standard_normal((1000, 100, 204)))
        small = [
            ImageCube(dims=(100, 100), data=big.data[i * 100:(i + 1) * 100].copy())
            for i in range(10)
        ]
        lad_score(big, model)
        for cube in small:
            lad_score(cube, model)

        def time_small():
            t0 = time.perf_counter()
            for cube in small:
                lad_score(cube, model)
            return time.perf_counter() - t0

        def time_big():
            t0 = time.perf_counter()
            lad_score(big, model)
            return time.perf_counter() - t0

        t_small, t_big = np.inf, np.inf
        for _ in range(7):  # interleaved so load drift hits both sides
            t_small = min(t_small, time_small())
            t_big = min(t_big, time_big())
        ratio = t_big / t_small
        assert 0.8 <= ratio <= 1.2, f"throughput ratio {ratio:.3f} outside 20% band"
