import json
import subprocess
import sys

import numpy as np
import pytest

from ladkit.cli import main
from ladkit.cube import ImageCube, Mask
from ladkit.cubeio import read_cube, read_mask, read_scores, write_cube, write_mask
from ladkit.instrumentation import counters


def run_cli(*args):
    return main([str(a) for a in args])


def run_subprocess(*args):
    return subprocess.run(
        [sys.executable, "-m", "ladkit.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
    )


@pytest.fixture
def scene(tmp_path):
    paths = {
        "cube": tmp_path / "scene.json",
        "truth": tmp_path / "truth.pgm",
    }
    code = run_cli(
        "gmrf", "--dims", 64, 64, "--bands", 6, "--precision", "chain", "--squares",
        "--seed", 11, "--output", paths["cube"], "--truth-out", paths["truth"],
    )
    assert code == 0
    return paths


class TestPipeline:
    @pytest.mark.parametrize(
        "detector,extra",
        [
            ("rxd", ()),
            ("rxd-p", ("--psi", "0.99")),
            ("lad", ("--weights", "cauchy", "--alpha", "1.0")),
            ("lad", ("--weights", "partial-correlation",)),
            ("lad-p", ("--weights", "cauchy", "--alpha", "1.0", "--p", "4")),
            ("lad-s", ("--weights", "cauchy", "--alpha", "1.0")),
        ],
    )
    def test_detect_threshold_eval(self, scene, tmp_path, detector, extra):
        scores = tmp_path / f"{detector}.json"
        assert run_cli(
            "detect", "--input", scene["cube"], "--detector", detector,
            "--output", scores, *extra,
        ) == 0
        mask_path = tmp_path / f"{detector}.pgm"
        assert run_cli("threshold", "--scores", scores, "--t", "0.25",
                       "--output", mask_path) == 0
        summary = tmp_path / f"{detector}_eval.json"
        assert run_cli("eval", "--scores", scores, "--truth", scene["truth"],
                       "--output", summary) == 0
        report = json.loads(summary.read_text())
        assert 0.0 <= report["best"]["soi"] <= 1.0
        assert sum(report["confusion"].values()) == 64 * 64

    def test_model_reuse(self, scene, tmp_path, capsys):
        model = tmp_path / "model.json"
        stats = tmp_path / "stats.json"
        assert run_cli(
            "model", "--input", scene["cube"], "--weights", "partial-correlation",
            "--output", model, "--stats-output", stats,
        ) == 0
        out_a = tmp_path / "a.json"
        out_b = tmp_path / "b.json"
        assert run_cli("detect", "--input", scene["cube"], "--detector", "lad",
                       "--weights", "partial-correlation", "--output", out_a) == 0
        assert run_cli("detect", "--input", scene["cube"], "--detector", "lad",
                       "--model", model, "--stats", stats, "--output", out_b) == 0
        a = read_scores(out_a)
        b = read_scores(out_b)
        assert a.scores.tobytes() == b.scores.tobytes()

    def test_roc_csv(self, scene, tmp_path):
        scores = tmp_path / "s.json"
        run_cli("detect", "--input", scene["cube"], "--detector", "rxd", "--output", scores)
        out = tmp_path / "roc.csv"
        assert run_cli("roc", "--scores", scores, "--truth", scene["truth"],
                       "--output", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "fpr,tpr,t"
        assert len(lines) == 52
        first = [float(x) for x in lines[1].split(",")]
        assert first == [1.0, 1.0, 0.0]

    def test_water_band_discard_flag(self, tmp_path):
        rng = np.random.default_rng(7)
        data = rng.integers(0, 4000, (10, 9, 224)).astype(np.float64)
        write_cube(ImageCube(dims=(10, 9), data=data), tmp_path / "aviris.json", dtype="u16")
        report_path = tmp_path / "r.json"
        assert run_cli(
            "detect", "--input", tmp_path / "aviris.json", "--detector", "lad",
            "--weights", "cauchy", "--discard-bands", "water",
            "--output", tmp_path / "s.json", "--report", report_path,
        ) == 0
        assert read_scores(tmp_path / "s.json").dims == (10, 9)
        assert run_cli(
            "energy", "--input", tmp_path / "aviris.json", "--basis", "rxd",
            "--discard-bands", "water", "--output", tmp_path / "e.csv",
        ) == 0
        assert len((tmp_path / "e.csv").read_text().splitlines()) == 205  # 204 + header

    @pytest.mark.parametrize("basis", ["rxd", "lad"])
    def test_energy_table_monotone(self, scene, tmp_path, basis):
        out = tmp_path / "energy.csv"
        assert run_cli("energy", "--input", scene["cube"], "--basis", basis,
                       "--weights", "cauchy", "--alpha", "1.0", "--output", out) == 0
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        assert len(rows) == 6
        ratios = [float(r[4]) for r in rows]
        assert all(b >= a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] == 1.0
        energies = [float(r[3]) for r in rows]
        assert all(b >= a for a, b in zip(energies, energies[1:]))
        eigenvalues = [float(r[1]) for r in rows]
        if basis == "rxd":
            assert all(a >= b for a, b in zip(eigenvalues, eigenvalues[1:]))
        else:
            assert all(a <= b for a, b in zip(eigenvalues, eigenvalues[1:]))


class TestNoInversionClaim:
    def test_cauchy_lad_touches_no_inversion_or_eigendecomposition(self, scene, tmp_path):
        report_path = tmp_path / "report.json"
        before = counters.snapshot()
        assert run_cli(
            "detect", "--input", scene["cube"], "--detector", "lad",
            "--weights", "cauchy", "--alpha", "1.0",
            "--output", tmp_path / "s.json", "--report", report_path,
        ) == 0
        after = counters.snapshot()
        assert after == before
        report = json.loads(report_path.read_text())
        assert report["counters"] == {"inversions": 0, "eigendecompositions": 0}

    def test_rxd_does_invert(self, scene, tmp_path):
        report_path = tmp_path / "report.json"
        run_cli("detect", "--input", scene["cube"], "--detector", "rxd",
                "--output", tmp_path / "s.json", "--report", report_path)
        report = json.loads(report_path.read_text())
        assert report["counters"]["inversions"] == 1


class TestImplantCommand:
    def test_implant_writes_cube_and_truth(self, tmp_path):
        rng = np.random.default_rng(0)
        target = ImageCube(dims=(48, 40), data=rng.uniform(0, 1, (48, 40, 3)))
        source = ImageCube(dims=(30, 30), data=rng.uniform(5, 6, (30, 30, 3)))
        labels = np.zeros((30, 30, 1))
        labels[:9, :9, 0] = 14
        write_cube(target, tmp_path / "target.json")
        write_cube(source, tmp_path / "source.json")
        write_cube(ImageCube(dims=(30, 30), data=labels), tmp_path / "labels.json")
        assert run_cli(
            "implant", "--target", tmp_path / "target.json",
            "--source", tmp_path / "source.json", "--labels", tmp_path / "labels.json",
            "--class-id", 14, "--seed", 3, "--max-side", 3,
            "--output", tmp_path / "implanted.json", "--truth-out", tmp_path / "truth.pgm",
        ) == 0
        implanted = read_cube(tmp_path / "implanted.json")
        truth = read_mask(tmp_path / "truth.pgm")
        inside = truth.flat.astype(bool)
        assert inside.sum() > 0
        assert np.all(implanted.pixels[inside] >= 5.0)
        np.testing.assert_array_equal(implanted.pixels[~inside], target.pixels[~inside])

    def test_eval_identical_masks(self, tmp_path):
        values = (np.arange(64).reshape(8, 8) % 5 == 0).astype(np.uint8)
        write_mask(Mask(dims=(8, 8), values=values), tmp_path / "m.pgm")
        out = tmp_path / "eval.json"
        assert run_cli("eval", "--pred", tmp_path / "m.pgm", "--truth", tmp_path / "m.pgm",
                       "--output", out) == 0
        assert json.loads(out.read_text())["soi"] == 1.0


class TestErroring:
    def test_runtime_error_is_structured_json(self, tmp_path):
        result = run_subprocess("detect", "--input", tmp_path / "missing.json",
                                "--detector", "rxd", "--output", tmp_path / "out.json")
        assert result.returncode == 1
        err = json.loads(result.stderr)
        assert err["error"]["code"] == "data-format"
        assert "message" in err["error"]

    def test_validation_failures_listed_all_at_once(self, tmp_path):
        result = run_subprocess(
            "detect", "--detector", "bogus", "--psi", "1.5", "--ridge", "-1",
        )
        assert result.returncode == 2
        errors = json.loads(result.stderr)["errors"]
        messages = " ".join(e["message"] for e in errors)
        assert "detector" in messages
        assert "psi" in messages
        assert "ridge" in messages
        assert "--input is required" in messages
        assert len(errors) >= 5

    def test_missing_subcommand_prints_help(self):
        result = run_subprocess()
        assert result.returncode == 2

    def test_connectivity_must_match_grid(self, scene, tmp_path):
        result = run_subprocess(
            "detect", "--input", scene["cube"], "--detector", "lad-s",
            "--weights", "cauchy", "--alpha", "1.0", "--connectivity", "6",
            "--output", tmp_path / "s.json",
        )
        assert result.returncode == 1
        err = json.loads(result.stderr)["error"]
        assert err["code"] == "bad-parameter"
        assert err["context"]["connectivity"] == 6

    def test_explicit_matching_connectivity_accepted(self, scene, tmp_path):
        assert run_cli(
            "detect", "--input", scene["cube"], "--detector", "lad-s",
            "--weights", "cauchy", "--alpha", "1.0", "--connectivity", "4",
            "--output", tmp_path / "s.json",
        ) == 0


class TestConfigFile:
    def test_config_supplies_and_flags_override(self, scene, tmp_path):
        config = {
            "detector": "lad",
            "weights": "cauchy",
            "alpha": 1.0,
            "input": str(scene["cube"]),
            "output": str(tmp_path / "from_config.json"),
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(config))
        assert run_cli("detect", "--config", cfg_path) == 0
        assert (tmp_path / "from_config.json").exists()
        # explicit flag wins over the config value
        assert run_cli("detect", "--config", cfg_path,
                       "--output", tmp_path / "flag_wins.json") == 0
        assert (tmp_path / "flag_wins.json").exists()

    def test_unknown_config_key_reported(self, scene, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({"nonsense": 1}))
        result = run_subprocess("threshold", "--config", cfg_path)
        assert result.returncode == 2
        errors = json.loads(result.stderr)["errors"]
        assert any("nonsense" in e["message"] for e in errors)


class TestDeterminism:
    def test_repeated_runs_byte_identical(self, tmp_path):
        outputs = {}
        for tag in ("one", "two"):
            base = tmp_path / tag
            base.mkdir()
            r = run_subprocess(
                "gmrf", "--dims", 48, 48, "--bands", 5, "--precision", "chain",
                "--squares", "--seed", 99,
                "--output", base / "scene.json", "--truth-out", base / "truth.pgm",
            )
            assert r.returncode == 0, r.stderr
            r = run_subprocess(
                "detect", "--input", base / "scene.json", "--detector", "lad",
                "--weights", "cauchy", "--alpha", "1.0",
                "--output", base / "scores.json", "--report", base / "report.json",
            )
            assert r.returncode == 0, r.stderr
            r = run_subprocess(
                "eval", "--scores", base / "scores.json", "--truth", base / "truth.pgm",
                "--output", base / "eval.json", "--roc-csv", base / "roc.csv",
            )
            assert r.returncode == 0, r.stderr
            outputs[tag] = {
                p.name: p.read_bytes()
                for p in sorted(base.iterdir())
            }
        assert outputs["one"].keys() == outputs["two"].keys()
        for name in outputs["one"]:
            assert outputs["one"][name] == outputs["two"][name], name
