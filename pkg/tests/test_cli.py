import json

import numpy as np

from hdrkit.cli import run
from hdrkit.image_io import load_ldr, load_radiance, read_ppm, save_radiance
from hdrkit.pipeline import normalize_hdr
from hdrkit.synth import synth_scenes


def write_scene(tmp_path, name="scene.pfm", size=48, seed=11, normalized=True):
    scene = synth_scenes(1, size, seed=seed)[0]
    if normalized:
        scene, _ = normalize_hdr(scene)
    path = tmp_path / name
    save_radiance(path, scene)
    return path, scene


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 1
        assert capsys.readouterr().err.startswith("error:usage:")

    def test_unknown_flag_rejected(self, capsys):
        assert run(["synth", "--out", "x", "--bogus", "1"]) == 1
        assert capsys.readouterr().err.startswith("error:usage:")

    def test_no_subcommand(self, capsys):
        assert run([]) == 1
        assert capsys.readouterr().err.startswith("error:usage:")

    def test_help_exits_zero(self):
        assert run(["--help"]) == 0

    def test_missing_input_file_is_io_error(self, tmp_path, capsys):
        assert run(["expose", "--input", str(tmp_path / "nope.pfm"), "--out", str(tmp_path)]) == 2
        assert capsys.readouterr().err.startswith("error:io:")

    def test_malformed_file_is_validation_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.hdr"
        bad.write_bytes(b"\xde\xad\xbe\xef" * 8)
        assert run(["expose", "--input", str(bad), "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error:format:") or err.startswith("error:truncated:")


class TestSynth:
    def test_writes_scenes_and_manifest(self, tmp_path):
        out = tmp_path / "data"
        assert run(["synth", "--out", str(out), "--count", "4", "--size", "32", "--seed", "3"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["scenes"]) == 4
        assert manifest["ladder"] in ("fixed", "adaptive")
        for entry in manifest["scenes"]:
            assert (out / entry["file"]).exists()

    def test_seeded_reproducibility(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["synth", "--out", str(a), "--count", "2", "--size", "16", "--seed", "9"])
        run(["synth", "--out", str(b), "--count", "2", "--size", "16", "--seed", "9"])
        for name in ("scene_000.pfm", "scene_001.pfm"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestExpose:
    def test_fixed_mode_writes_five_ppms_with_sidecars(self, tmp_path, capsys):
        path, _ = write_scene(tmp_path)
        out = tmp_path / "stack"
        assert run(["expose", "--input", str(path), "--out", str(out), "--mode", "fixed"]) == 0
        exposures = []
        for k in range(5):
            img = load_ldr(out / f"scene_e{k}.ppm")
            exposures.append(img.exposure)
        assert exposures == [1.0, 8.0, 64.0, 512.0, 4096.0]

    def test_adaptive_mode(self, tmp_path):
        path, _ = write_scene(tmp_path)
        out = tmp_path / "stack"
        assert run(["expose", "--input", str(path), "--out", str(out), "--mode", "adaptive"]) == 0
        exposures = [load_ldr(out / f"scene_e{k}.ppm").exposure for k in range(5)]
        assert all(b > a for a, b in zip(exposures, exposures[1:]))


class TestMergeRoundTrip:
    def test_expose_then_merge_recovers_scene(self, tmp_path):
        path, scene = write_scene(tmp_path, size=32)
        norm, _ = normalize_hdr(scene)
        stackdir = tmp_path / "stack"
        run(["expose", "--input", str(path), "--out", str(stackdir), "--crf", "gamma:1.0"])
        inputs = [str(stackdir / f"scene_e{k}.ppm") for k in range(5)]
        out = tmp_path / "merged"
        assert (
            run(["merge", "--inputs", *inputs, "--out", str(out), "--crf", "gamma:1.0"]) == 0
        )
        merged = load_radiance(out / "merged.hdr")
        err = np.abs(merged.data - norm.data)
        assert np.median(err) < 0.01


class TestTmoCommands:
    def test_tmo_writes_ppm(self, tmp_path):
        path, _ = write_scene(tmp_path)
        out = tmp_path / "tm"
        assert run(["tmo", "--input", str(path), "--out", str(out), "--operator", "drago"]) == 0
        img = read_ppm((out / "scene_drago.ppm").read_bytes())
        assert (img.width, img.height) == (48, 48)

    def test_select_tmo_writes_scores_csv(self, tmp_path):
        path, _ = write_scene(tmp_path)
        out = tmp_path / "sel"
        assert run(["select-tmo", "--inputs", str(path), "--out", str(out)]) == 0
        rows = (out / "scores.csv").read_text().strip().splitlines()
        assert rows[0] == "image,operator,S,N,Q"
        assert len(rows) == 4  # three operators scored
        best = [p for p in out.iterdir() if "best" in p.name]
        assert len(best) == 1

    def test_tmqi_command(self, tmp_path, capsys):
        path, _ = write_scene(tmp_path)
        out = tmp_path / "tm"
        run(["tmo", "--input", str(path), "--out", str(out), "--operator", "reinhard"])
        code = run(["tmqi", "--hdr", str(path), "--tm", str(out / "scene_reinhard.ppm")])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[-2] == "hdr,tm,S,N,Q"
        parts = lines[-1].split(",")
        assert len(parts) == 5
        assert 0.0 <= float(parts[-1]) <= 1.0


class TestGradcheckCommand:
    def test_single_layer_passes(self, tmp_path, capsys):
        report = tmp_path / "report.txt"
        code = run(["gradcheck", "--arch", "single", "--tolerance", "1e-4", "--out", str(report)])
        assert code == 0
        assert "PASS" in report.read_text()

    def test_report_lines_per_layer(self, capsys):
        run(["gradcheck", "--arch", "single"])
        out = capsys.readouterr().out
        assert "max_rel_err" in out


class TestTrainInferCommands:
    def test_tonemap_train_and_infer(self, tmp_path):
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "2", "--size", "16", "--seed", "8"])
        ckpt = tmp_path / "ckpt"
        code = run(
            [
                "train-tonemap", "--manifest", str(data), "--out", str(ckpt),
                "--epochs", "1", "--patch", "16", "--dropout-p", "0.0", "--seed", "2",
            ]
        )
        assert code == 0
        for ch in ("L_base", "L_detail", "a", "b"):
            assert (ckpt / f"tonemap_{ch}.ckpt").exists()
        out = tmp_path / "pred"
        code = run(
            [
                "infer-tonemap", "--checkpoints", str(ckpt),
                "--input", str(data / "scene_000.pfm"), "--out", str(out),
            ]
        )
        assert code == 0
        img = read_ppm((out / "predicted.ppm").read_bytes())
        assert (img.width, img.height) == (16, 16)

    def test_search_ranks_configs(self, tmp_path):
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "5", "--size", "16", "--seed", "4"])
        out = tmp_path / "sweep"
        code = run(
            [
                "search", "--manifest", str(data), "--out", str(out),
                "--arch", "ldr2hdr", "--lr-grid", "1e-2,0",
                "--patch", "16", "--batch-size", "2", "--dropout-p", "0.0", "--seed", "1",
            ]
        )
        assert code == 0
        rows = (out / "search.csv").read_text().strip().splitlines()
        assert rows[0] == "rank,config_id,lr,val_error"
        assert len(rows) == 3
        assert (out / "curve_search_0.csv").exists()

    def test_search_tonemap_arch(self, tmp_path):
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "5", "--size", "16", "--seed", "12"])
        out = tmp_path / "sweep"
        code = run(
            [
                "search", "--manifest", str(data), "--out", str(out),
                "--arch", "tonemap", "--lr-grid", "1e-3,1e-2",
                "--patch", "16", "--batch-size", "2", "--dropout-p", "0.0", "--seed", "1",
            ]
        )
        assert code == 0
        rows = (out / "search.csv").read_text().strip().splitlines()
        assert len(rows) == 3

    def test_train_with_workers(self, tmp_path):
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "2", "--size", "16", "--seed", "3"])
        out = tmp_path / "ckpt"
        code = run(
            [
                "train-ldr2hdr", "--manifest", str(data), "--out", str(out),
                "--epochs", "1", "--patch", "16", "--workers", "2", "--seed", "1",
            ]
        )
        assert code == 0
        assert (out / "ldr2hdr_R.ckpt").exists()


class TestConfigPrecedence:
    def test_flags_override_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"lr": 0.5, "epochs": 1, "batch_size": 2, "patch": 16, "dropout_p": 0.0, "seed": 1}))
        out = tmp_path / "run"
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "2", "--size", "16", "--seed", "2"])
        code = run(
            [
                "train-ldr2hdr",
                "--manifest",
                str(data),
                "--out",
                str(out),
                "--config",
                str(cfg),
                "--lr",
                "0.001",
                "--epochs",
                "1",
            ]
        )
        assert code == 0
        # one curve per channel, each with exactly one epoch row
        for ch in ("R", "G", "B"):
            rows = (out / f"curve_ldr2hdr_{ch}.csv").read_text().strip().splitlines()
            assert len(rows) == 2

    def test_training_bit_reproducible_with_seed(self, tmp_path):
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "2", "--size", "16", "--seed", "6"])
        curves = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            code = run(
                [
                    "train-ldr2hdr", "--manifest", str(data), "--out", str(out),
                    "--epochs", "2", "--patch", "16", "--seed", "5", "--dtype", "f64",
                ]
            )
            assert code == 0
            curves.append((out / "curve_ldr2hdr_R.csv").read_text())
        assert curves[0] == curves[1]

    def test_bad_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nonsense": 1}))
        data = tmp_path / "data"
        run(["synth", "--out", str(data), "--count", "1", "--size", "16"])
        code = run(["train-ldr2hdr", "--manifest", str(data), "--out", str(tmp_path / "o"), "--config", str(cfg)])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:validation:")
