import json

import numpy as np
import pytest
import torch

from diss.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from diss.data import synth_example
from diss.images import decode_png, encode_png


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    code = main(
        ["gen-data", "--out", str(out), "--count", "6", "--size", "16", "--seed", "3"]
    )
    assert code == EXIT_OK
    return out


@pytest.fixture(scope="module")
def trained_ckpt(tmp_path_factory, dataset_dir):
    ckpt = tmp_path_factory.mktemp("ckpt") / "stage1.ckpt"
    code = main(
        [
            "train",
            "--data", str(dataset_dir),
            "--stage", "1",
            "--steps", "3",
            "--batch-size", "2",
            "--base-channels", "8",
            "--diffusion-steps", "6",
            "--ckpt-out", str(ckpt),
            "--seed", "0",
        ]
    )
    assert code == EXIT_OK
    return ckpt


class TestGenData:
    def test_writes_pngs_and_manifest(self, dataset_dir):
        manifest = json.loads((dataset_dir / "manifest.json").read_text())
        assert manifest["count"] == 6
        for sub in ("photo", "sketch", "stroke"):
            assert len(list((dataset_dir / sub).glob("*.png"))) == 6

    def test_rerun_same_seed_same_hash(self, dataset_dir, tmp_path):
        out2 = tmp_path / "ds2"
        assert main(
            ["gen-data", "--out", str(out2), "--count", "6", "--size", "16", "--seed", "3"]
        ) == EXIT_OK
        m1 = json.loads((dataset_dir / "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m1["content_hash"] == m2["content_hash"]

    def test_size_below_minimum_is_validation_error(self, tmp_path):
        code = main(
            ["gen-data", "--out", str(tmp_path / "x"), "--count", "1", "--size", "15"]
        )
        assert code == EXIT_VALIDATION


class TestTrain:
    def test_stage2_without_ckpt_in_fails(self, dataset_dir, tmp_path):
        code = main(
            [
                "train", "--data", str(dataset_dir), "--stage", "2",
                "--steps", "1", "--ckpt-out", str(tmp_path / "x.ckpt"),
            ]
        )
        assert code == EXIT_VALIDATION

    def test_short_run_writes_checkpoint(self, trained_ckpt):
        assert trained_ckpt.exists()
        from diss.checkpoint import load_checkpoint

        ckpt = load_checkpoint(trained_ckpt)
        assert ckpt.metadata["stage"] == 1
        assert ckpt.metadata["schedule"]["steps"] == 6

    def test_seed_fixed_rerun_reproduces_loss_log(self, dataset_dir, tmp_path):
        logs = []
        for i in range(2):
            log = tmp_path / f"loss{i}.jsonl"
            code = main(
                [
                    "train", "--data", str(dataset_dir), "--stage", "1",
                    "--steps", "3", "--batch-size", "2", "--base-channels", "8",
                    "--diffusion-steps", "6",
                    "--ckpt-out", str(tmp_path / f"t{i}.ckpt"),
                    "--seed", "5", "--loss-log", str(log),
                ]
            )
            assert code == EXIT_OK
            logs.append(log.read_text())
        assert logs[0] == logs[1]

    def test_missing_dataset_fails(self, tmp_path):
        code = main(
            [
                "train", "--data", str(tmp_path / "absent"), "--stage", "1",
                "--steps", "1", "--ckpt-out", str(tmp_path / "x.ckpt"),
            ]
        )
        assert code in (EXIT_VALIDATION, EXIT_RUNTIME)


class TestSample:
    def test_sample_writes_output(self, trained_ckpt, dataset_dir, tmp_path, capsys):
        comb_path = tmp_path / "comb.png"
        ex = synth_example(np.random.default_rng(1), 16)
        encode_png(ex.comb, comb_path)
        out = tmp_path / "out.png"
        code = main(
            [
                "sample", "--ckpt", str(trained_ckpt), "--comb", str(comb_path),
                "--seed", "1", "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert out.exists()
        img = decode_png(out)
        assert img.shape == (3, 16, 16)
        captured = capsys.readouterr().out
        assert "sketch_consistency" in captured
        assert "resolved config" in captured

    def test_seed_reproducibility_of_artifact(self, trained_ckpt, tmp_path):
        ex = synth_example(np.random.default_rng(2), 16)
        comb_path = tmp_path / "comb.png"
        encode_png(ex.comb, comb_path)
        outputs = []
        for i in range(2):
            out = tmp_path / f"out{i}.png"
            assert main(
                [
                    "sample", "--ckpt", str(trained_ckpt), "--comb", str(comb_path),
                    "--seed", "42", "--out", str(out),
                ]
            ) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_full_consistency_regime(self, trained_ckpt, tmp_path):
        """s_realism 0 with divisor 1 reproduces the input drawing."""
        ex = synth_example(np.random.default_rng(3), 16)
        comb_path = tmp_path / "comb.png"
        encode_png(ex.comb, comb_path)
        out = tmp_path / "out.png"
        assert main(
            [
                "sample", "--ckpt", str(trained_ckpt), "--comb", str(comb_path),
                "--s-realism", "0", "--divisor", "1", "--seed", "0",
                "--out", str(out),
            ]
        ) == EXIT_OK
        result = decode_png(out)
        rms = ((result - ex.comb) ** 2).mean().sqrt()
        assert rms < 0.02

    def test_missing_checkpoint_fails(self, tmp_path):
        code = main(
            [
                "sample", "--ckpt", str(tmp_path / "none.ckpt"),
                "--comb", str(tmp_path / "none.png"), "--out", str(tmp_path / "o.png"),
            ]
        )
        assert code == EXIT_VALIDATION


class TestEditFill:
    def test_edit_requires_inputs(self, trained_ckpt, tmp_path):
        code = main(
            ["edit", "--ckpt", str(trained_ckpt), "--out", str(tmp_path / "o.png")]
        )
        assert code == EXIT_VALIDATION

    def test_edit_cutoff_out_of_range(self, trained_ckpt, tmp_path):
        ex = synth_example(np.random.default_rng(4), 16)
        comb_path = tmp_path / "comb.png"
        encode_png(ex.comb, comb_path)
        code = main(
            [
                "edit", "--ckpt", str(trained_ckpt), "--comb", str(comb_path),
                "--refine-cutoff", "99", "--out", str(tmp_path / "o.png"),
            ]
        )
        assert code == EXIT_VALIDATION

    def test_edit_with_original_and_drawing(self, trained_ckpt, tmp_path):
        original = synth_example(np.random.default_rng(5), 16).photo
        drawing = torch.ones(3, 16, 16)
        drawing[:, 4:8, 4:8] = torch.tensor([1.0, -1.0, -1.0]).view(3, 1, 1)
        orig_path, draw_path = tmp_path / "orig.png", tmp_path / "draw.png"
        encode_png(original, orig_path)
        encode_png(drawing, draw_path)
        out = tmp_path / "edited.png"
        code = main(
            [
                "edit", "--ckpt", str(trained_ckpt), "--original", str(orig_path),
                "--drawing", str(draw_path), "--refine-cutoff", "1",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK and out.exists()

    def test_fill_runs(self, trained_ckpt, tmp_path):
        ex = synth_example(np.random.default_rng(6), 16)
        comb_path = tmp_path / "comb.png"
        encode_png(ex.comb, comb_path)
        out = tmp_path / "filled.png"
        code = main(
            [
                "fill", "--ckpt", str(trained_ckpt), "--comb", str(comb_path),
                "--refine-cutoff", "1", "--out", str(out),
            ]
        )
        assert code == EXIT_OK and out.exists()

    def test_fill_cutoff_at_t_is_pure_guidance(self, trained_ckpt, tmp_path):
        ex = synth_example(np.random.default_rng(7), 16)
        comb_path = tmp_path / "comb.png"
        encode_png(ex.comb, comb_path)
        out_a, out_b = tmp_path / "a.png", tmp_path / "b.png"
        for out, cmd in ((out_a, "fill"), (out_b, "edit")):
            assert main(
                [
                    cmd, "--ckpt", str(trained_ckpt), "--comb", str(comb_path),
                    "--refine-cutoff", "6", "--seed", "3", "--out", str(out),
                ]
            ) == EXIT_OK
        assert out_a.read_bytes() == out_b.read_bytes()


class TestEval:
    def test_sweep_emits_six_records(self, trained_ckpt, dataset_dir, tmp_path, capsys):
        report = tmp_path / "report.txt"
        code = main(
            [
                "eval", "--ckpt", str(trained_ckpt), "--data", str(dataset_dir),
                "--sweep-realism", "--seeds", "0", "--out-report", str(report),
            ]
        )
        assert code == EXIT_OK
        lines = [l for l in report.read_text().splitlines() if l.startswith("s_realism=")]
        assert len(lines) == 6

    def test_grid_is_4x4(self, trained_ckpt, dataset_dir, capsys):
        code = main(
            ["eval", "--ckpt", str(trained_ckpt), "--data", str(dataset_dir), "--grid"]
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out
        rows = [l for l in out.splitlines() if l.startswith("s_sketch=")]
        assert len(rows) == 4
        assert all(len(row.split()) == 5 for row in rows)

    def test_report_deterministic(self, trained_ckpt, dataset_dir, tmp_path):
        reports = []
        for i in range(2):
            report = tmp_path / f"r{i}.txt"
            assert main(
                [
                    "eval", "--ckpt", str(trained_ckpt), "--data", str(dataset_dir),
                    "--sweep-realism", "--seeds", "1", "--out-report", str(report),
                ]
            ) == EXIT_OK
            reports.append(report.read_text())
        assert reports[0] == reports[1]


class TestServe:
    def test_missing_checkpoint_path_is_validation_error(self, tmp_path):
        code = main(
            [
                "serve", "--ckpt", str(tmp_path / "nope.ckpt"),
                "--port", "8123", "--data-dir", str(tmp_path / "svc"),
            ]
        )
        assert code == EXIT_VALIDATION

    def test_serve_requires_checkpoint_argument(self, tmp_path, monkeypatch):
        monkeypatch.delenv("DISS_CHECKPOINT", raising=False)
        code = main(["serve", "--data-dir", str(tmp_path / "svc")])
        assert code == EXIT_VALIDATION


class TestConfigFile:
    def test_config_file_supplies_defaults_flags_override(self, tmp_path, capsys):
        config = tmp_path / "diss.ini"
        config.write_text("[gen-data]\ncount = 2\nsize = 16\nseed = 8\n")
        out = tmp_path / "ds"
        code = main(
            [
                "gen-data", "--config", str(config), "--out", str(out),
                "--seed", "9",
            ]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 2  # from file
        assert manifest["seed"] == 9  # flag wins
        assert "resolved config" in capsys.readouterr().out

    def test_missing_config_file(self, tmp_path):
        code = main(
            [
                "gen-data", "--config", str(tmp_path / "none.ini"),
                "--out", str(tmp_path / "ds"),
            ]
        )
        assert code == EXIT_VALIDATION

    def test_unknown_flag_rejected(self, tmp_path):
        code = main(["gen-data", "--out", str(tmp_path / "x"), "--bogus", "1"])
        assert code == EXIT_VALIDATION
