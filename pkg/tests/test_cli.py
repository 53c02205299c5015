from __future__ import annotations

import json

import numpy as np
import pytest

from evacsim.cli import main
from evacsim.dataset import Manifest
from evacsim.frames import read_evf


@pytest.fixture(scope="module")
def scenario_xml(tmp_path_factory):
    out = tmp_path_factory.mktemp("xml")
    path = out / "s.xml"
    rc = main([
        "export-xml", "--archetype", "A", "--geometry-version", "0",
        "--agents", "5", "--speed", "2.0", "--seed", "3", "--out", str(path),
    ])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ds")
    rc = main([
        "dataset", "build", "--out", str(out), "--archetypes", "A",
        "--agents", "10", "--speeds", "2.0", "--origin-schemes", "all",
        "--destination-schemes", "all", "--seed", "42",
        "--max-scenarios-per-geometry", "1",
    ])
    assert rc == 0
    return out


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sim", "--no-such-flag"])
        assert exc.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--bogus", "x", "--out", "y"])
        assert exc.value.code == 1

    def test_data_error_is_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.xml"
        bad.write_text("<scenario version='99'/>")
        rc = main(["sim", "--scenario", str(bad), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file_is_two(self, tmp_path):
        rc = main(["sim", "--scenario", str(tmp_path / "nope.xml"), "--out", str(tmp_path)])
        assert rc == 2


class TestSim:
    def test_byte_identical_reruns(self, scenario_xml, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sim", "--scenario", str(scenario_xml), "--seed", "7", "--out", str(a)]) == 0
        assert main(["sim", "--scenario", str(scenario_xml), "--seed", "7", "--out", str(b)]) == 0
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
        assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()

    def test_config_echo_written(self, scenario_xml, tmp_path):
        out = tmp_path / "echo"
        main(["sim", "--scenario", str(scenario_xml), "--out", str(out)])
        cfg = json.loads((out / "run_config.json").read_text())
        assert cfg["command"] == "sim"
        assert "seed" in cfg["config"]


class TestFramesCommand:
    def test_frames_from_csv(self, scenario_xml, tmp_path):
        sim_out = tmp_path / "sim"
        main(["sim", "--scenario", str(scenario_xml), "--out", str(sim_out)])
        evf = tmp_path / "f.evf"
        rc = main([
            "frames", "--scenario", str(scenario_xml),
            "--trajectory", str(sim_out / "trajectory.csv"),
            "--meta", str(sim_out / "result.json"), "--out", str(evf),
        ])
        assert rc == 0
        classes, rates = read_evf(evf)
        assert classes.shape == (8, 160, 160)
        assert classes.max() >= 1


class TestGen:
    def test_writes_floorplans_and_images(self, tmp_path):
        rc = main(["gen", "--archetype", "B", "--out", str(tmp_path)])
        assert rc == 0
        plans = sorted((tmp_path / "floorplans").glob("B-*.txt"))
        images = sorted((tmp_path / "floorplans").glob("B-*.png"))
        assert len(plans) == 12
        assert len(images) == 12


class TestDatasetCommands:
    def test_build_manifest(self, tiny_dataset):
        manifest = Manifest.read(tiny_dataset / "manifest.jsonl")
        assert len(manifest.ok_records) == 12
        assert (tiny_dataset / "run_config.json").exists()

    def test_stats_prints_json(self, tiny_dataset, capsys):
        rc = main(["dataset", "stats", "--manifest", str(tiny_dataset / "manifest.jsonl")])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_samples"] == 12
        assert len(payload["class0_fraction"]) == 8

    def test_split_assigns(self, tiny_dataset, tmp_path):
        out = tmp_path / "split.jsonl"
        rc = main([
            "dataset", "split", "--manifest", str(tiny_dataset / "manifest.jsonl"),
            "--seed", "1", "--out", str(out),
        ])
        assert rc == 0
        manifest = Manifest.read(out)
        assert all(r.split in {"train", "val", "test"} for r in manifest.ok_records)


class TestEvalAndRender:
    def test_majority_baseline_report(self, tiny_dataset, tmp_path, capsys):
        out = tmp_path / "eval"
        rc = main([
            "eval", "--truth", str(tiny_dataset / "manifest.jsonl"),
            "--baseline", "majority", "--out", str(out),
        ])
        assert rc == 0
        report = json.loads((out / "eval.json").read_text())
        cm = np.asarray(report["confusion"])
        assert cm[:, 1:].sum() == 0  # all mass in predicted-class-0 column
        assert report["n_test"] == 12

        render_out = tmp_path / "png"
        rc = main(["render", "--report", str(out / "eval.json"), "--out", str(render_out)])
        assert rc == 0
        assert (render_out / "confusion.png").exists()

    def test_eval_with_prediction_files(self, tiny_dataset, tmp_path):
        from evacsim.frames import write_evf

        manifest = Manifest.read(tiny_dataset / "manifest.jsonl")
        pred_dir = tmp_path / "preds"
        pred_dir.mkdir()
        for rec in manifest.ok_records:
            classes, _ = read_evf(tiny_dataset / rec.files["frames"])
            write_evf(pred_dir / f"{rec.id}.evf", classes)
            (pred_dir / f"{rec.id}.tet.json").write_text(json.dumps({"tet_hat": rec.tet}))
        out = tmp_path / "eval2"
        rc = main([
            "eval", "--truth", str(tiny_dataset / "manifest.jsonl"),
            "--pred", str(pred_dir), "--out", str(out),
        ])
        assert rc == 0
        report = json.loads((out / "eval.json").read_text())
        assert report["accuracy"] == 1.0
        assert report["mae"] == 0.0

    def test_render_frames(self, tiny_dataset, tmp_path):
        manifest = Manifest.read(tiny_dataset / "manifest.jsonl")
        evf = tiny_dataset / manifest.ok_records[0].files["frames"]
        out = tmp_path / "heat"
        rc = main(["render", "--frames", str(evf), "--out", str(out)])
        assert rc == 0
        assert sorted(p.name for p in out.glob("frame_*.png")) == [
            f"frame_{k}.png" for k in range(8)
        ]

    def test_render_deterministic(self, tiny_dataset, tmp_path):
        manifest = Manifest.read(tiny_dataset / "manifest.jsonl")
        evf = tiny_dataset / manifest.ok_records[0].files["frames"]
        a, b = tmp_path / "r1", tmp_path / "r2"
        main(["render", "--frames", str(evf), "--out", str(a)])
        main(["render", "--frames", str(evf), "--out", str(b)])
        assert (a / "frame_0.png").read_bytes() == (b / "frame_0.png").read_bytes()

    def test_eval_requires_pred_or_baseline(self, tiny_dataset, tmp_path):
        rc = main([
            "eval", "--truth", str(tiny_dataset / "manifest.jsonl"),
            "--out", str(tmp_path / "x"),
        ])
        assert rc == 2
