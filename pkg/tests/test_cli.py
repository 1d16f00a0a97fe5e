import json

import numpy as np
import pytest

from plenhance import io_formats
from plenhance.cli import main
from plenhance.types import IGNORE, LabelVector


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    code = main(["synth", "--out-dir", str(out), "--n-scenes", "3", "--seed", "50"])
    assert code == 0
    return out


def scene_paths(scene_dir, scene_id):
    entries = {e.scene_id: e for e in io_formats.read_manifest(scene_dir / "manifest.json")}
    return entries[scene_id]


class TestSynth:
    def test_writes_files_and_manifest(self, scene_dir):
        names = sorted(p.name for p in scene_dir.iterdir())
        assert "manifest.json" in names
        assert len([n for n in names if n.startswith("scene_")]) == 15  # 3 scenes x 5 files

    def test_deterministic_across_runs(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["synth", "--out-dir", str(tmp_path / sub), "--n-scenes", "1"]) == 0
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_scenes_ok(self, tmp_path):
        assert main(["synth", "--out-dir", str(tmp_path), "--n-scenes", "0"]) == 0
        assert io_formats.read_manifest(tmp_path / "manifest.json") == []


class TestEnhance:
    def test_enhances_and_reports(self, scene_dir, tmp_path, capsys):
        entry = scene_paths(scene_dir, "scene_000050")
        out_labels = tmp_path / "out.bin"
        report = tmp_path / "report.json"
        code = main(
            [
                "enhance",
                "--points", str(scene_dir / entry.points),
                "--labels", str(scene_dir / entry.labels),
                "--masks", str(scene_dir / entry.masks),
                "--calib", str(scene_dir / entry.calib),
                "--out", str(out_labels),
                "--report", str(report),
            ]
        )
        assert code == 0
        line = capsys.readouterr().out.strip()
        assert line.startswith("scene=scene_000050 ")
        before = io_formats.read_labels(scene_dir / entry.labels)
        after = io_formats.read_labels(out_labels)
        had = before.values != IGNORE
        assert np.array_equal(after.values[had], before.values[had])
        assert after.count_labeled >= before.count_labeled
        doc = json.loads(report.read_text())
        assert doc["labels_after"] == after.count_labeled

    def test_dp_labels_more_gapp_more_accurate(self, scene_dir, tmp_path):
        entry = scene_paths(scene_dir, "scene_000051")
        outputs = {}
        for method in ("gapp", "dp"):
            out = tmp_path / f"{method}.bin"
            code = main(
                [
                    "enhance",
                    "--points", str(scene_dir / entry.points),
                    "--labels", str(scene_dir / entry.labels),
                    "--masks", str(scene_dir / entry.masks),
                    "--calib", str(scene_dir / entry.calib),
                    "--out", str(out),
                    "--method", method,
                ]
            )
            assert code == 0
            outputs[method] = io_formats.read_labels(out)
        gt = io_formats.read_labels(scene_dir / entry.gt_labels)
        from plenhance.eval_metrics import compute_stats

        s_gapp = compute_stats(outputs["gapp"], gt)
        s_dp = compute_stats(outputs["dp"], gt)
        assert s_dp.total_predicted > s_gapp.total_predicted
        assert s_gapp.micro_accuracy > s_dp.micro_accuracy

    def test_missing_file_exit_1(self, tmp_path, capsys):
        code = main(
            [
                "enhance",
                "--points", str(tmp_path / "missing.bin"),
                "--labels", "x", "--masks", "y", "--calib", "z",
                "--out", str(tmp_path / "o.bin"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_flag_exit_2(self, capsys):
        assert main(["enhance", "--labels", "x"]) == 2


class TestEval:
    def test_pred_equals_gt(self, tmp_path, capsys):
        path = tmp_path / "l.bin"
        io_formats.write_labels(path, LabelVector([0, 1, 2], num_classes=3))
        assert main(["eval", "--pred", str(path), "--gt", str(path)]) == 0
        out = capsys.readouterr().out
        assert "Avg. Acc. = 100.00" in out

    def test_worked_example_with_increment(self, tmp_path, capsys):
        gt = tmp_path / "gt.bin"
        pred = tmp_path / "pred.bin"
        before = tmp_path / "before.bin"
        io_formats.write_labels(gt, LabelVector([0] * 9, num_classes=5))
        io_formats.write_labels(pred, LabelVector([0] * 9, num_classes=5))
        io_formats.write_labels(before, LabelVector([0] * 4 + [IGNORE] * 5, num_classes=5))
        code = main([
            "eval", "--pred", str(pred), "--gt", str(gt), "--before", str(before),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "Total Inc. = +125.00" in out  # 4 correct -> 9 correct

    def test_json_matches_table_values(self, tmp_path, capsys):
        gt = tmp_path / "gt.bin"
        pred = tmp_path / "pred.bin"
        io_formats.write_labels(gt, LabelVector([0, 1, 1, 0], num_classes=5))
        io_formats.write_labels(pred, LabelVector([0, 0, 1, IGNORE], num_classes=5))
        assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["per_class_accuracy"]["0"] == 50.0
        assert doc["per_class_accuracy"]["1"] == 100.0
        assert doc["avg_accuracy"] == 75.0
        assert doc["coverage"] == 75.0

    def test_length_mismatch_exit_1(self, tmp_path, capsys):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        io_formats.write_labels(a, LabelVector([0], num_classes=2))
        io_formats.write_labels(b, LabelVector([0, 1], num_classes=2))
        assert main(["eval", "--pred", str(a), "--gt", str(b)]) == 1


class TestCompare:
    def test_table_and_ordering_fields(self, scene_dir, capsys):
        code = main(
            ["compare", "--scenes", str(scene_dir / "manifest.json"), "--gt-available", "--json"]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == {"baseline", "dp_no_mf", "dp_mf", "mf_gapp"}
        for row in ("dp_no_mf", "dp_mf", "mf_gapp"):
            assert "total_increment" in doc[row]

    def test_human_table(self, scene_dir, capsys):
        code = main(["compare", "--scenes", str(scene_dir / "manifest.json"), "--gt-available"])
        assert code == 0
        out = capsys.readouterr().out
        assert "mf_gapp" in out and "avg_acc" in out

    def test_empty_manifest(self, tmp_path, capsys):
        io_formats.write_manifest(tmp_path / "manifest.json", [])
        assert main(["compare", "--scenes", str(tmp_path / "manifest.json"), "--gt-available"]) == 0

    def test_gt_missing_exit_1(self, tmp_path, scene_dir, capsys):
        entry = scene_paths(scene_dir, "scene_000050")
        for rel in (entry.points, entry.labels, entry.masks, entry.calib):
            (tmp_path / rel).write_bytes((scene_dir / rel).read_bytes())
        stripped = io_formats.SceneManifest(
            scene_id=entry.scene_id,
            points=entry.points,
            labels=entry.labels,
            masks=entry.masks,
            calib=entry.calib,
        )
        io_formats.write_manifest(tmp_path / "manifest.json", [stripped])
        assert main(["compare", "--scenes", str(tmp_path / "manifest.json"), "--gt-available"]) == 1

    def test_usage_error_without_gt_flag(self):
        assert main(["compare", "--scenes", "whatever"]) == 2


class TestDeterminism:
    def test_repeated_enhance_byte_identical(self, scene_dir, tmp_path):
        entry = scene_paths(scene_dir, "scene_000052")
        outs = []
        for tag in ("1", "2"):
            out = tmp_path / f"out{tag}.bin"
            main(
                [
                    "enhance",
                    "--points", str(scene_dir / entry.points),
                    "--labels", str(scene_dir / entry.labels),
                    "--masks", str(scene_dir / entry.masks),
                    "--calib", str(scene_dir / entry.calib),
                    "--out", str(out),
                ]
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_inputs_not_mutated(self, scene_dir, tmp_path):
        entry = scene_paths(scene_dir, "scene_000050")
        snapshot = {
            rel: (scene_dir / rel).read_bytes()
            for rel in (entry.points, entry.labels, entry.masks, entry.calib)
        }
        main(
            [
                "enhance",
                "--points", str(scene_dir / entry.points),
                "--labels", str(scene_dir / entry.labels),
                "--masks", str(scene_dir / entry.masks),
                "--calib", str(scene_dir / entry.calib),
                "--out", str(tmp_path / "o.bin"),
            ]
        )
        for rel, data in snapshot.items():
            assert (scene_dir / rel).read_bytes() == data
