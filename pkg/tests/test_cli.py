import json

import pytest

from matchforge.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from matchforge.benchmark import make_rig_dataset
from matchforge.synthetic import write_video_frames


@pytest.fixture(scope="module")
def video(tmp_path_factory):
    root = tmp_path_factory.mktemp("clivid")
    return write_video_frames(root / "vid", 100, 160, 120)


@pytest.fixture()
def pipeline_config(tmp_path):
    cfg = {
        "matchers": [
            {
                "kind": "synthetic",
                "name": "oracle",
                "params": {"n": 900, "motion": {"dx": 0.3, "anchors": 2600, "seed": 5}},
            }
        ],
        "min_correspondences": 256,
        "seed": 9,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestLabelCommand:
    def test_label_success(self, video, pipeline_config, tmp_path):
        rc = main(
            [
                "label",
                "--frames",
                str(video),
                "--out",
                str(tmp_path / "out"),
                "--config",
                str(pipeline_config),
                "--no-augment",
            ]
        )
        assert rc == EXIT_OK
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["pair_count"] > 0
        assert (tmp_path / "out" / "base" / "manifest.json").exists()

    def test_config_error_exit_code(self, video, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"frame_interval": -1}))
        rc = main(
            ["label", "--frames", str(video), "--out", str(tmp_path / "x"), "--config", str(bad)]
        )
        assert rc == EXIT_CONFIG

    def test_missing_required_flag(self):
        assert main(["label", "--frames", "/nonexistent"]) == EXIT_CONFIG

    def test_partial_failure_exit_code(self, video, tmp_path):
        # an external matcher that always fails drops every pair
        cfg = {
            "matchers": [
                {
                    "kind": "external",
                    "name": "broken",
                    "params": {"command": "false {image_a} {image_b} {out}"},
                }
            ],
            "min_correspondences": 16,
        }
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(cfg))
        rc = main(
            [
                "label",
                "--frames",
                str(video),
                "--out",
                str(tmp_path / "part"),
                "--config",
                str(path),
                "--no-augment",
            ]
        )
        assert rc == EXIT_PARTIAL

    def test_min_corrs_override(self, video, pipeline_config, tmp_path):
        rc = main(
            [
                "label",
                "--frames",
                str(video),
                "--out",
                str(tmp_path / "hi"),
                "--config",
                str(pipeline_config),
                "--min-corrs",
                "100000",
                "--no-augment",
            ]
        )
        assert rc == EXIT_OK
        manifest = json.loads((tmp_path / "hi" / "manifest.json").read_text())
        assert manifest["pair_count"] == 0  # budget impossible to meet


class TestPropagateAndAugment:
    def test_propagate_reuses_base_cache(self, video, pipeline_config, tmp_path):
        assert (
            main(
                [
                    "label",
                    "--frames",
                    str(video),
                    "--out",
                    str(tmp_path / "a"),
                    "--config",
                    str(pipeline_config),
                    "--no-augment",
                ]
            )
            == EXIT_OK
        )
        rc = main(
            [
                "propagate",
                "--base",
                str(tmp_path / "a" / "base"),
                "--out",
                str(tmp_path / "b"),
                "--config",
                str(pipeline_config),
                "--no-augment",
            ]
        )
        assert rc == EXIT_OK
        m_a = json.loads((tmp_path / "a" / "manifest.json").read_text())
        m_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert m_a["pairs"] == m_b["pairs"]

    def test_augment_command_adds_warps(self, video, pipeline_config, tmp_path):
        main(
            [
                "label",
                "--frames",
                str(video),
                "--out",
                str(tmp_path / "plain"),
                "--config",
                str(pipeline_config),
                "--no-augment",
            ]
        )
        rc = main(
            [
                "augment",
                "--dataset",
                str(tmp_path / "plain"),
                "--out",
                str(tmp_path / "warped"),
                "--config",
                str(pipeline_config),
            ]
        )
        assert rc == EXIT_OK
        manifest = json.loads((tmp_path / "warped" / "manifest.json").read_text())
        assert any(p["augment_a"] for p in manifest["pairs"])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return make_rig_dataset(tmp_path_factory.mktemp("ds") / "tiny", "tiny", 3, seed=4)


class TestEvaluateAndRank:
    def test_evaluate_writes_report(self, dataset, tmp_path, capsys):
        report = tmp_path / "report.json"
        rc = main(
            [
                "evaluate",
                "--dataset",
                str(dataset),
                "--method",
                "synthetic:oracle:n=200",
                "--report",
                str(report),
                "--seed",
                "3",
            ]
        )
        assert rc == EXIT_OK
        rows = json.loads(report.read_text())
        assert rows[0]["method"] == "oracle" and rows[0]["n_pairs"] == 3
        out = capsys.readouterr().out
        assert "MeanRank" in out

    def test_rank_merges_reports(self, dataset, tmp_path, capsys):
        r1 = tmp_path / "r1.json"
        main(
            [
                "evaluate",
                "--dataset",
                str(dataset),
                "--method",
                "synthetic:oracle:n=200",
                "--method",
                '{"kind": "synthetic", "name": "noisy", "params": {"n": 200, "outlier_rate": 0.5, "min_outlier_offset": 5.0, "noise_sigma": 1.0}}',
                "--report",
                str(r1),
                "--seed",
                "3",
            ]
        )
        rc = main(["rank", "--reports", str(r1)])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "oracle" in out and "noisy" in out

    def test_empty_method_list_rejected(self, dataset):
        assert main(["evaluate", "--dataset", str(dataset)]) == EXIT_CONFIG
