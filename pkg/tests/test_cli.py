"""CLI surface: config handling, command round-trips, digests, exit codes."""

import json


import numpy as np
import pytest

from capstate.cli import main
from capstate.config import (
    PipelineConfig,
    apply_overrides,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
)
from capstate.errors import ConfigError
from capstate.storage import read_fold_csv, read_windows_csv, read_windows_dir, write_windows_csv
from conftest import make_feature_dataset

FAST_OVERRIDES = [
    "--set", "synth.n_subjects=3",
    "--set", "synth.duration_s=150",
    "--set", "ecg_nominal_hz=512",
    "--set", "train.max_epochs=4",
    "--set", "train.lr=0.002",
    "--set", "train.batch_size=32",
    "--set", "train.val_subjects=1",
    "--set", "train.early_stop_warmup=2",
    "--set", "train.early_stop_patience=2",
    "--set", "arch.conv_channels=4",
    "--set", "arch.lstm_hidden=6",
    "--set", "arch.feat_hidden=6",
    "--set", "arch.fusion_hidden=12",
    "--set", "arch.fusion_out=6",
    "--set", "arch.head_hidden=4",
]


def run_cli(tmp_path, command, *extra):
    args = [command, "--set", f"data_root={json.dumps(str(tmp_path / 'data'))}",
            "--set", f"output_root={json.dumps(str(tmp_path / 'out'))}", *FAST_OVERRIDES, *extra]
    return main(args)


class TestConfig:
    def test_round_trip(self):
        cfg = PipelineConfig(seed=7, normalization_mode="train_fold_stats")
        data = config_to_dict(cfg)
        back = config_from_dict(json.loads(json.dumps(data)))
        assert back == cfg
        assert config_hash(back) == config_hash(cfg)

    def test_overrides(self):
        cfg = PipelineConfig()
        out = apply_overrides(cfg, ["train.lr=0.01", "arch.backbone=\"tcn\"", "seed=3"])
        assert out.train.lr == 0.01
        assert out.arch.backbone == "tcn"
        assert out.seed == 3

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(PipelineConfig(), ["nope.key=1"])
        with pytest.raises(ConfigError):
            config_from_dict({"bogus": 1})

    def test_load_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/definitely/not/here.json")

    def test_effective_arch_applies_ablation(self):
        cfg = apply_overrides(
            PipelineConfig(),
            ["ablation.modalities=[\"ibi\"]", "ablation.backbone=\"tcn\"",
             "ablation.use_handcrafted_features=false"],
        )
        arch = cfg.effective_arch()
        assert arch.modalities == ("ibi",)
        assert arch.backbone == "tcn"
        assert not arch.use_handcrafted_features


class TestWindowsCsv:
    def test_round_trip(self, tmp_path):
        ds = make_feature_dataset(n_subjects=2, per_cond=3, seed=1)
        path = tmp_path / "windows_x.csv"
        write_windows_csv(path, ds)
        back = read_windows_csv(path)
        assert np.array_equal(back.x_ibi, ds.x_ibi)
        assert np.array_equal(back.f_eda, ds.f_eda)
        assert np.array_equal(back.stress, ds.stress)
        assert back.subject.tolist() == ds.subject.tolist()


@pytest.mark.slow
class TestCommandChain:
    def test_full_chain_and_determinism(self, tmp_path, capsys):
        assert run_cli(tmp_path, "synth") == 0
        assert run_cli(tmp_path, "preprocess") == 0
        out_dir = tmp_path / "out"
        manifest1 = json.loads((out_dir / "manifest_preprocess.json").read_text())
        # identical rerun -> identical digests
        assert run_cli(tmp_path, "preprocess") == 0
        manifest2 = json.loads((out_dir / "manifest_preprocess.json").read_text())
        assert manifest1["outputs"] == manifest2["outputs"]
        assert manifest1["config_hash"] == manifest2["config_hash"]

        ds = read_windows_dir(out_dir / "windows")
        assert len(ds.subjects()) == 3

        assert run_cli(tmp_path, "evaluate") == 0
        results = out_dir / "results"
        folds = sorted(results.glob("fold_*.csv"))
        assert len(folds) == 3
        stats = json.loads((results / "stats.json").read_text())
        assert "trajectory_patterns" in stats
        assert (results / "summary.csv").exists()

        fold = read_fold_csv(folds[0])
        assert np.all((fold.u >= 0) & (fold.u <= 1))

        assert run_cli(tmp_path, "report") == 0
        report_dir = results / "report"
        for name in (
            "report.txt",
            "table2_summary.csv",
            "table3_per_subject.csv",
            "table4_classification.csv",
            "trajectory_distribution.csv",
            "stats.json",
        ):
            assert (report_dir / name).exists(), name
        text = (report_dir / "report.txt").read_text()
        assert "Group summary" in text and "Trajectory patterns" in text

    def test_sensitivity_scheme_changes_fold_labels(self, tmp_path):
        assert run_cli(tmp_path, "synth") == 0
        assert run_cli(tmp_path, "preprocess") == 0
        assert run_cli(tmp_path, "evaluate") == 0
        base = read_fold_csv(next((tmp_path / "out" / "results").glob("fold_*.csv")))
        assert run_cli(tmp_path, "evaluate", "--set", 'sensitivity_scheme="c2_stress_low"') == 0
        flipped = read_fold_csv(next((tmp_path / "out" / "results").glob("fold_*.csv")))
        c2 = flipped.condition == "c2"
        assert np.all(flipped.stress[c2] == 0)
        assert np.any(base.stress[base.condition == "c2"] == 1)
        assert np.array_equal(flipped.mask, base.mask)

    def test_modality_ablation_probe(self, tmp_path):
        assert run_cli(tmp_path, "synth") == 0
        assert run_cli(tmp_path, "preprocess") == 0
        assert run_cli(tmp_path, "evaluate", "--set", 'ablation.modalities=["ibi"]') == 0
        base = {p.name: read_fold_csv(p) for p in (tmp_path / "out" / "results").glob("fold_*.csv")}
        # corrupt every EDA channel in the windows, re-evaluate: identical predictions
        windows_dir = tmp_path / "out" / "windows"
        for p in windows_dir.glob("windows_*.csv"):
            ds = read_windows_csv(p)
            ds.x_eda = ds.x_eda + 25.0
            ds.f_eda = np.abs(ds.f_eda * 3.0 + 1.0)
            write_windows_csv(p, ds)
        assert run_cli(tmp_path, "evaluate", "--set", 'ablation.modalities=["ibi"]') == 0
        for p in (tmp_path / "out" / "results").glob("fold_*.csv"):
            again = read_fold_csv(p)
            assert np.allclose(again.u, base[p.name].u, atol=1e-12)
            assert np.allclose(again.o, base[p.name].o, atol=1e-12)


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        assert main(["evaluate", "--set", "not.a.key=1"]) == 2
        assert main(["preprocess", "--config", str(tmp_path / "missing.json")]) == 2

    def test_data_error_is_3(self, tmp_path):
        assert run_cli(tmp_path, "preprocess") == 3  # no synth tree yet

    def test_numerical_error_is_4(self, tmp_path, monkeypatch):
        import capstate.cli as cli_mod
        from capstate.errors import NumericalError

        assert run_cli(tmp_path, "synth") == 0

        def boom(*a, **kw):
            raise NumericalError("solver diverged")

        monkeypatch.setattr(cli_mod.pipeline, "window_recording", boom)
        assert run_cli(tmp_path, "preprocess") == 4
