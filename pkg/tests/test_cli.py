"""End-to-end tests of the command-line interface."""

import json
import re

import pytest

from crossl.cli import CHECKPOINT_FILE, CONFIG_FILE, DRIFT_FILE, TRACE_FILE, build_parser, main
from crossl.core.config import config_keys
from crossl.data import load_dataset
from crossl.model import load_checkpoint

TINY_CONFIG = {
    "synthetic": {
        "num_classes": 3,
        "samples_per_class": 20,
        "noise_std": 0.05,
        "nuisance_std": 0.2,
        "modalities": [
            {"name": "acc", "channels": 2, "window_len": 16},
            {"name": "gyro", "channels": 2, "window_len": 20},
            {"name": "hr", "channels": 1, "window_len": 14},
        ],
    },
    "encoder": {
        "layers": [
            {"out_channels": 4, "kernel_width": 3, "stride": 1},
            {"out_channels": 4, "kernel_width": 3, "stride": 2},
            {"out_channels": 4, "kernel_width": 3, "stride": 1},
        ],
        "embedding_dim": 4,
    },
    "aggregator": {"hidden": [8], "output_dim": 6},
    "train": {"ssl_lr": 0.001, "ssl_epochs": 2, "cls_epochs": 2, "freeze_epochs": 1, "patience": 2, "batch_size": 8},
}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("CROSSL_SEED", raising=False)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG), encoding="utf-8")
    return str(path)


@pytest.fixture
def data_dir(tmp_path, config_path):
    out = tmp_path / "data"
    assert main(["generate", "--config", config_path, "--out", str(out)]) == 0
    return out


class TestGenerate:
    def test_writes_loadable_dataset(self, data_dir):
        dataset = load_dataset(data_dir)
        assert dataset.size == 60
        assert [m.name for m in dataset.modalities] == ["acc", "gyro", "hr"]
        assert (data_dir / CONFIG_FILE).exists()

    def test_same_config_same_bytes(self, data_dir, tmp_path, config_path):
        again = tmp_path / "again"
        assert main(["generate", "--config", config_path, "--out", str(again)]) == 0
        for name in ("acc.crsd", "gyro.crsd", "hr.crsd", "labels.txt", "splits.txt", "manifest.json"):
            assert (data_dir / name).read_bytes() == (again / name).read_bytes()

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"synthetic": {"modalities": [{"name": "a", "channels": 1, "window_len": 0}]}}))
        assert main(["generate", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
        assert "window_len" in capsys.readouterr().err

    def test_requires_output_directory(self, config_path):
        assert main(["generate", "--config", config_path]) == 2


class TestTraining:
    def test_pretrain_then_finetune(self, tmp_path, config_path, data_dir, capsys):
        ssl_out = tmp_path / "ssl"
        assert main(["pretrain", "--config", config_path, "--data", str(data_dir), "--out", str(ssl_out)]) == 0
        assert (ssl_out / TRACE_FILE).exists()
        checkpoint = ssl_out / CHECKPOINT_FILE

        probe_out = tmp_path / "probe"
        args = ["finetune", "--config", config_path, "--data", str(data_dir), "--out", str(probe_out)]
        assert main([*args, "--ckpt", str(checkpoint), "--mode", "fixed"]) == 0
        assert "test macro-F1" in capsys.readouterr().out

        pretrained, tuned = load_checkpoint(checkpoint), load_checkpoint(probe_out / CHECKPOINT_FILE)
        for name, param in pretrained.params.items():
            if name.startswith("encoder."):
                assert param.value.tobytes() == tuned.params[name].value.tobytes()

    def test_supervised(self, tmp_path, config_path, data_dir):
        out = tmp_path / "sup"
        assert main(["supervised", "--config", config_path, "--data", str(data_dir), "--out", str(out)]) == 0
        assert (out / CHECKPOINT_FILE).exists()

    def test_unknown_mode_rejected(self, tmp_path, config_path, data_dir):
        with pytest.raises(SystemExit) as info:
            main(["finetune", "--config", config_path, "--data", str(data_dir), "--ckpt", "x", "--mode", "linear"])
        assert info.value.code == 2

    def test_missing_dataset_exit_code(self, tmp_path, config_path):
        args = ["pretrain", "--config", config_path, "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]
        assert main(args) == 3

    def test_corrupt_checkpoint_exit_code(self, tmp_path, config_path, data_dir):
        bad = tmp_path / "bad.crsl"
        bad.write_bytes(b"XXXX" + bytes(40))
        args = ["finetune", "--config", config_path, "--data", str(data_dir), "--out", str(tmp_path / "o")]
        assert main([*args, "--ckpt", str(bad)]) == 3

    def test_env_seed_recorded(self, tmp_path, config_path, data_dir, monkeypatch):
        monkeypatch.setenv("CROSSL_SEED", "9")
        out = tmp_path / "ssl"
        assert main(["pretrain", "--config", config_path, "--data", str(data_dir), "--out", str(out)]) == 0
        assert json.loads((out / CONFIG_FILE).read_text())["train"]["seed"] == 9


class TestEvalAndDrift:
    def test_sweep_mask_report(self, tmp_path, config_path, data_dir):
        out = tmp_path / "sweep"
        args = ["eval", "--config", config_path, "--data", str(data_dir), "--out", str(out)]
        assert main([*args, "--sweep-mask", "--strategy", "spatial", "--grid", "0,1", "--seeds", "0"]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 2
        assert (out / "report.json").exists()

    def test_conflicting_selectors(self, tmp_path, config_path, data_dir):
        with pytest.raises(SystemExit) as info:
            main(["eval", "--config", config_path, "--data", str(data_dir), "--scenario", "--sweep-mask"])
        assert info.value.code == 2

    def test_invalid_grid_exit_code(self, tmp_path, config_path, data_dir):
        args = ["eval", "--config", config_path, "--data", str(data_dir), "--out", str(tmp_path / "o")]
        assert main([*args, "--sweep-mask", "--strategy", "spatial", "--grid", "0.5"]) == 2

    def test_drift(self, tmp_path, config_path, data_dir):
        ssl_out = tmp_path / "ssl"
        assert main(["pretrain", "--config", config_path, "--data", str(data_dir), "--out", str(ssl_out)]) == 0
        out = tmp_path / "drift"
        args = ["drift", "--config", config_path, "--data", str(data_dir), "--out", str(out)]
        assert main([*args, "--ckpt", str(ssl_out / CHECKPOINT_FILE)]) == 0
        report = json.loads((out / DRIFT_FILE).read_text())
        assert [entry["name"] for entry in report["modalities"]] == ["acc", "gyro", "hr"]


class TestHelp:
    def test_epilog_lists_every_config_key(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["--help"])
        assert info.value.code == 0
        listed = set(re.findall(r"^  (\S+) = ", capsys.readouterr().out, flags=re.MULTILINE))
        assert listed == {key for key, _, _ in config_keys()}
