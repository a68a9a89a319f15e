"""Tests for datasets, storage, synthetic generation and transforms."""

import json
import struct
import zlib

import numpy as np
import pytest

from crossl.core.config import ModalityConfig, SyntheticConfig
from crossl.core.errors import ChecksumError, ConfigError, DatasetError, LabelError, ScenarioError
from crossl.data import (
    MissingScenario,
    MultimodalDataset,
    dataset_fingerprint,
    generate_synthetic,
    load_dataset,
    make_batches,
    save_dataset,
    simulate_missing,
    subsample_labels,
)
from crossl.data.storage import decode_payload, encode_payload
from crossl.data.synthetic import class_frequency
from crossl.eval import macro_f1
from crossl.kernel import Rng

from tests.conftest import make_dataset


def assert_zero_fill(dataset: MultimodalDataset) -> None:
    for index, window in enumerate(dataset.windows):
        assert not window[~dataset.availability[:, index]].any()


class TestMultimodalDataset:
    def test_unavailable_must_be_zero(self):
        dataset = make_dataset(4)
        availability = dataset.availability.copy()
        availability[0, 0] = False
        with pytest.raises(DatasetError, match="availability"):
            dataset.replace(availability=availability)

    def test_label_out_of_range(self):
        with pytest.raises(DatasetError, match="labels"):
            make_dataset(4, num_classes=2, labels=np.array([0, 1, 2, 0]))

    def test_arrays_read_only(self):
        dataset = make_dataset(4)
        with pytest.raises(ValueError):
            dataset.windows[0][0, 0, 0] = 1.0

    def test_fingerprint_tracks_content(self):
        a, b = make_dataset(6), make_dataset(6)
        assert dataset_fingerprint(a) == dataset_fingerprint(b)
        assert dataset_fingerprint(a) != dataset_fingerprint(make_dataset(6, seed=1))


class TestSynthetic:
    def test_deterministic(self, tiny_synthetic):
        assert generate_synthetic(tiny_synthetic).equals(generate_synthetic(tiny_synthetic))

    def test_seed_changes_data(self, tiny_synthetic):
        other = tiny_synthetic.model_copy(update={"seed": 1})
        assert not generate_synthetic(tiny_synthetic).equals(generate_synthetic(other))

    def test_default_shapes(self):
        dataset = generate_synthetic(SyntheticConfig(samples_per_class=10))
        assert [w.shape for w in dataset.windows] == [(40, 50, 3), (40, 100, 3), (40, 25, 1)]
        assert dataset.availability.all()

    def test_stratified_splits(self):
        dataset = generate_synthetic(SyntheticConfig(samples_per_class=50))
        for split in ("train", "val", "test"):
            counts = np.bincount(dataset.labels[dataset.indices(split)], minlength=4)
            assert counts.max() - counts.min() <= 1

    def test_class_frequency_is_spectral_peak(self):
        cfg = SyntheticConfig(samples_per_class=5, noise_std=0.0, nuisance_std=0.0)
        dataset = generate_synthetic(cfg)
        for window, modality in zip(dataset.windows, dataset.modalities):
            spectrum = np.abs(np.fft.rfft(window[:, :, 0], axis=1))
            peaks = spectrum[:, 1:].argmax(axis=1) + 1
            expected = [class_frequency(int(y)) for y in dataset.labels]
            np.testing.assert_array_equal(peaks, expected, err_msg=modality.name)

    def test_within_class_difference_is_phase_only(self):
        cfg = SyntheticConfig(samples_per_class=5, noise_std=0.0, nuisance_std=0.0)
        dataset = generate_synthetic(cfg)
        window = dataset.windows[0][:, :, 0]
        amplitude = np.abs(np.fft.rfft(window, axis=1))
        same = np.flatnonzero(dataset.labels == dataset.labels[0])
        np.testing.assert_allclose(amplitude[same], amplitude[same[0]], atol=1e-9)

    def test_linearly_separable_from_class_spectra(self):
        dataset = generate_synthetic(SyntheticConfig())
        bins = [class_frequency(label) for label in range(dataset.num_classes)]
        # magnitude at every class frequency, per modality, averaged over channels
        features = np.concatenate(
            [np.abs(np.fft.rfft(window, axis=1))[:, bins].mean(axis=2) for window in dataset.windows], axis=1
        )
        features = np.hstack([features, np.ones((dataset.size, 1))])
        targets = np.eye(dataset.num_classes)[dataset.labels]

        train, test = dataset.indices("train"), dataset.indices("test")
        weights = np.linalg.lstsq(features[train], targets[train], rcond=None)[0]
        predictions = (features[test] @ weights).argmax(axis=1)
        score, _ = macro_f1(predictions, dataset.labels[test], dataset.num_classes)
        assert score >= 0.95


class TestStorage:
    def test_round_trip(self, tiny_dataset, tmp_path):
        manifest = save_dataset(tiny_dataset, tmp_path)
        assert load_dataset(manifest).equals(tiny_dataset)
        assert load_dataset(tmp_path).equals(tiny_dataset)

    def test_round_trip_keeps_unlabeled_flags(self, tiny_dataset, tmp_path):
        subset = subsample_labels(tiny_dataset, 0.2, seed=0)
        save_dataset(subset, tmp_path)
        assert load_dataset(tmp_path).equals(subset)

    def test_hand_written_fixture(self, tmp_path):
        values = np.array([1.0, 2.0, 3.0, -1.0, -2.0, -3.0])
        body = b"CRSD" + struct.pack("<IIII", 1, 2, 3, 1) + values.astype("<f8").tobytes()
        (tmp_path / "x.crsd").write_bytes(body + struct.pack("<I", zlib.crc32(body)))
        (tmp_path / "labels.txt").write_text("0\n1\n", encoding="ascii")
        (tmp_path / "availability.txt").write_text("1\n1\n", encoding="ascii")
        (tmp_path / "splits.txt").write_text("train\ntest\n", encoding="ascii")
        manifest = {
            "format_version": 1,
            "num_classes": 2,
            "modalities": [{"name": "x", "channels": 1, "window_len": 3, "sampling_rate": 1.0, "payload_file": "x.crsd"}],
            "labels_file": "labels.txt",
            "availability_file": "availability.txt",
            "splits_file": "splits.txt",
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")

        dataset = load_dataset(tmp_path / "manifest.json")
        np.testing.assert_array_equal(dataset.windows[0][:, :, 0], [[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]])
        np.testing.assert_array_equal(dataset.labels, [0, 1])
        np.testing.assert_array_equal(dataset.splits, ["train", "test"])

    def test_window_len_mismatch(self, tmp_path):
        dataset = MultimodalDataset(
            modalities=(ModalityConfig(name="a", channels=1, window_len=49),),
            windows=(np.zeros((2, 49, 1)),),
            availability=np.ones((2, 1), dtype=bool),
            splits=np.array(["train", "val"]),
            num_classes=2,
            labels=np.array([0, 1]),
        )
        manifest_path = save_dataset(dataset, tmp_path)
        manifest = json.loads(manifest_path.read_text())
        manifest["modalities"][0]["window_len"] = 50
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(DatasetError) as info:
            load_dataset(manifest_path)
        assert info.value.field == "modalities[0].window_len"

    def test_missing_payload(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        (tmp_path / "gyro.crsd").unlink()
        with pytest.raises(DatasetError) as info:
            load_dataset(tmp_path)
        assert info.value.field == "modalities[1].payload_file"

    def test_label_out_of_range_on_disk(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        lines = (tmp_path / "labels.txt").read_text().splitlines()
        lines[0] = "7"
        (tmp_path / "labels.txt").write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError) as info:
            load_dataset(tmp_path)
        assert info.value.field == "labels_file"

    def test_unknown_manifest_key(self, tiny_dataset, tmp_path):
        manifest_path = save_dataset(tiny_dataset, tmp_path)
        manifest = json.loads(manifest_path.read_text())
        manifest["extra"] = 1
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(DatasetError):
            load_dataset(manifest_path)

    def test_payload_checksum(self):
        data = bytearray(encode_payload(np.ones((2, 3, 1))))
        data[30] ^= 0x01
        with pytest.raises(ChecksumError):
            decode_payload(bytes(data))

    def test_identical_datasets_identical_files(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path / "a")
        save_dataset(tiny_dataset, tmp_path / "b")
        for name in ("acc.crsd", "gyro.crsd", "hr.crsd", "manifest.json", "labels.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestSubsampleLabels:
    @pytest.fixture
    def thousand(self) -> MultimodalDataset:
        splits = np.array(["train"] * 1000 + ["val"] * 100 + ["test"] * 100)
        return make_dataset(1200, splits=splits, window_len=1)

    def test_full_fraction_is_identity(self, thousand):
        assert subsample_labels(thousand, 1.0, seed=0).equals(thousand)

    def test_one_percent(self, thousand):
        subset = subsample_labels(thousand, 0.01, seed=0)
        kept = subset.indices("train", labeled_only=True)
        assert len(kept) == 10
        counts = np.bincount(subset.labels[kept], minlength=4)
        assert counts.min() >= 1
        assert subset.labeled[subset.splits != "train"].all()

    def test_seeds_change_subset_not_counts(self, thousand):
        a = subsample_labels(thousand, 0.1, seed=0)
        b = subsample_labels(thousand, 0.1, seed=1)
        kept_a, kept_b = a.indices("train", labeled_only=True), b.indices("train", labeled_only=True)
        assert not np.array_equal(kept_a, kept_b)
        np.testing.assert_array_equal(np.bincount(a.labels[kept_a]), np.bincount(b.labels[kept_b]))

    def test_idempotent(self, thousand):
        once = subsample_labels(thousand, 0.05, seed=3)
        assert subsample_labels(once, 0.05, seed=3).equals(once)

    def test_tiny_fraction_keeps_every_class(self):
        dataset = make_dataset(40, num_classes=4)
        subset = subsample_labels(dataset, 0.01, seed=0)
        kept = subset.indices("train", labeled_only=True)
        assert set(subset.labels[kept]) == {0, 1, 2, 3}

    @pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
    def test_invalid_fraction(self, thousand, fraction):
        with pytest.raises(ConfigError):
            subsample_labels(thousand, fraction, seed=0)

    def test_requires_labels(self):
        dataset = make_dataset(4)
        unlabeled = MultimodalDataset(
            modalities=dataset.modalities,
            windows=dataset.windows,
            availability=dataset.availability,
            splits=dataset.splits,
            num_classes=4,
        )
        with pytest.raises(LabelError):
            subsample_labels(unlabeled, 0.5, seed=0)


class TestSimulateMissing:
    @pytest.fixture
    def split_dataset(self) -> MultimodalDataset:
        splits = np.array(["train"] * 300 + ["val"] * 300 + ["test"] * 3000)
        return make_dataset(3600, splits=splits, window_len=1)

    def test_none_phase(self, split_dataset):
        result = simulate_missing(split_dataset, MissingScenario(phase="none", missing_count=1), Rng(0))
        assert result.availability.all()

    def test_inference_only(self, split_dataset):
        result = simulate_missing(split_dataset, MissingScenario(phase="inference_only", missing_count=1), Rng(0))
        test = result.splits == "test"
        assert result.availability[~test].all()
        np.testing.assert_array_equal((~result.availability[test]).sum(axis=1), 1)
        assert_zero_fill(result)

    def test_finetune_and_inference(self, split_dataset):
        result = simulate_missing(
            split_dataset, MissingScenario(phase="finetune_and_inference", missing_count=2), Rng(0)
        )
        np.testing.assert_array_equal((~result.availability).sum(axis=1), 2)
        assert_zero_fill(result)

    def test_uniform_choice(self, split_dataset):
        result = simulate_missing(split_dataset, MissingScenario(phase="inference_only", missing_count=1), Rng(1))
        missing = (~result.availability[result.splits == "test"]).mean(axis=0)
        np.testing.assert_allclose(missing, 1 / 3, atol=0.03)

    def test_deterministic(self, split_dataset):
        scenario = MissingScenario(phase="inference_only", missing_count=1, seed=4)
        assert simulate_missing(split_dataset, scenario).equals(simulate_missing(split_dataset, scenario))

    def test_count_must_leave_a_modality(self, split_dataset):
        with pytest.raises(ScenarioError):
            simulate_missing(split_dataset, MissingScenario(phase="inference_only", missing_count=3), Rng(0))


class TestBatches:
    def test_ssl_mode_drops_short_batch(self):
        batches = make_batches(make_dataset(10), "train", 4, shuffle_seed=0, mode="ssl")
        assert [b.size for b in batches] == [4, 4]

    def test_eval_mode_keeps_everything(self):
        batches = make_batches(make_dataset(10), "train", 4, shuffle_seed=0, mode="eval")
        assert [b.size for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate([b.indices for b in batches])) == list(range(10))

    def test_same_seed_same_order(self):
        dataset = make_dataset(10)
        a = make_batches(dataset, "train", 4, shuffle_seed=3)
        b = make_batches(dataset, "train", 4, shuffle_seed=3)
        assert all(np.array_equal(x.indices, y.indices) for x, y in zip(a, b))

    def test_no_seed_keeps_order(self):
        batches = make_batches(make_dataset(6), "train", 4)
        np.testing.assert_array_equal(np.concatenate([b.indices for b in batches]), np.arange(6))

    def test_supervised_mode_uses_labeled_only(self):
        dataset = subsample_labels(make_dataset(40), 0.25, seed=0)
        batches = make_batches(dataset, "train", 4, mode="supervised")
        indices = np.concatenate([b.indices for b in batches])
        assert dataset.labeled[indices].all()
        assert len(indices) == 10

    def test_batch_size_too_small(self):
        with pytest.raises(ConfigError):
            make_batches(make_dataset(4), "train", 1)
