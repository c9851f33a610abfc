"""Training loop behavior: batch accounting, checkpoints, resume, data IO."""

import json

import pytest
import torch

from maptune.data import load_dataset, text_features
from maptune.train import (
    EPOCH_CSV_NAME,
    EpochRecord,
    TrainConfig,
    batches_per_epoch,
    train,
)

from conftest import build_manifest, solid_png


def quick_config(**overrides) -> TrainConfig:
    base = dict(
        epochs=2, batch_size=4, peak_lr=1e-2, weight_decay=0.0,
        val_fraction=0.0, seed=3, embed_dim=16, image_size=8, text_buckets=64,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestBatchAccounting:
    def test_appendix_arithmetic(self):
        assert batches_per_epoch(15_000, 32) == 469

    @pytest.mark.parametrize("n,b,expected", [
        (32, 32, 1), (33, 32, 2), (31, 32, 1), (64, 32, 2), (1, 32, 1),
    ])
    def test_ceiling_division(self, n, b, expected):
        assert batches_per_epoch(n, b) == expected

    def test_epoch_records_carry_batch_count(self, manifest8, tmp_path):
        records, _ = train(manifest8, quick_config(), tmp_path / "run")
        assert all(r.batches == batches_per_epoch(8, 4) == 2 for r in records)
        assert [r.epoch for r in records] == [1, 2]

    def test_batch_size_floor(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1)


class TestCheckpointAndResume:
    def test_checkpoint_written_each_epoch(self, manifest8, tmp_path):
        out = tmp_path / "run"
        records, checkpoint = train(manifest8, quick_config(), out)
        assert checkpoint.exists()
        state = torch.load(checkpoint, weights_only=False)
        assert state["epoch"] == 2
        assert len(state["history"]) == 2
        assert "model" in state and "optimizer" in state

    def test_epoch_csv_matches_records(self, manifest8, tmp_path):
        out = tmp_path / "run"
        records, _ = train(manifest8, quick_config(), out)
        lines = (out / EPOCH_CSV_NAME).read_text().strip().splitlines()
        assert len(lines) == 1 + len(records)
        assert lines[0].startswith("epoch,average_loss,total_loss,batches")

    def test_resume_reproduces_uninterrupted_run(self, manifest8, tmp_path):
        cfg = quick_config(epochs=4)
        full_records, _ = train(manifest8, cfg, tmp_path / "full")

        # resume from the epoch-2 snapshot, as if the run had died there
        midpoint = tmp_path / "full" / "checkpoint-ep0002.pt"
        resumed_records, _ = train(
            manifest8, cfg, tmp_path / "resumed", resume_from=midpoint
        )
        assert len(resumed_records) == 4
        for full, resumed in zip(full_records, resumed_records):
            assert resumed.average_loss == pytest.approx(
                full.average_loss, rel=1e-6
            )
            assert resumed.batches == full.batches

    def test_same_seed_same_losses(self, manifest8, tmp_path):
        cfg = quick_config()
        a, _ = train(manifest8, cfg, tmp_path / "a")
        b, _ = train(manifest8, cfg, tmp_path / "b")
        assert [r.average_loss for r in a] == [r.average_loss for r in b]


class TestDataHandling:
    def test_empty_manifest_fatal(self, tmp_path):
        manifest = tmp_path / "empty.jsonl"
        manifest.write_text("")
        with pytest.raises(ValueError):
            train(manifest, quick_config(), tmp_path / "run")

    def test_unresolvable_images_skipped_with_warning(self, tmp_path, caplog):
        manifest = build_manifest(tmp_path, 6)
        with open(manifest, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({
                "image_ref": str(tmp_path / "images" / "ghost.png"),
                "caption": "A caption whose image is gone.",
            }) + "\n")
        with caplog.at_level("WARNING"):
            dataset = load_dataset(manifest, image_size=8, text_buckets=64)
        assert len(dataset) == 6
        assert len(dataset.skipped) == 1
        assert "ghost" in dataset.skipped[0]

    def test_file_url_refs_resolve(self, tmp_path):
        image = tmp_path / "img.png"
        image.write_bytes(solid_png((9, 9, 9)))
        manifest = tmp_path / "m.jsonl"
        manifest.write_text(json.dumps({
            "image_ref": image.as_uri(), "caption": "A map."
        }) + "\n")
        dataset = load_dataset(manifest, image_size=8, text_buckets=64)
        assert len(dataset) == 1

    def test_pair_counts_per_epoch_exclude_skipped(self, tmp_path):
        manifest = build_manifest(tmp_path, 5)
        with open(manifest, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({
                "image_ref": str(tmp_path / "nowhere.png"), "caption": "x y z.",
            }) + "\n")
        records, checkpoint = train(manifest, quick_config(), tmp_path / "run")
        state = torch.load(checkpoint, weights_only=False)
        assert state["skipped_images"] == [str(tmp_path / "nowhere.png")]
        assert records[0].batches == batches_per_epoch(5, 4)

    def test_text_features_deterministic_and_distinct(self):
        a = text_features("harbor chart with rhumb lines", 64)
        b = text_features("harbor chart with rhumb lines", 64)
        c = text_features("fire insurance plan of a warehouse", 64)
        assert (a == b).all()
        assert (a != c).any()


class TestValidationSplit:
    def test_split_reported_when_enabled(self, tmp_path):
        manifest = build_manifest(tmp_path, 40)
        cfg = quick_config(val_fraction=0.25, epochs=1, batch_size=8)
        records, _ = train(manifest, cfg, tmp_path / "run")
        assert records[0].validation_loss is not None
        # 30 train pairs -> 4 batches of 8
        assert records[0].batches == batches_per_epoch(30, 8)
