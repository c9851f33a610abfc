"""The contrastive fine-tuning loop: epochs, checkpoints, loss records.

Each epoch shuffles with a generator derived from (seed, epoch), so a run
resumed from any epoch checkpoint walks exactly the same batches as an
uninterrupted run. Checkpoints carry model state, optimizer state, the loss
history, and the epoch cursor; writes are atomic.
"""

from __future__ import annotations

import csv
import math
import os
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch.optim import Adam
from torch.optim.lr_scheduler import LambdaLR

from .data import PairDataset, load_dataset
from .loss import symmetric_infonce
from .model import TwoTowerEncoder

CHECKPOINT_NAME = "checkpoint.pt"
EPOCH_CSV_NAME = "epochs.csv"


@dataclass
class TrainConfig:
    epochs: int = 16
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-6
    weight_decay: float = 0.2
    peak_lr: float = 1e-5
    warmup_fraction: float = 0.1  # linear warmup, then cosine decay to zero
    seed: int = 0
    val_fraction: float = 0.1
    embed_dim: int = 64
    image_size: int = 16
    text_buckets: int = 512

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("contrastive batches need at least 2 pairs")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    average_loss: float
    total_loss: float
    batches: int
    validation_loss: float | None = None

    def as_row(self) -> dict:
        return asdict(self)


def batches_per_epoch(dataset_size: int, batch_size: int) -> int:
    """ceil(N / B): the final short batch still counts."""
    return math.ceil(dataset_size / batch_size)


def lr_lambda_factory(total_steps: int, warmup_fraction: float):
    warmup = max(1, int(total_steps * warmup_fraction))

    def lr_lambda(step: int) -> float:
        if step < warmup:
            return (step + 1) / warmup
        remaining = max(1, total_steps - warmup)
        progress = (step - warmup) / remaining
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return lr_lambda


def _split(dataset: PairDataset, cfg: TrainConfig) -> tuple[torch.Tensor, ...]:
    n = len(dataset)
    generator = torch.Generator().manual_seed(cfg.seed)
    order = torch.randperm(n, generator=generator)
    n_val = int(n * cfg.val_fraction)
    val_idx, train_idx = order[:n_val], order[n_val:]
    return (
        dataset.images[train_idx], dataset.texts[train_idx],
        dataset.images[val_idx], dataset.texts[val_idx],
    )


def _epoch_batches(n: int, batch_size: int, seed: int, epoch: int):
    generator = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    order = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _save_checkpoint(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def _write_epoch_csv(path: Path, records: list[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "average_loss", "total_loss", "batches",
                            "validation_loss"])
        writer.writeheader()
        for record in records:
            writer.writerow(record.as_row())


@torch.no_grad()
def _validation_loss(model, images, texts, batch_size) -> float | None:
    if images.shape[0] < 2:
        return None
    model.eval()
    total, batches = 0.0, 0
    for start in range(0, images.shape[0], batch_size):
        img = images[start : start + batch_size]
        txt = texts[start : start + batch_size]
        if img.shape[0] < 2:
            continue
        total += float(symmetric_infonce(model(img, txt)))
        batches += 1
    model.train()
    return total / batches if batches else None


def train(
    manifest: str | Path,
    cfg: TrainConfig,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> tuple[list[EpochRecord], Path]:
    """Run the fine-tuning loop; returns (epoch records, checkpoint path).

    A checkpoint is written after every epoch. Passing ``resume_from``
    restores model/optimizer state and the epoch cursor, and the remaining
    epochs reproduce an uninterrupted run with the same seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / CHECKPOINT_NAME

    dataset = load_dataset(
        manifest, image_size=cfg.image_size, text_buckets=cfg.text_buckets
    )
    train_images, train_texts, val_images, val_texts = _split(dataset, cfg)
    n = train_images.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training pairs")
    per_epoch = batches_per_epoch(n, cfg.batch_size)
    total_steps = per_epoch * cfg.epochs

    torch.manual_seed(cfg.seed)
    model = TwoTowerEncoder(
        embed_dim=cfg.embed_dim, image_size=cfg.image_size,
        text_buckets=cfg.text_buckets,
    )
    optimizer = Adam(
        model.parameters(), lr=cfg.peak_lr, betas=(cfg.beta1, cfg.beta2),
        eps=cfg.epsilon, weight_decay=cfg.weight_decay,
    )
    scheduler = LambdaLR(
        optimizer, lr_lambda_factory(total_steps, cfg.warmup_fraction)
    )

    records: list[EpochRecord] = []
    start_epoch = 0
    if resume_from is not None:
        state = torch.load(resume_from, weights_only=False)
        model.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        scheduler.load_state_dict(state["scheduler"])
        records = [EpochRecord(**row) for row in state["history"]]
        start_epoch = state["epoch"]

    model.train()
    for epoch in range(start_epoch, cfg.epochs):
        total_loss = 0.0
        batches = 0
        pairs_seen = 0
        for batch_idx in _epoch_batches(n, cfg.batch_size, cfg.seed, epoch):
            optimizer.zero_grad()
            logits = model(train_images[batch_idx], train_texts[batch_idx])
            loss = symmetric_infonce(logits)
            loss.backward()
            optimizer.step()
            scheduler.step()
            total_loss += float(loss.detach())
            batches += 1
            pairs_seen += int(batch_idx.shape[0])
        assert batches == per_epoch
        assert pairs_seen == n
        record = EpochRecord(
            epoch=epoch + 1,
            average_loss=total_loss / batches,
            total_loss=total_loss,
            batches=batches,
            validation_loss=_validation_loss(
                model, val_images, val_texts, cfg.batch_size
            ),
        )
        records.append(record)
        payload = {
            "model": model.state_dict(),
            "optimizer": optimizer.state_dict(),
            "scheduler": scheduler.state_dict(),
            "history": [r.as_row() for r in records],
            "epoch": epoch + 1,
            "config": asdict(cfg),
            "skipped_images": dataset.skipped,
        }
        # Epoch-stamped file so any point of a run can be resumed, plus a
        # stable name for "the latest".
        epoch_path = out_dir / f"checkpoint-ep{epoch + 1:04d}.pt"
        _save_checkpoint(epoch_path, payload)
        shutil.copyfile(epoch_path, checkpoint_path)
        _write_epoch_csv(out_dir / EPOCH_CSV_NAME, records)

    return records, checkpoint_path
