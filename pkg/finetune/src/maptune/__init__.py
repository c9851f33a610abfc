"""Contrastive fine-tuning harness for map-caption pair manifests."""

from .data import PairDataset, load_dataset, read_manifest
from .loss import symmetric_infonce
from .model import TwoTowerEncoder
from .train import EpochRecord, TrainConfig, batches_per_epoch, train

__version__ = "0.1.0"

__all__ = [
    "EpochRecord",
    "PairDataset",
    "TrainConfig",
    "TwoTowerEncoder",
    "batches_per_epoch",
    "load_dataset",
    "read_manifest",
    "symmetric_infonce",
    "train",
]
