"""Caption-pair manifests and lightweight feature extraction.

The manifest format is line-delimited JSON records {image_ref, caption},
as produced by the dataset builder. Image references may be local paths or
file:// URLs; anything that cannot be opened is skipped with a warning so a
partially-fetched corpus still trains.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse
from urllib.request import url2pathname

import numpy as np
import torch
from PIL import Image

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass
class CaptionPair:
    image_ref: str
    caption: str


def read_manifest(path: str | Path) -> list[CaptionPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                record = json.loads(line)
                pairs.append(CaptionPair(record["image_ref"], record["caption"]))
    return pairs


def _local_path(image_ref: str) -> Path | None:
    parsed = urlparse(image_ref)
    if parsed.scheme in ("", "file"):
        return Path(url2pathname(parsed.path) if parsed.scheme else image_ref)
    return None


def image_features(image_ref: str, image_size: int) -> np.ndarray | None:
    """Flattened RGB pixels of the image at a small fixed size, or None when
    the reference cannot be resolved/decoded."""
    path = _local_path(image_ref)
    if path is None or not path.exists():
        return None
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((image_size, image_size))
    except OSError:
        return None
    pixels = np.asarray(rgb, dtype=np.float32) / 255.0
    return pixels.reshape(-1)


def text_features(caption: str, buckets: int) -> np.ndarray:
    """Hashed bag-of-words counts; cheap, deterministic, collision-tolerant."""
    out = np.zeros(buckets, dtype=np.float32)
    for token in _TOKEN.findall(caption.lower()):
        # stable across processes, unlike hash()
        code = 0
        for ch in token:
            code = (code * 131 + ord(ch)) % 1_000_003
        out[code % buckets] += 1.0
    return out


@dataclass
class PairDataset:
    """Materialized features for every resolvable pair in a manifest."""

    images: torch.Tensor  # N x (3 * image_size^2)
    texts: torch.Tensor  # N x buckets
    refs: list[str]
    skipped: list[str]

    def __len__(self) -> int:
        return self.images.shape[0]


def load_dataset(
    manifest: str | Path, image_size: int = 16, text_buckets: int = 512
) -> PairDataset:
    pairs = read_manifest(manifest)
    if not pairs:
        raise ValueError(f"manifest {manifest} is empty")
    images, texts, refs, skipped = [], [], [], []
    for pair in pairs:
        feats = image_features(pair.image_ref, image_size)
        if feats is None:
            log.warning("skipping unresolvable image %s", pair.image_ref)
            skipped.append(pair.image_ref)
            continue
        images.append(feats)
        texts.append(text_features(pair.caption, text_buckets))
        refs.append(pair.image_ref)
    if not images:
        raise ValueError(f"no resolvable images in {manifest}")
    return PairDataset(
        images=torch.from_numpy(np.stack(images)),
        texts=torch.from_numpy(np.stack(texts)),
        refs=refs,
        skipped=skipped,
    )
