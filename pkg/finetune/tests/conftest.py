"""Fixtures: tiny image corpora and caption-pair manifests on disk."""

import io
import json

import pytest
from PIL import Image


def solid_png(color: tuple[int, int, int], size: tuple[int, int] = (8, 8)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


CAPTIONS = [
    "Panoramic map of a harbor town with rail lines.",
    "Hand colored chart of coastal waters and shoals.",
    "Fire insurance plan of a brick warehouse district.",
    "Topographic survey of a mountain pass and river.",
    "Canal network map with locks and mills marked.",
    "Street grid of a frontier settlement, annotated.",
    "Nautical chart with rhumb lines and soundings.",
    "County map showing townships and school lands.",
]


def build_manifest(tmp_path, count: int = 8):
    """Write count images + manifest; returns the manifest path."""
    image_dir = tmp_path / "images"
    image_dir.mkdir(exist_ok=True)
    manifest = tmp_path / "pairs.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i in range(count):
            color = ((i * 83) % 256, (i * 47) % 256, (i * 29) % 256)
            path = image_dir / f"map{i}.png"
            path.write_bytes(solid_png(color))
            fh.write(json.dumps({
                "image_ref": str(path),
                "caption": CAPTIONS[i % len(CAPTIONS)] + f" Plate {i}.",
            }) + "\n")
    return manifest


@pytest.fixture
def manifest8(tmp_path):
    return build_manifest(tmp_path, 8)
