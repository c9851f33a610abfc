"""Embedding backends for text and images in one shared vector space.

Two backends sit behind the same pair of functions:

- ``test``: a deterministic stand-in for a real multimodal model. It hashes
  the input (text, or the canonicalized image raster) together with a seed,
  keys a counter-based generator with the digest, and draws a standard-normal
  vector which is then normalized. Collision-resistant, stable across runs
  and platforms, uniform on the unit sphere.
- ``adapter``: an opaque callable supplied by the caller that talks to an
  external model (process, service, whatever). The engine never sees the
  model runtime; it only validates dimension and normalizes the output.

Every vector emitted here is unit-norm float32.
"""

from __future__ import annotations

import base64
import hashlib
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DegenerateVectorError,
    DimensionMismatchError,
    ImageDecodeError,
    InvalidQueryError,
)

DEFAULT_DIM = 512
DEFAULT_IMAGE_WIDTH = 2000

# request dict {kind, payload} -> response dict {values}
AdapterFn = Callable[[dict[str, Any]], dict[str, Any]]


@dataclass(frozen=True)
class EmbedderConfig:
    """Immutable embedding configuration.

    ``backend`` selects between the deterministic test backend ("test") and
    an external model adapter ("adapter"); the latter requires ``adapter``
    to be set. ``seed`` only affects the test backend. ``image_width_px``
    is the canonical width images are resized to before hashing.
    """

    dim: int = DEFAULT_DIM
    backend: str = "test"
    seed: int = 0
    image_width_px: int = DEFAULT_IMAGE_WIDTH
    adapter: AdapterFn | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.image_width_px < 1:
            raise ValueError(f"image_width_px must be >= 1, got {self.image_width_px}")
        if self.backend not in ("test", "adapter"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "adapter" and self.adapter is None:
            raise ValueError("backend 'adapter' requires an adapter callable")


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit L2 norm, as float32.

    Raises DegenerateVectorError for the zero vector (and anything whose
    norm underflows to zero in float32).
    """
    arr = np.asarray(v, dtype=np.float32)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d vector, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateVectorError("cannot normalize a zero or non-finite vector")
    return arr / np.float32(norm)


def _test_backend_vector(kind: str, payload: bytes, cfg: EmbedderConfig) -> np.ndarray:
    # Digest keys a Philox stream; 128 bits is plenty to keep distinct
    # inputs on distinct streams.
    h = hashlib.blake2b(digest_size=16)
    h.update(kind.encode("ascii"))
    h.update(cfg.seed.to_bytes(8, "little", signed=True))
    h.update(payload)
    key = int.from_bytes(h.digest(), "little")
    rng = np.random.Generator(np.random.Philox(key=key))
    raw = rng.standard_normal(cfg.dim, dtype=np.float32)
    return normalize(raw)


def _adapter_vector(kind: str, payload: Any, cfg: EmbedderConfig) -> np.ndarray:
    assert cfg.adapter is not None
    response = cfg.adapter({"kind": kind, "payload": payload})
    values = np.asarray(response["values"], dtype=np.float32)
    if values.shape != (cfg.dim,):
        raise DimensionMismatchError(
            f"adapter returned shape {values.shape}, expected ({cfg.dim},)"
        )
    return normalize(values)


def encode_text(text: str, cfg: EmbedderConfig) -> np.ndarray:
    """Embed a text string; returns a unit-norm vector of length cfg.dim.

    Deterministic for a fixed (text, cfg) under the test backend. Leading
    and trailing whitespace is not significant.
    """
    trimmed = text.strip()
    if not trimmed:
        raise InvalidQueryError("query text is empty")
    if cfg.backend == "adapter":
        return _adapter_vector("text", trimmed, cfg)
    return _test_backend_vector("text", trimmed.encode("utf-8"), cfg)


def canonical_raster(data: bytes, width_px: int) -> bytes:
    """Decode image bytes and reduce them to a canonical lossless raster.

    The image is converted to RGB and resized to ``width_px`` wide with
    aspect ratio preserved; the result is the raw pixel buffer prefixed by
    its geometry. Two encodings of the same content at different stored
    resolutions map to the same canonical bytes, which is what makes the
    test backend resolution-invariant.
    """
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc
    if rgb.width != width_px:
        height = max(1, round(rgb.height * width_px / rgb.width))
        rgb = rgb.resize((width_px, height), resample=Image.LANCZOS)
    header = f"RGB:{rgb.width}x{rgb.height}:".encode("ascii")
    return header + rgb.tobytes()


def encode_image(data: bytes, cfg: EmbedderConfig) -> np.ndarray:
    """Embed raster image bytes; returns a unit-norm vector of length cfg.dim.

    Any input resolution is accepted; images are canonicalized to
    cfg.image_width_px wide internally. Undecodable bytes raise
    ImageDecodeError.
    """
    if cfg.backend == "adapter":
        # The adapter gets the untouched bytes; preprocessing is its business.
        payload = base64.b64encode(data).decode("ascii")
        return _adapter_vector("image", payload, cfg)
    return _test_backend_vector("image", canonical_raster(data, cfg.image_width_px), cfg)
