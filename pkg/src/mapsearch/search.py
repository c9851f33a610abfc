"""Query modes, cosine scoring, top-k selection, and softmax display scores.

A query is embedded (text, image, or a weighted blend of both), scored by
cosine similarity against every column of the index in one pass, reduced to
the k best hits with deterministic tie-breaking, and decorated with
softmax-normalized display scores alongside the raw cosines.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .embedder import EmbedderConfig, encode_image, encode_text
from .errors import (
    AlphaRangeError,
    DegenerateVectorError,
    DimensionMismatchError,
    EmptyIndexError,
    InvalidQueryError,
)
from .store import BetoIndex

MODES = ("text", "image", "multimodal")


@dataclass
class SearchQuery:
    """One search request: which modality, its inputs, blend factor, and k."""

    mode: str
    text: str | None = None
    image: bytes | str | None = None  # raster bytes, or a URL to fetch
    alpha: float = 0.0
    k: int = 10

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidQueryError(f"unknown mode {self.mode!r}")
        if self.mode in ("text", "multimodal") and not (self.text or "").strip():
            raise InvalidQueryError(f"mode {self.mode!r} requires query text")
        if self.mode in ("image", "multimodal") and not self.image:
            raise InvalidQueryError(f"mode {self.mode!r} requires an image input")
        if not -1.0 <= self.alpha <= 1.0:
            raise AlphaRangeError(f"alpha must be in [-1, 1], got {self.alpha}")
        if self.k < 1:
            raise InvalidQueryError(f"k must be >= 1, got {self.k}")


@dataclass
class SearchResult:
    """One ranked hit with both score presentations."""

    rank: int  # 1-based
    iiif_url: str
    raw_score: float
    softmax_score: float
    resource_url: str = ""

    def as_dict(self) -> dict:
        return {
            "rank": self.rank,
            "iiif_url": self.iiif_url,
            "resource_url": self.resource_url,
            "raw_score": self.raw_score,
            "softmax_score": self.softmax_score,
        }


def modality_weights(alpha: float) -> tuple[float, float]:
    """Blend weights (image, text) for a given alpha in [-1, 1].

    alpha=0 weighs both equally; the text:image weight ratio at +alpha is
    the reciprocal of the ratio at -alpha; the weights limit to a single
    modality at the endpoints.
    """
    if not -1.0 <= alpha <= 1.0:
        raise AlphaRangeError(f"alpha must be in [-1, 1], got {alpha}")
    return (1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0


def combine(q: np.ndarray, t: np.ndarray, alpha: float) -> np.ndarray:
    """Weighted blend of image embedding ``q`` and text embedding ``t``.

    Returns ((1-alpha)*q + (1+alpha)*t) / 2, deliberately NOT renormalized:
    cosine ranking is invariant to positive scaling, so the blend's length
    does not matter. The endpoints are exact passthroughs of the single
    remaining modality, with no float drift.
    """
    q = np.asarray(q, dtype=np.float32)
    t = np.asarray(t, dtype=np.float32)
    if q.shape != t.shape:
        raise DimensionMismatchError(
            f"image and text embeddings disagree: {q.shape} vs {t.shape}"
        )
    if alpha == 1.0:
        return t.copy()
    if alpha == -1.0:
        return q.copy()
    w_image, w_text = modality_weights(alpha)
    return (w_image * q + w_text * t).astype(np.float32, copy=False)


def score_all(index: BetoIndex, query: np.ndarray) -> np.ndarray:
    """Cosine similarity of ``query`` against every index column.

    Columns are unit-norm, so after normalizing the query this is a single
    matrix-vector product over the column-major payload. Returns float32
    scores of length n, each in [-1, 1] up to float32 rounding.
    """
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (index.dim,):
        raise DimensionMismatchError(
            f"query has shape {query.shape}, index dimension is {index.dim}"
        )
    norm = float(np.linalg.norm(query))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateVectorError("query vector has zero norm")
    return (query / np.float32(norm)) @ index.matrix


def top_k(scores: np.ndarray, k: int) -> list[tuple[int, float]]:
    """The k largest scores with their indices, descending.

    Ties break by ascending index, exactly matching a full stable sort.
    k larger than n is clamped to n with a warning.
    """
    if k < 1:
        raise InvalidQueryError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores)
    n = scores.shape[0]
    if k > n:
        warnings.warn(f"k={k} clamped to index size {n}", stacklevel=2)
        k = n
    if k == n:
        idx = np.arange(n)
    else:
        # Exact selection under ties: everything strictly above the k-th
        # value, then fill from the equal band in ascending-index order.
        kth = np.partition(scores, n - k)[n - k]
        above = np.flatnonzero(scores > kth)
        need = k - above.shape[0]
        equal = np.flatnonzero(scores == kth)[:need]
        idx = np.concatenate([above, equal])
    order = np.lexsort((idx, -scores[idx].astype(np.float64)))
    idx = idx[order]
    return [(int(i), float(scores[i])) for i in idx]


def softmax_top(scores: np.ndarray) -> np.ndarray:
    """Softmax over the returned top-k scores, for display.

    Max-shifted for stability; output is a float64 probability vector that
    preserves the input ordering.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return scores
    shifted = np.exp(scores - scores.max())
    return shifted / shifted.sum()


def _embed_query(query: SearchQuery, cfg: EmbedderConfig) -> np.ndarray:
    if query.mode == "text":
        return encode_text(query.text, cfg)
    image_vec = None
    if query.mode in ("image", "multimodal"):
        data = query.image
        if isinstance(data, str):
            # URL inputs go through the same fetch path as ingestion.
            from .ingest import fetch_image

            data = fetch_image(data, cfg.image_width_px)
        image_vec = encode_image(data, cfg)
    if query.mode == "image":
        return image_vec
    text_vec = encode_text(query.text, cfg)
    return combine(image_vec, text_vec, query.alpha)


def search(
    index: BetoIndex, query: SearchQuery, cfg: EmbedderConfig
) -> list[SearchResult]:
    """Run one query end to end: embed, score, select, attach display scores."""
    from .ingest import resource_url_for

    if index.count == 0:
        raise EmptyIndexError("index has no columns")
    vector = _embed_query(query, cfg)
    scores = score_all(index, vector)
    hits = top_k(scores, query.k)
    soft = softmax_top(np.array([score for _, score in hits]))
    return [
        SearchResult(
            rank=position + 1,
            iiif_url=index.urls[column],
            raw_score=score,
            softmax_score=float(soft[position]),
            resource_url=resource_url_for(index.urls[column]),
        )
        for position, (column, score) in enumerate(hits)
    ]
