"""Exploratory search over large map collections via unit-norm embeddings."""

from .embedder import EmbedderConfig, encode_image, encode_text, normalize
from .errors import MapSearchError
from .ingest import (
    CatalogRow,
    PipelineReport,
    derive_resource_id,
    fetch_image,
    read_catalog,
    run_pipeline,
)
from .search import (
    SearchQuery,
    SearchResult,
    combine,
    modality_weights,
    score_all,
    search,
    softmax_top,
    top_k,
)
from .store import (
    BetoIndex,
    IndexStats,
    build_beto,
    load_index,
    save_index,
    stats,
    synthetic_index,
)

__version__ = "0.1.0"

__all__ = [
    "BetoIndex",
    "CatalogRow",
    "EmbedderConfig",
    "IndexStats",
    "MapSearchError",
    "PipelineReport",
    "SearchQuery",
    "SearchResult",
    "build_beto",
    "combine",
    "derive_resource_id",
    "encode_image",
    "encode_text",
    "fetch_image",
    "load_index",
    "modality_weights",
    "normalize",
    "read_catalog",
    "run_pipeline",
    "save_index",
    "score_all",
    "search",
    "softmax_top",
    "stats",
    "synthetic_index",
    "top_k",
]
