"""HTTP search service: the three query modes, index stats, and health.

Stateless over an immutable loaded index; every response is a pure function
of (request, index, embedder config). Error bodies always carry a
machine-readable {code, message} pair.
"""

from __future__ import annotations

import base64
import binascii
import warnings
from contextlib import asynccontextmanager
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .embedder import EmbedderConfig
from .errors import (
    AlphaRangeError,
    EmptyIndexError,
    FetchFailedError,
    ImageDecodeError,
    InvalidQueryError,
    MapSearchError,
)
from .ingest import fetch_image
from .search import SearchQuery, SearchResult, search as run_search
from .store import BetoIndex, load_index, stats

DEFAULT_MAX_K = 100
DEFAULT_MAX_UPLOAD = 20 * 2**20  # 20 MB image cap

_STATUS_FOR = {
    InvalidQueryError: 422,
    AlphaRangeError: 400,
    ImageDecodeError: 415,
    FetchFailedError: 502,
    EmptyIndexError: 503,
}


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    index_path: Path | None = None
    embedder: EmbedderConfig = dataclass_field(default_factory=EmbedderConfig)
    max_k: int = DEFAULT_MAX_K
    request_timeout: float = 30.0
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    cors_origins: list[str] = dataclass_field(default_factory=lambda: ["*"])
    console_dir: Path | None = None  # static web-console bundle to serve at /

    def __post_init__(self) -> None:
        if self.max_k < 1:
            raise ValueError(f"max_k must be >= 1, got {self.max_k}")


class TextSearch(BaseModel):
    query: str
    k: int = Field(default=10, ge=1)
    scores: Literal["raw", "softmax", "both"] = "both"


class ImageSearch(BaseModel):
    url: str | None = None
    image_b64: str | None = None
    k: int = Field(default=10, ge=1)
    scores: Literal["raw", "softmax", "both"] = "both"


class MultimodalSearch(BaseModel):
    text: str
    url: str | None = None
    image_b64: str | None = None
    alpha: float = 0.0
    k: int = Field(default=10, ge=1)
    scores: Literal["raw", "softmax", "both"] = "both"


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _result_payload(
    results: list[SearchResult], scores: str, clamp_warnings: list[str]
) -> dict:
    rows = []
    for r in results:
        row: dict = {
            "rank": r.rank,
            "iiif_url": r.iiif_url,
            "resource_url": r.resource_url,
        }
        if scores in ("raw", "both"):
            row["raw_score"] = r.raw_score
        if scores in ("softmax", "both"):
            row["softmax_score"] = r.softmax_score
        rows.append(row)
    return {"results": rows, "count": len(rows), "warnings": clamp_warnings}


def create_app(
    config: ServiceConfig | None = None, index: BetoIndex | None = None
) -> FastAPI:
    """Build the service; pass a preloaded index or let the config point at one."""
    config = config or ServiceConfig()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.index is None and config.index_path is not None:
            app.state.index = load_index(config.index_path)
        yield

    app = FastAPI(title="mapsearch", version="1", lifespan=lifespan)
    app.state.config = config
    app.state.index = index
    app.add_middleware(
        CORSMiddleware,
        allow_origins=config.cors_origins,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _invalid_body(request: Request, exc: RequestValidationError):
        return _error(400, "invalid-body", str(exc.errors()[:3]))

    @app.exception_handler(MapSearchError)
    async def _domain_error(request: Request, exc: MapSearchError):
        for klass, status in _STATUS_FOR.items():
            if isinstance(exc, klass):
                return _error(status, exc.code, str(exc))
        return _error(500, exc.code, str(exc))

    def require_index() -> BetoIndex:
        idx = app.state.index
        if idx is None:
            raise _NotLoaded()
        return idx

    def check_k(k: int) -> None:
        if k > config.max_k:
            raise _KTooLarge(k, config.max_k)

    def resolve_image(url: str | None, image_b64: str | None) -> bytes | str:
        if (url is None) == (image_b64 is None):
            raise _ImageFieldError()
        if url is not None:
            return fetch_image(
                url, config.embedder.image_width_px, timeout=config.request_timeout
            )
        try:
            data = base64.b64decode(image_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ImageDecodeError(f"image_b64 is not valid base64: {exc}") from exc
        if len(data) > config.max_upload_bytes:
            raise _UploadTooLarge(len(data), config.max_upload_bytes)
        return data

    def run_query(query: SearchQuery, scores: str) -> dict:
        idx = require_index()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            results = run_search(idx, query, config.embedder)
        clamp = [str(w.message) for w in caught if "clamped" in str(w.message)]
        return _result_payload(results, scores, clamp)

    @app.post("/v1/search/text")
    def search_text(body: TextSearch) -> dict:
        check_k(body.k)
        if not body.query.strip():
            raise InvalidQueryError("query text is empty")
        return run_query(
            SearchQuery(mode="text", text=body.query, k=body.k), body.scores
        )

    @app.post("/v1/search/image")
    def search_image(body: ImageSearch) -> dict:
        check_k(body.k)
        image = resolve_image(body.url, body.image_b64)
        return run_query(
            SearchQuery(mode="image", image=image, k=body.k), body.scores
        )

    @app.post("/v1/search/multimodal")
    def search_multimodal(body: MultimodalSearch) -> dict:
        check_k(body.k)
        if not body.text.strip():
            raise InvalidQueryError("query text is empty")
        if not -1.0 <= body.alpha <= 1.0:
            raise AlphaRangeError(f"alpha must be in [-1, 1], got {body.alpha}")
        image = resolve_image(body.url, body.image_b64)
        return run_query(
            SearchQuery(
                mode="multimodal",
                text=body.text,
                image=image,
                alpha=body.alpha,
                k=body.k,
            ),
            body.scores,
        )

    @app.get("/v1/index/stats")
    def index_stats() -> dict:
        return stats(require_index()).as_dict()

    @app.get("/v1/health")
    def health():
        if app.state.index is None:
            return _error(503, "index-not-loaded", "no index loaded")
        return {"status": "ok"}

    @app.exception_handler(_NotLoaded)
    async def _not_loaded(request: Request, exc: "_NotLoaded"):
        return _error(503, "index-not-loaded", "no index loaded")

    @app.exception_handler(_KTooLarge)
    async def _k_too_large(request: Request, exc: "_KTooLarge"):
        return _error(400, "invalid-body", str(exc))

    @app.exception_handler(_ImageFieldError)
    async def _image_fields(request: Request, exc: "_ImageFieldError"):
        return _error(400, "invalid-body", "exactly one of url / image_b64 is required")

    @app.exception_handler(_UploadTooLarge)
    async def _too_large(request: Request, exc: "_UploadTooLarge"):
        return _error(413, "image-too-large", str(exc))

    if config.console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount(
            "/", StaticFiles(directory=config.console_dir, html=True), name="console"
        )

    return app


class _NotLoaded(Exception):
    pass


class _KTooLarge(Exception):
    def __init__(self, k: int, max_k: int):
        super().__init__(f"k={k} exceeds max_k={max_k}")


class _ImageFieldError(Exception):
    pass


class _UploadTooLarge(Exception):
    def __init__(self, size: int, cap: int):
        super().__init__(f"image is {size} bytes, cap is {cap}")


def serve(config: ServiceConfig, index: BetoIndex | None = None) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    app = create_app(config, index=index)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
