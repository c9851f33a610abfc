"""Catalog-to-records ingestion: stream CSV rows, fetch images, write records.

Each catalog row names an image by IIIF URL. Workers fetch the image at a
fixed width, embed it, and write one JSON record per image, named by a
filesystem-sanitized form of its IIIF URL. Runs are resumable (existing
record files are skipped) and failure-tolerant (one bad row never stops the
run; it lands in the report instead).
"""

from __future__ import annotations

import csv
import json
import os
import re
import threading
import time
from collections import defaultdict
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator
from urllib.parse import urlparse
from urllib.request import url2pathname

import requests

from .embedder import EmbedderConfig, encode_image
from .errors import (
    CatalogSchemaError,
    FetchFailedError,
    FetchTimeoutError,
    PipelineConfigError,
)

_RESOURCE_COLUMNS = ("resource_url", "resource", "loc_url")
_IIIF_COLUMNS = ("iiif_url", "iiif_image_url", "iiif")
_SEGMENT_SUFFIX = re.compile(r"[A-Za-z]{1,2}\d+")
_FILENAME_SAFE = re.compile(r"[^A-Za-z0-9._-]")

FetcherFn = Callable[[str, int], bytes]
BadRowFn = Callable[[int, str, dict], None]


@dataclass
class CatalogRow:
    """One catalog entry: where the image lives and where its record page is."""

    resource_url: str
    iiif_url: str
    file_size: int | None = None
    collection_context: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class PipelineReport:
    """Run accounting; processed + skipped_existing + failed = rows consumed."""

    processed: int = 0
    skipped_existing: int = 0
    failed: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)  # (iiif_url, error class)

    @property
    def consumed(self) -> int:
        return self.processed + self.skipped_existing + self.failed

    def as_dict(self) -> dict:
        return {
            "processed": self.processed,
            "skipped_existing": self.skipped_existing,
            "failed": self.failed,
            "failures": [list(f) for f in self.failures],
        }


def read_catalog(
    path: str | Path, on_bad_row: BadRowFn | None = None
) -> Iterator[CatalogRow]:
    """Yield catalog rows lazily, in file order.

    The header must name a resource-URL column and an IIIF-URL column
    (canonically ``resource_url`` and ``iiif_url``). Rows with an empty or
    unparseable IIIF URL are reported through ``on_bad_row`` and skipped;
    they never abort the stream.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"catalog not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [name.strip().lower() for name in (reader.fieldnames or [])]
        resource_col = next((c for c in _RESOURCE_COLUMNS if c in header), None)
        iiif_col = next((c for c in _IIIF_COLUMNS if c in header), None)
        if resource_col is None or iiif_col is None:
            raise CatalogSchemaError(
                f"{path}: header must include a resource-URL column "
                f"(one of {_RESOURCE_COLUMNS}) and an IIIF-URL column "
                f"(one of {_IIIF_COLUMNS}); got {reader.fieldnames}"
            )
        known = {resource_col, iiif_col, "file_size", "collection_context"}
        for line_no, raw in enumerate(reader, start=2):
            row = {(key or "").strip().lower(): (value or "").strip()
                   for key, value in raw.items()}
            iiif_url = row.get(iiif_col, "")
            parsed = urlparse(iiif_url)
            if not iiif_url or not parsed.scheme:
                if on_bad_row is not None:
                    on_bad_row(line_no, "missing or unparseable IIIF URL", row)
                continue
            file_size: int | None = None
            if row.get("file_size"):
                try:
                    file_size = int(row["file_size"])
                except ValueError:
                    file_size = None
            yield CatalogRow(
                resource_url=row.get(resource_col, ""),
                iiif_url=iiif_url,
                file_size=file_size,
                collection_context=row.get("collection_context", ""),
                extra={k: v for k, v in row.items() if k not in known},
            )


def convert_catalog(
    source: str | Path,
    destination: str | Path,
    resource_column: str,
    iiif_column: str,
    file_size_column: str | None = None,
    context_column: str | None = None,
) -> int:
    """Rewrite an arbitrary catalog export into the canonical header.

    Column names in upstream data dumps vary; this maps the caller's names
    onto ``resource_url``/``iiif_url`` (plus optional ``file_size`` and
    ``collection_context``) and passes every other column through untouched.
    Returns the number of rows written.
    """
    source, destination = Path(source), Path(destination)
    rename = {resource_column: "resource_url", iiif_column: "iiif_url"}
    if file_size_column:
        rename[file_size_column] = "file_size"
    if context_column:
        rename[context_column] = "collection_context"
    rows_written = 0
    with open(source, newline="", encoding="utf-8") as src:
        reader = csv.DictReader(src)
        if reader.fieldnames is None:
            raise CatalogSchemaError(f"{source}: no header row")
        missing = [c for c in (resource_column, iiif_column)
                   if c not in reader.fieldnames]
        if missing:
            raise CatalogSchemaError(f"{source}: missing columns {missing}")
        out_fields = [rename.get(name, name) for name in reader.fieldnames]
        with open(destination, "w", newline="", encoding="utf-8") as dst:
            writer = csv.DictWriter(dst, fieldnames=out_fields)
            writer.writeheader()
            for row in reader:
                writer.writerow({rename.get(k, k): v for k, v in row.items()})
                rows_written += 1
    return rows_written


def derive_resource_id(iiif_id: str) -> str:
    """Strip the trailing segment suffix from an IIIF ID, if one is present.

    Segment suffixes are short: one or two letters followed by digits
    (e.g. ``cs000150``); longer alphabetic prefixes (``gct00608``) are part
    of the resource ID itself. IDs already at resource granularity pass
    through unchanged, so the operation is idempotent.
    """
    parts = iiif_id.split(".")
    if len(parts) >= 2 and _SEGMENT_SUFFIX.fullmatch(parts[-1]):
        return ".".join(parts[:-1])
    return iiif_id


def iiif_identifier(iiif_url: str) -> str:
    """The identifier component of an IIIF URL.

    For a full Image API request the identifier is everything before
    ``/full/``; otherwise the last path segment.
    """
    path = urlparse(iiif_url).path
    if "/full/" in path:
        path = path.split("/full/", 1)[0]
    segments = [s for s in path.split("/") if s]
    return segments[-1] if segments else ""


def resource_url_for(iiif_url: str) -> str:
    """Best-effort loc.gov resource page for an image URL.

    Derivation only runs IIIF ID -> resource ID; the reverse is not
    possible, which is why records key on the IIIF URL.
    """
    identifier = iiif_identifier(iiif_url)
    if not identifier:
        return ""
    resource_id = derive_resource_id(identifier.split(":")[-1])
    return f"https://www.loc.gov/resource/{resource_id}/"


def sanitize_iiif_id(iiif_url: str) -> str:
    """Filesystem-safe name for a record file, derived from the IIIF URL.

    Anything outside [A-Za-z0-9._-] becomes ``_``. The original URL is kept
    inside the record, so the mapping does not need to be reversible.
    """
    stripped = re.sub(r"^[a-z][a-z0-9+.-]*://", "", iiif_url, flags=re.IGNORECASE)
    return _FILENAME_SAFE.sub("_", stripped)


def record_filename(iiif_url: str) -> str:
    return sanitize_iiif_id(iiif_url) + ".json"


def iiif_image_url(iiif_url: str, width_px: int) -> str:
    """Build the width-constrained IIIF Image API request for an identifier.

    URLs that already carry a size path (``/full/...``) or point straight at
    a raster file are used verbatim.
    """
    if "/full/" in iiif_url or iiif_url.lower().endswith(
        (".jpg", ".jpeg", ".png", ".gif", ".tif", ".tiff")
    ):
        return iiif_url
    return f"{iiif_url.rstrip('/')}/full/{width_px},/0/default.jpg"


class RateLimiter:
    """Thread-safe per-host rate limit (requests per second)."""

    def __init__(self, per_host_rps: float):
        self._interval = 1.0 / per_host_rps
        self._next_slot: dict[str, float] = defaultdict(float)
        self._lock = threading.Lock()

    def wait(self, host: str) -> None:
        with self._lock:
            now = time.monotonic()
            slot = max(self._next_slot[host], now)
            self._next_slot[host] = slot + self._interval
        delay = slot - time.monotonic()
        if delay > 0:
            time.sleep(delay)


def fetch_image(
    iiif_url: str,
    width_px: int,
    retries: int = 3,
    backoff: float = 0.25,
    timeout: float = 30.0,
    rate_limiter: RateLimiter | None = None,
    session: requests.Session | None = None,
) -> bytes:
    """Fetch raster bytes for an IIIF URL scaled to the requested width.

    Transient failures (timeouts, connection errors, 5xx, 429) are retried
    with exponential backoff; anything else 4xx fails immediately. file://
    URLs are read locally, which is how fixture catalogs avoid a server.
    """
    url = iiif_image_url(iiif_url, width_px)
    parsed = urlparse(url)
    if parsed.scheme == "file":
        try:
            return Path(url2pathname(parsed.path)).read_bytes()
        except OSError as exc:
            raise FetchFailedError(f"{url}: {exc}") from exc

    if rate_limiter is not None:
        rate_limiter.wait(parsed.netloc)
    get = (session or requests).get
    last_error: Exception | None = None
    timed_out = False
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            response = get(url, timeout=timeout)
        except requests.Timeout as exc:
            last_error, timed_out = exc, True
            continue
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code == 200:
            return response.content
        last_error = FetchFailedError(f"{url}: HTTP {response.status_code}")
        if response.status_code < 500 and response.status_code != 429:
            break  # permanent
    if timed_out:
        raise FetchTimeoutError(f"{url}: timed out after {retries + 1} attempts")
    raise FetchFailedError(
        f"{url}: failed after {retries + 1} attempts: {last_error}"
    ) from last_error


def _write_record(path: Path, record: dict) -> None:
    # Temp-then-rename keeps concurrent or interrupted runs from ever
    # leaving a torn .json behind.
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}-{threading.get_ident()}")
    tmp.write_text(json.dumps(record), encoding="utf-8")
    os.replace(tmp, path)


def run_pipeline(
    catalog: str | Path,
    out_dir: str | Path,
    workers: int = 8,
    variant: str = "stripped",
    embedder: EmbedderConfig | None = None,
    rate_limit_rps: float | None = 10.0,
    retries: int = 3,
    backoff: float = 0.25,
    timeout: float = 30.0,
    fetcher: FetcherFn | None = None,
) -> PipelineReport:
    """Embed every catalog row into a record file under ``out_dir``.

    Rows whose record file already exists are skipped, so an interrupted run
    can simply be re-run. Per-row failures are recorded and never fatal.
    The set of files produced is independent of ``workers``.
    """
    if variant not in ("full", "stripped"):
        raise PipelineConfigError(f"variant must be 'full' or 'stripped', got {variant!r}")
    if workers < 1:
        raise PipelineConfigError(f"workers must be >= 1, got {workers}")
    embedder = embedder or EmbedderConfig()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / f".write-probe-{os.getpid()}"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise PipelineConfigError(f"output directory not writable: {out_dir}: {exc}") from exc

    limiter = RateLimiter(rate_limit_rps) if rate_limit_rps else None
    session = requests.Session()
    if fetcher is None:
        def fetcher(url: str, width: int) -> bytes:
            return fetch_image(
                url, width, retries=retries, backoff=backoff,
                timeout=timeout, rate_limiter=limiter, session=session,
            )

    report = PipelineReport()
    lock = threading.Lock()

    def process(row: CatalogRow) -> None:
        path = out_dir / record_filename(row.iiif_url)
        if path.exists():
            with lock:
                report.skipped_existing += 1
            return
        try:
            data = fetcher(row.iiif_url, embedder.image_width_px)
            vector = encode_image(data, embedder)
            record = {
                "iiif_url": row.iiif_url,
                "embedding": [float(x) for x in vector],
            }
            if variant == "full":
                metadata = {"resource_url": row.resource_url}
                if row.file_size is not None:
                    metadata["file_size"] = row.file_size
                if row.collection_context:
                    metadata["collection_context"] = row.collection_context
                metadata.update(row.extra)
                record["metadata"] = metadata
            _write_record(path, record)
        except Exception as exc:  # per-row isolation: record and move on
            with lock:
                report.failed += 1
                report.failures.append((row.iiif_url, type(exc).__name__))
            return
        with lock:
            report.processed += 1

    def on_bad_row(line_no: int, reason: str, row: dict) -> None:
        with lock:
            report.failed += 1
            report.failures.append((row.get("iiif_url", "") or f"row:{line_no}", "BadCatalogRow"))

    rows = read_catalog(catalog, on_bad_row=on_bad_row)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = set()
        for row in rows:
            pending.add(pool.submit(process, row))
            if len(pending) >= workers * 4:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
        wait(pending)
    session.close()
    return report
