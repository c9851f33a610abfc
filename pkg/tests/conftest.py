"""Shared fixtures: solid-color images, a local image server, record writers."""

from __future__ import annotations

import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

from mapsearch.embedder import EmbedderConfig, encode_image
from mapsearch.ingest import record_filename


def solid_png(color: tuple[int, int, int], size: tuple[int, int] = (8, 8)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture(scope="session")
def small_cfg() -> EmbedderConfig:
    # Small dim and canonical width keep the suite fast; the contracts under
    # test are size-independent.
    return EmbedderConfig(dim=16, seed=7, image_width_px=32)


class _FixtureHandler(BaseHTTPRequestHandler):
    """Serves generated PNGs; /missing/* 404s; /flaky/* fails then recovers."""

    server_version = "fixture/1"

    def do_GET(self):  # noqa: N802 (http.server API)
        state = self.server.state
        path = self.path
        if path.startswith("/missing/"):
            self.send_error(404)
            return
        if path.startswith("/flaky/"):
            remaining = state["flaky"].get(path, state["flaky_failures"])
            if remaining > 0:
                state["flaky"][path] = remaining - 1
                self.send_error(500)
                return
        state["hits"].append(path)
        # Color derived from the path so distinct IDs get distinct pixels.
        color = (hash(path.split("/full/")[0]) & 0xFF, 128, 64)
        body = solid_png(color)
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):  # keep pytest output clean
        pass


class FixtureServer:
    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _FixtureHandler)
        self.httpd.state = {"hits": [], "flaky": {}, "flaky_failures": 2}
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def url(self, identifier: str) -> str:
        return f"{self.base}/img/{identifier}"

    def reset(self, flaky_failures: int = 2) -> None:
        self.httpd.state["hits"].clear()
        self.httpd.state["flaky"].clear()
        self.httpd.state["flaky_failures"] = flaky_failures

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture(scope="session")
def image_server():
    server = FixtureServer()
    yield server
    server.close()


def write_record(
    directory, iiif_url: str, embedding: np.ndarray, metadata: dict | None = None
) -> None:
    record = {"iiif_url": iiif_url, "embedding": [float(x) for x in embedding]}
    if metadata is not None:
        record["metadata"] = metadata
    path = directory / record_filename(iiif_url)
    path.write_text(json.dumps(record), encoding="utf-8")


@pytest.fixture
def records_dir(tmp_path, small_cfg):
    """Directory with three image-derived records of dimension 16."""
    directory = tmp_path / "records"
    directory.mkdir()
    for i, color in enumerate([(255, 0, 0), (0, 255, 0), (0, 0, 255)]):
        vector = encode_image(solid_png(color), small_cfg)
        write_record(directory, f"https://example.org/iiif/item{i}", vector)
    return directory


def write_catalog(path, rows: list[dict]) -> None:
    import csv

    fieldnames: list[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
