"""Small fixture search service for the console's end-to-end tests.

Builds a six-image index with the deterministic embedding backend and
serves the regular /v1 API, plus GET /fixture/image so tests have probe
bytes whose embedding matches one of the index columns.
"""

import io
import json
import sys
import tempfile
from pathlib import Path

import uvicorn
from PIL import Image

from mapsearch.embedder import EmbedderConfig, encode_image
from mapsearch.ingest import record_filename
from mapsearch.service import ServiceConfig, create_app
from mapsearch.store import build_beto


def solid_png(color):
    buf = io.BytesIO()
    Image.new("RGB", (8, 8), color).save(buf, format="PNG")
    return buf.getvalue()


def main(port: int) -> None:
    cfg = EmbedderConfig(dim=16, seed=7, image_width_px=32)
    records = Path(tempfile.mkdtemp(prefix="console-e2e-"))
    images = []
    for i in range(6):
        data = solid_png(((i * 40) % 256, 80, 160))
        images.append(data)
        vector = encode_image(data, cfg)
        record = {
            "iiif_url": f"https://example.org/iiif/e2e{i}",
            "embedding": [float(x) for x in vector],
        }
        path = records / record_filename(record["iiif_url"])
        path.write_text(json.dumps(record), encoding="utf-8")

    index = build_beto(records)
    app = create_app(ServiceConfig(embedder=cfg), index=index)
    probe = images[2]

    @app.get("/fixture/image")
    def fixture_image():
        from fastapi.responses import Response

        return Response(content=probe, media_type="image/png")

    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main(int(sys.argv[1]))
