"""HTTP API conformance: status codes, error bodies, mode equivalences."""

import base64
import concurrent.futures

import pytest
from fastapi.testclient import TestClient

from mapsearch.embedder import EmbedderConfig, encode_image
from mapsearch.service import ServiceConfig, create_app
from mapsearch.store import build_beto

from conftest import solid_png, write_record


COLORS = [(200, 30, 30), (30, 200, 30), (30, 30, 200), (120, 120, 0),
          (0, 120, 120), (120, 0, 120), (90, 90, 90), (250, 250, 250)]


@pytest.fixture(scope="module")
def fixture_setup(tmp_path_factory):
    cfg = EmbedderConfig(dim=16, seed=7, image_width_px=32)
    directory = tmp_path_factory.mktemp("service-records")
    images = [solid_png(color) for color in COLORS]
    for i, data in enumerate(images):
        write_record(directory, f"https://example.org/iiif/svc{i}",
                     encode_image(data, cfg))
    index = build_beto(directory)
    return index, cfg, images


@pytest.fixture(scope="module")
def client(fixture_setup):
    index, cfg, _ = fixture_setup
    app = create_app(ServiceConfig(embedder=cfg, max_k=100), index=index)
    with TestClient(app) as client:
        yield client


@pytest.fixture(scope="module")
def images(fixture_setup):
    return fixture_setup[2]


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


class TestTextSearch:
    def test_basic_query(self, client):
        response = client.post("/v1/search/text",
                               json={"query": "tattered and worn map", "k": 6})
        assert response.status_code == 200
        body = response.json()
        assert body["count"] == 6
        assert len(body["results"]) == 6
        ranks = [r["rank"] for r in body["results"]]
        assert ranks == list(range(1, 7))
        raw = [r["raw_score"] for r in body["results"]]
        assert raw == sorted(raw, reverse=True)

    def test_empty_query_422(self, client):
        response = client.post("/v1/search/text", json={"query": "  ", "k": 5})
        assert response.status_code == 422
        body = response.json()
        assert body["code"] == "invalid-query"
        assert "message" in body

    def test_k_clamped_with_warning(self, client):
        response = client.post("/v1/search/text", json={"query": "map", "k": 50})
        assert response.status_code == 200
        body = response.json()
        assert body["count"] == 8  # index only has 8 columns
        assert any("clamped" in w for w in body["warnings"])

    def test_k_above_max_k_rejected(self, client):
        response = client.post("/v1/search/text", json={"query": "map", "k": 101})
        assert response.status_code == 400
        assert response.json()["code"] == "invalid-body"

    def test_malformed_body_400(self, client):
        response = client.post("/v1/search/text", json={"k": 5})
        assert response.status_code == 400
        assert response.json()["code"] == "invalid-body"

    def test_scores_field_selects_presentation(self, client):
        raw_only = client.post(
            "/v1/search/text", json={"query": "map", "k": 3, "scores": "raw"}
        ).json()
        assert "raw_score" in raw_only["results"][0]
        assert "softmax_score" not in raw_only["results"][0]
        soft_only = client.post(
            "/v1/search/text", json={"query": "map", "k": 3, "scores": "softmax"}
        ).json()
        assert "softmax_score" in soft_only["results"][0]
        assert "raw_score" not in soft_only["results"][0]

    def test_softmax_scores_sum_to_one(self, client):
        body = client.post("/v1/search/text",
                           json={"query": "celestial map", "k": 5}).json()
        total = sum(r["softmax_score"] for r in body["results"])
        assert total == pytest.approx(1.0, abs=1e-6)


class TestImageSearch:
    def test_self_retrieval_by_b64(self, client, images):
        response = client.post("/v1/search/image",
                               json={"image_b64": b64(images[2]), "k": 3})
        assert response.status_code == 200
        top = response.json()["results"][0]
        assert top["iiif_url"] == "https://example.org/iiif/svc2"
        assert top["raw_score"] == pytest.approx(1.0, abs=1e-4)

    def test_both_image_fields_rejected(self, client, images):
        response = client.post("/v1/search/image",
                               json={"url": "http://x/y", "image_b64": b64(images[0])})
        assert response.status_code == 400

    def test_neither_image_field_rejected(self, client):
        response = client.post("/v1/search/image", json={"k": 3})
        assert response.status_code == 400

    def test_unreachable_url_502(self, client):
        response = client.post("/v1/search/image",
                               json={"url": "http://127.0.0.1:1/nope", "k": 3})
        assert response.status_code == 502
        body = response.json()
        assert body["code"] in ("fetch-failed", "fetch-timeout")
        assert "message" in body

    def test_undecodable_image_415(self, client):
        response = client.post("/v1/search/image",
                               json={"image_b64": b64(b"not an image"), "k": 3})
        assert response.status_code == 415
        assert response.json()["code"] == "image-decode"

    def test_invalid_base64_415(self, client):
        response = client.post("/v1/search/image",
                               json={"image_b64": "!!!not-base64!!!", "k": 3})
        assert response.status_code == 415

    def test_oversize_upload_413(self, fixture_setup):
        index, cfg, images = fixture_setup
        app = create_app(
            ServiceConfig(embedder=cfg, max_upload_bytes=16), index=index
        )
        with TestClient(app) as small_client:
            response = small_client.post(
                "/v1/search/image", json={"image_b64": b64(images[0]), "k": 1}
            )
        assert response.status_code == 413

    def test_concurrent_identical_requests_agree(self, client, images):
        payload = {"image_b64": b64(images[1]), "k": 5}

        def call():
            return client.post("/v1/search/image", json=payload).content

        with concurrent.futures.ThreadPoolExecutor(max_workers=10) as pool:
            bodies = list(pool.map(lambda _: call(), range(10)))
        assert len(set(bodies)) == 1


class TestMultimodalSearch:
    def test_alpha_one_equals_text_search(self, client, images):
        text = client.post("/v1/search/text",
                           json={"query": "grayscale chart", "k": 5})
        multi = client.post("/v1/search/multimodal",
                            json={"text": "grayscale chart",
                                  "image_b64": b64(images[0]),
                                  "alpha": 1.0, "k": 5})
        assert multi.status_code == 200
        assert multi.content == text.content

    def test_alpha_minus_one_equals_image_search(self, client, images):
        image = client.post("/v1/search/image",
                            json={"image_b64": b64(images[3]), "k": 5})
        multi = client.post("/v1/search/multimodal",
                            json={"text": "anything at all",
                                  "image_b64": b64(images[3]),
                                  "alpha": -1.0, "k": 5})
        assert multi.content == image.content

    def test_alpha_sweep_is_deterministic(self, client, images):
        seen = set()
        for alpha in (-0.5, 0.0, 0.3):
            payload = {"text": "more grayscale", "image_b64": b64(images[4]),
                       "alpha": alpha, "k": 8}
            first = client.post("/v1/search/multimodal", json=payload).content
            second = client.post("/v1/search/multimodal", json=payload).content
            assert first == second
            seen.add(first)
        assert len(seen) == 3

    def test_alpha_out_of_range_400(self, client, images):
        response = client.post("/v1/search/multimodal",
                               json={"text": "x", "image_b64": b64(images[0]),
                                     "alpha": 1.5, "k": 3})
        assert response.status_code == 400
        assert response.json()["code"] == "alpha-range"

    def test_missing_text_400(self, client, images):
        response = client.post("/v1/search/multimodal",
                               json={"image_b64": b64(images[0]), "k": 3})
        assert response.status_code == 400


class TestStatsAndHealth:
    def test_stats(self, client):
        response = client.get("/v1/index/stats")
        assert response.status_code == 200
        body = response.json()
        assert body["n"] == 8
        assert body["m"] == 16

    def test_health_ok(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_503_before_index_load(self):
        app = create_app(ServiceConfig(), index=None)
        with TestClient(app) as client:
            assert client.get("/v1/health").status_code == 503
            assert client.get("/v1/index/stats").status_code == 503
            response = client.post("/v1/search/text", json={"query": "x", "k": 1})
            assert response.status_code == 503
            assert response.json()["code"] == "index-not-loaded"

    def test_index_loaded_from_path_at_startup(self, tmp_path, fixture_setup):
        from mapsearch.store import save_index

        index, cfg, _ = fixture_setup
        path = tmp_path / "svc.beto"
        save_index(index, path)
        app = create_app(ServiceConfig(index_path=path, embedder=cfg))
        with TestClient(app) as client:
            assert client.get("/v1/health").status_code == 200
            assert client.get("/v1/index/stats").json()["n"] == 8


class TestConsoleBundle:
    def test_static_console_served_from_root(self, tmp_path, fixture_setup):
        index, cfg, _ = fixture_setup
        bundle = tmp_path / "console"
        bundle.mkdir()
        (bundle / "index.html").write_text("<!doctype html><title>console</title>")
        (bundle / "app.js").write_text("export {};")
        app = create_app(
            ServiceConfig(embedder=cfg, console_dir=bundle), index=index
        )
        with TestClient(app) as client:
            page = client.get("/")
            assert page.status_code == 200
            assert "console" in page.text
            assert client.get("/app.js").status_code == 200
            # API routes still win over the static mount
            assert client.get("/v1/health").status_code == 200
