"""Command-line entry point: ingestion, index build, search, datasets, bench.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage
error. Every subcommand takes --output json; the machine output carries
exactly the values shown in the human tables.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import bench as benchlib
from . import captions as captionlib
from .embedder import EmbedderConfig
from .search import SearchQuery, SearchResult, search as run_search
from .errors import MapSearchError
from .ingest import run_pipeline
from .store import build_beto, load_index, save_index, stats, synthetic_index


def _runtime_errors(fn):
    """Map domain and IO failures to exit code 1 with a clean message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (MapSearchError, OSError) as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def _emit(data: dict, human: str, output: str) -> None:
    if output == "json":
        click.echo(json.dumps(data, indent=2))
    else:
        click.echo(human)


output_option = click.option(
    "--output", type=click.Choice(["human", "json"]), default="human",
    help="Output format.",
)


def _embedder_options(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True,
                      help="Seed for the deterministic embedding backend.")(fn)
    fn = click.option("--width", type=int, default=2000, show_default=True,
                      help="Canonical image width in pixels.")(fn)
    return fn


@click.group()
@click.version_option(package_name="mapsearch")
def main() -> None:
    """Search large map collections with text, image, and blended queries."""


@main.command()
@click.option("--catalog", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--workers", type=int, default=8, show_default=True)
@click.option("--variant", type=click.Choice(["full", "stripped"]), default="stripped",
              show_default=True)
@click.option("--rate-limit", type=float, default=10.0, show_default=True,
              help="Per-host requests/second; 0 disables limiting.")
@click.option("--retries", type=int, default=3, show_default=True)
@click.option("--backoff", type=float, default=0.25, show_default=True,
              help="Base retry backoff in seconds.")
@click.option("--report", "report_path", type=click.Path(path_type=Path),
              help="Machine-readable report path [default: <out>.report.json].")
@_embedder_options
@output_option
@_runtime_errors
def embed(catalog, out_dir, workers, variant, rate_limit, retries, backoff,
          report_path, seed, width, output) -> None:
    """Embed every catalog row into per-image record files."""
    cfg = EmbedderConfig(seed=seed, image_width_px=width)
    report = run_pipeline(
        catalog, out_dir, workers=workers, variant=variant, embedder=cfg,
        rate_limit_rps=rate_limit or None, retries=retries, backoff=backoff,
    )
    # Sibling of the records directory: the directory itself holds records only.
    report_path = report_path or out_dir.with_name(out_dir.name + ".report.json")
    report_path.write_text(json.dumps(report.as_dict(), indent=2), encoding="utf-8")
    human = (
        f"processed={report.processed} skipped_existing={report.skipped_existing} "
        f"failed={report.failed}\nreport written to {report_path}"
    )
    _emit(report.as_dict(), human, output)
    if report.consumed > 0 and report.processed + report.skipped_existing == 0:
        sys.exit(1)


@main.command("build-index")
@click.option("--records", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@output_option
@_runtime_errors
def build_index(records, out_path, output) -> None:
    """Build a BETO index file from a directory of record files."""
    index = build_beto(records)
    written = save_index(index, out_path)
    info = stats(index).as_dict() | {"path": str(out_path), "bytes_written": written}
    human = (
        f"built index: n={info['n']} m={info['m']} "
        f"({written} bytes -> {out_path})"
    )
    _emit(info, human, output)


def _load_for_search(index_path: Path, seed: int, width: int):
    index = load_index(index_path)
    cfg = EmbedderConfig(dim=index.dim, seed=seed, image_width_px=width)
    return index, cfg


def _result_table(results: list[SearchResult]) -> str:
    lines = [f"{'rank':>4}  {'raw':>9}  {'softmax':>9}  iiif_url"]
    for r in results:
        lines.append(
            f"{r.rank:>4}  {r.raw_score:>9.4f}  {r.softmax_score:>9.4f}  {r.iiif_url}"
        )
    return "\n".join(lines)


def _emit_results(results: list[SearchResult], output: str) -> None:
    data = {"results": [r.as_dict() for r in results], "count": len(results)}
    _emit(data, _result_table(results), output)


def _image_input(image: str) -> bytes | str:
    path = Path(image)
    if path.exists():
        return path.read_bytes()
    return image  # treated as a URL and fetched through the ingest path


@main.group()
def search() -> None:
    """Search a built index."""


@search.command("text")
@click.argument("query")
@click.option("--index", "index_path", required=True, type=click.Path(path_type=Path))
@click.option("--k", type=int, default=10, show_default=True)
@_embedder_options
@output_option
@_runtime_errors
def search_text(query, index_path, k, seed, width, output) -> None:
    """Natural-language search."""
    index, cfg = _load_for_search(index_path, seed, width)
    results = run_search(
        index, SearchQuery(mode="text", text=query, k=k), cfg
    )
    _emit_results(results, output)


@search.command("image")
@click.argument("image")
@click.option("--index", "index_path", required=True, type=click.Path(path_type=Path))
@click.option("--k", type=int, default=10, show_default=True)
@_embedder_options
@output_option
@_runtime_errors
def search_image(image, index_path, k, seed, width, output) -> None:
    """Reverse image search; IMAGE is a local file or a URL."""
    index, cfg = _load_for_search(index_path, seed, width)
    results = run_search(
        index,
        SearchQuery(mode="image", image=_image_input(image), k=k),
        cfg,
    )
    _emit_results(results, output)


@search.command("multi")
@click.option("--text", required=True)
@click.option("--image", required=True, help="Local file or URL.")
@click.option("--alpha", type=float, default=0.0, show_default=True,
              help="-1 = image only ... +1 = text only.")
@click.option("--index", "index_path", required=True, type=click.Path(path_type=Path))
@click.option("--k", type=int, default=10, show_default=True)
@_embedder_options
@output_option
@_runtime_errors
def search_multi(text, image, alpha, index_path, k, seed, width, output) -> None:
    """Blended text+image search with a weighting factor."""
    index, cfg = _load_for_search(index_path, seed, width)
    results = run_search(
        index,
        SearchQuery(
            mode="multimodal", text=text, image=_image_input(image), alpha=alpha, k=k
        ),
        cfg,
    )
    _emit_results(results, output)


@main.command()
@click.option("--record", "record_path", type=click.Path(path_type=Path),
              help="Full-variant record file to caption.")
@click.option("--title", default="")
@click.option("--locations", default="", help="Pipe-separated location terms.")
@click.option("--notes", default="", help="Pipe-separated notes.")
@output_option
@_runtime_errors
def caption(record_path, title, locations, notes, output) -> None:
    """Generate a caption from metadata (a record file or inline fields)."""
    if record_path is not None:
        record = json.loads(record_path.read_text(encoding="utf-8"))
        source = captionlib.caption_source_from_metadata(
            record.get("iiif_url", ""), record.get("metadata", {})
        )
    elif title:
        source = captionlib.CaptionSource(
            resource_id="",
            title=title,
            locations=[part for part in locations.split("|") if part],
            notes=[part for part in notes.split("|") if part],
        )
    else:
        raise click.UsageError("provide --record or --title")
    text = captionlib.build_caption(source)
    _emit({"caption": text}, text, output)


@main.command()
@click.option("--catalog", required=True, type=click.Path(path_type=Path))
@click.option("--records", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(path_type=Path), help="Output manifest (JSONL).")
@click.option("--report", "report_path", type=click.Path(path_type=Path),
              help="Output report path [default: manifest + .report.json].")
@click.option("--n-single", type=int, default=0, show_default=True)
@click.option("--n-sanborn", type=int, default=0, show_default=True)
@click.option("--n-coverage", type=int, default=0, show_default=True)
@click.option("--regions", "regions_path", type=click.Path(path_type=Path),
              help="File with one region tag per line.")
@click.option("--max-segments", type=int, default=0, show_default=True,
              help="Drop items with more segments than this (0 = no cap).")
@click.option("--seed", type=int, default=0, show_default=True)
@output_option
@_runtime_errors
def dataset(catalog, records, manifest_path, report_path, n_single, n_sanborn,
            n_coverage, regions_path, max_segments, seed, output) -> None:
    """Assemble a map-caption fine-tuning dataset."""
    tags: list[str] = []
    if regions_path is not None:
        tags = [
            line.strip()
            for line in regions_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    cfg = captionlib.DatasetConfig(
        n_single_image=n_single, n_sanborn=n_sanborn, n_coverage=n_coverage,
        seed=seed, max_segments_per_item=max_segments, region_tags=tags,
    )
    pairs, report = captionlib.build_dataset(catalog, records, cfg)
    captionlib.write_manifest(pairs, manifest_path)
    report_path = report_path or manifest_path.with_suffix(".report.json")
    report_path.write_text(json.dumps(report.as_dict(), indent=2), encoding="utf-8")
    human = (
        f"sampled={report.sampled} discarded={report.discarded} "
        f"final={report.final}\n"
        f"by reason: {report.by_reason}\n"
        f"manifest -> {manifest_path}\nreport -> {report_path}"
    )
    _emit(report.as_dict() | {"manifest": str(manifest_path)}, human, output)


@main.command()
@click.option("--index", "index_path", type=click.Path(path_type=Path),
              help="Benchmark an index file.")
@click.option("--synthetic", "synthetic_n", type=int,
              help="Benchmark a generated index with this many columns.")
@click.option("--dim", type=int, default=512, show_default=True,
              help="Dimension for --synthetic.")
@click.option("--queries", type=int, default=20, show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@output_option
@_runtime_errors
def bench(index_path, synthetic_n, dim, queries, k, seed, output) -> None:
    """Measure single-query latency (p50/p95) over an index."""
    if (index_path is None) == (synthetic_n is None):
        raise click.UsageError("provide exactly one of --index / --synthetic")
    if index_path is not None:
        index = load_index(index_path)
    else:
        index = synthetic_index(synthetic_n, m=dim, seed=seed)
    result = benchlib.run_bench(index, queries=queries, k=k, seed=seed)
    human = (
        f"n={result.n} m={result.m} queries={result.queries} k={result.k}\n"
        f"p50={result.p50_ms:.1f} ms  p95={result.p95_ms:.1f} ms  "
        f"mean={result.mean_ms:.1f} ms  max={result.max_ms:.1f} ms"
    )
    _emit(result.as_dict(), human, output)


@main.command()
@click.option("--index", "index_path", required=True, type=click.Path(path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--max-k", type=int, default=100, show_default=True)
@click.option("--console", "console_dir", type=click.Path(path_type=Path),
              help="Static web-console bundle to serve at /.")
@_embedder_options
@output_option
@_runtime_errors
def serve(index_path, host, port, max_k, console_dir, seed, width, output) -> None:
    """Serve the HTTP search API (and optionally the web console)."""
    from .service import ServiceConfig, serve as run_service

    index = load_index(index_path)
    cfg = ServiceConfig(
        host=host, port=port, index_path=index_path, max_k=max_k,
        console_dir=console_dir,
        embedder=EmbedderConfig(dim=index.dim, seed=seed, image_width_px=width),
    )
    startup = {
        "listening": f"http://{host}:{port}", "index": str(index_path),
        "n": index.count, "m": index.dim, "max_k": max_k,
        "console": str(console_dir) if console_dir else None,
    }
    human = f"serving {startup['listening']}  index n={index.count} m={index.dim}"
    _emit(startup, human, output)
    run_service(cfg, index=index)


def cli_main() -> None:  # console-script shim keeping env-var overrides on
    main(auto_envvar_prefix="MAPSEARCH")


if __name__ == "__main__":
    cli_main()
