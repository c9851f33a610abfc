"""Metadata-to-caption generation and fine-tuning dataset assembly.

Captions are built from catalog metadata with plain string rules (no
language model): the smoothed title, then location terms the title did not
already mention, then the leading descriptive notes. Trailing notes carry
catalogue/availability boilerplate and are excluded.

The dataset builder samples three pools (single-image items, the Sanborn
collection, and a region-coverage set), generates captions, and applies
quality filters, reporting exactly where every discarded sample went.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .errors import MissingTitleError
from .ingest import (
    CatalogRow,
    derive_resource_id,
    iiif_identifier,
    read_catalog,
    record_filename,
)

_ACRONYM = re.compile(r"(?:[A-Z]\.)+")
_TRAILING_FIELD_PUNCT = " \t:;,/"
_CONTROL = re.compile(r"[\x00-\x1f\x7f]")
_WORD = re.compile(r"[^\W\d_]+", re.UNICODE)

# Function words that never count as feature descriptors.
_STOPWORDS = frozenset(
    "a an the of in on at by for to and or with from als der die das le la "
    "les el los de del und et".split()
)

# Latin letters: ASCII, Latin-1 supplement, Latin Extended-A/B.
_LATIN_RANGES = ((0x41, 0x5A), (0x61, 0x7A), (0xC0, 0x24F))

# Characters tolerated by the nonsensical-text check beyond printable
# Latin-1: typographic punctuation and symbols common in map catalogues.
_EXTRA_ALLOWED = set("‐‑‒–—‘’“”…′″°½¼¾×")


@dataclass
class CaptionSource:
    """Metadata fields a caption is generated from."""

    resource_id: str
    title: str
    locations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    date: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class MapCaptionPair:
    """An image reference and its generated natural-language caption."""

    image_ref: str
    caption: str

    def as_dict(self) -> dict:
        return {"image_ref": self.image_ref, "caption": self.caption}


@dataclass
class QualityRules:
    """Thresholds for the caption quality filter (all repo-defined)."""

    max_foreign_char_fraction: float = 0.10
    script_run_length: int = 5
    min_content_words: int = 4


@dataclass
class DatasetConfig:
    n_single_image: int = 0
    n_sanborn: int = 0
    n_coverage: int = 0
    seed: int = 0
    quality_rules: QualityRules = field(default_factory=QualityRules)
    max_segments_per_item: int = 0  # 0 = no cap; >0 drops larger items from all pools
    region_tags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in ("n_single_image", "n_sanborn", "n_coverage"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


DISCARD_REASONS = ("unresponsive", "nonsensical", "language_change", "no_features")


@dataclass
class DatasetReport:
    sampled: int = 0
    discarded: int = 0
    by_reason: dict[str, int] = field(
        default_factory=lambda: {reason: 0 for reason in DISCARD_REASONS}
    )
    final: int = 0
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "sampled": self.sampled,
            "discarded": self.discarded,
            "by_reason": dict(self.by_reason),
            "final": self.final,
            "warnings": list(self.warnings),
        }


def _fix_token(token: str) -> str:
    alpha = [c for c in token if c.isalpha()]
    if len(alpha) < 2 or not all(c.isupper() for c in alpha):
        return token
    if _ACRONYM.fullmatch(token.rstrip(",;")):
        return token  # U.S., U.S.A. and friends stay as written
    lowered = token.lower()
    for i, c in enumerate(lowered):
        if c.isalpha():
            return lowered[:i] + c.upper() + lowered[i + 1 :]
    return lowered


def smooth_text(raw: str) -> str:
    """Smooth capitalization and punctuation of one metadata fragment.

    Collapses whitespace, strips trailing field punctuation (":;,/"),
    converts SHOUTING tokens to capitalized form, and uppercases the first
    letter. Mixed-case words and dotted acronyms are left alone. Idempotent.
    """
    text = _CONTROL.sub(" ", raw)
    text = " ".join(text.split())
    while text and text[-1] in _TRAILING_FIELD_PUNCT:
        text = text[:-1]
    if not text:
        return ""
    # Uppercase the leading letter first: doing it after token fixing could
    # mint a fresh all-caps token and break idempotence.
    for i, c in enumerate(text):
        if c.isalpha():
            if c.islower():
                text = text[:i] + c.upper() + text[i + 1 :]
            break
    return " ".join(_fix_token(token) for token in text.split(" "))


def _as_sentence(fragment: str) -> str:
    if not fragment:
        return ""
    # Single terminal period; don't stack after existing end punctuation.
    while fragment and fragment[-1] == ".":
        fragment = fragment[:-1]
    return fragment + "."


def _dedupe_adjacent_words(text: str) -> str:
    # Collapse exact repeats ("map map"); tokens differing in punctuation
    # ("Boston," then "Boston" from a longer term) are not duplication.
    out: list[str] = []
    for word in text.split(" "):
        if out and word.casefold() == out[-1].casefold():
            continue
        out.append(word)
    return " ".join(out)


_BOILERPLATE = re.compile(
    r"available|lc copy|library of congress web site|https?://|www\.", re.IGNORECASE
)


def select_notes(notes: list[str]) -> list[str]:
    """Leading descriptive notes: drop the final two, then any remaining
    trailing boilerplate (availability/catalogue text, URLs)."""
    kept = list(notes[:-2])
    while kept and _BOILERPLATE.search(kept[-1]):
        kept.pop()
    return kept


def build_caption(src: CaptionSource) -> str:
    """Generate a natural-language caption for one map from its metadata.

    Structure: smoothed title; location terms not already present in the
    title (case-insensitive), joined as one locative sentence; then the
    leading notes per select_notes. No term appears twice.
    """
    title = smooth_text(src.title)
    if not title:
        raise MissingTitleError(f"{src.resource_id}: metadata has no usable title")
    sentences = [_as_sentence(title)]
    seen_text = title.casefold()

    kept_locations: list[str] = []
    for location in src.locations:
        term = smooth_text(location)
        if not term:
            continue
        folded = term.casefold()
        if folded in seen_text or any(folded in k.casefold() for k in kept_locations):
            continue
        kept_locations.append(term)
    if kept_locations:
        clause = _as_sentence(", ".join(kept_locations))
        sentences.append(clause)
        seen_text += " " + clause.casefold()

    for note in select_notes(src.notes):
        smoothed = smooth_text(note)
        if not smoothed or smoothed.casefold() in seen_text:
            continue
        sentence = _as_sentence(smoothed)
        sentences.append(sentence)
        seen_text += " " + sentence.casefold()

    return _dedupe_adjacent_words(" ".join(sentences))


def _is_latin(codepoint: int) -> bool:
    return any(lo <= codepoint <= hi for lo, hi in _LATIN_RANGES)


def _char_allowed(c: str) -> bool:
    cp = ord(c)
    if 0x20 <= cp <= 0x7E:
        return True
    if 0xA0 <= cp <= 0xFF:
        return True
    return c in _EXTRA_ALLOWED


def quality_filter(
    pair: MapCaptionPair, rules: QualityRules | None = None
) -> str | None:
    """Accept a caption (returns None) or name the reason to reject it.

    Reasons: "language_change" for a mid-caption switch to a non-Latin
    script (a run of script_run_length+ foreign letters alongside Latin
    text), "nonsensical" when too many characters fall outside printable
    Latin-1 plus common typographic punctuation, "no_features" when the
    caption carries fewer content words than a useful descriptor needs.
    """
    rules = rules or QualityRules()
    caption = pair.caption

    has_latin = any(c.isalpha() and _is_latin(ord(c)) for c in caption)
    run = longest = 0
    for c in caption:
        if c.isalpha() and not _is_latin(ord(c)):
            run += 1
            longest = max(longest, run)
        else:
            run = 0
    if has_latin and longest >= rules.script_run_length:
        return "language_change"

    if caption:
        disallowed = sum(1 for c in caption if not _char_allowed(c))
        if disallowed / len(caption) > rules.max_foreign_char_fraction:
            return "nonsensical"

    content = [
        w for w in (m.group(0).casefold() for m in _WORD.finditer(caption))
        if w not in _STOPWORDS and len(w) >= 2
    ]
    if len(content) < rules.min_content_words:
        return "no_features"
    return None


def caption_source_from_metadata(resource_id: str, metadata: dict) -> CaptionSource:
    """Build a CaptionSource from a full-variant record's metadata map.

    ``locations`` and ``notes`` may arrive as lists, JSON-encoded lists, or
    pipe-separated strings (the CSV-passthrough case).
    """

    def listify(value) -> list[str]:
        if value is None or value == "":
            return []
        if isinstance(value, list):
            return [str(v) for v in value]
        text = str(value)
        if text.startswith("["):
            try:
                return [str(v) for v in json.loads(text)]
            except json.JSONDecodeError:
                pass
        return [part.strip() for part in text.split("|") if part.strip()]

    known = {"title", "locations", "notes", "date"}
    return CaptionSource(
        resource_id=resource_id,
        title=str(metadata.get("title", "") or ""),
        locations=listify(metadata.get("locations")),
        notes=listify(metadata.get("notes")),
        date=str(metadata.get("date", "") or ""),
        extra={k: v for k, v in metadata.items() if k not in known},
    )


def _item_id(iiif_url: str) -> str:
    return derive_resource_id(iiif_identifier(iiif_url).split(":")[-1])


def build_dataset(
    catalog: str | Path,
    records: str | Path,
    cfg: DatasetConfig,
    probe: Callable[[str], bool] | None = None,
) -> tuple[list[MapCaptionPair], DatasetReport]:
    """Sample catalog images, caption them, and filter to a training set.

    Sampling is seeded and deterministic: n_single_image images from items
    with exactly one image, n_sanborn from the Sanborn collection, and
    n_coverage spread across cfg.region_tags. Images without a record file
    (never successfully fetched), or failing the optional ``probe``, are
    discarded as unresponsive; the rest pass through caption generation and
    the quality filter. The report reconciles every sample.
    """
    records = Path(records)
    report = DatasetReport()
    rows = list(read_catalog(catalog))

    groups: dict[str, list[CatalogRow]] = {}
    for row in rows:
        groups.setdefault(_item_id(row.iiif_url), []).append(row)
    if cfg.max_segments_per_item > 0:
        groups = {
            item: members for item, members in groups.items()
            if len(members) <= cfg.max_segments_per_item
        }
        rows = [row for members in groups.values() for row in members]

    rng = random.Random(cfg.seed)
    chosen: list[CatalogRow] = []
    chosen_urls: set[str] = set()

    def take(pool: list[CatalogRow], count: int, label: str) -> None:
        pool = sorted(
            (row for row in pool if row.iiif_url not in chosen_urls),
            key=lambda row: row.iiif_url,
        )
        if count > len(pool):
            report.warnings.append(f"{label}: wanted {count}, only {len(pool)} eligible")
            picked = pool
        else:
            picked = rng.sample(pool, count)
        for row in picked:
            chosen.append(row)
            chosen_urls.add(row.iiif_url)

    single_pool = [members[0] for members in groups.values() if len(members) == 1]
    take(single_pool, cfg.n_single_image, "single-image items")

    sanborn_pool = [r for r in rows if "sanborn" in r.collection_context.casefold()]
    take(sanborn_pool, cfg.n_sanborn, "sanborn sample")

    if cfg.n_coverage > 0:
        if not cfg.region_tags:
            report.warnings.append("coverage requested but no region tags configured")
            take(rows, cfg.n_coverage, "coverage sample")
        else:
            def matches(row: CatalogRow, folded: str) -> bool:
                return folded in row.collection_context.casefold() or any(
                    folded in str(v).casefold() for v in row.extra.values()
                )

            remaining = cfg.n_coverage
            # Round-robin over the region tags so every region gets an image
            # before any region gets a second.
            while remaining > 0:
                progressed = False
                for tag in cfg.region_tags:
                    if remaining == 0:
                        break
                    candidates = sorted(
                        (r for r in rows
                         if r.iiif_url not in chosen_urls and matches(r, tag.casefold())),
                        key=lambda row: row.iiif_url,
                    )
                    if not candidates:
                        continue
                    row = rng.choice(candidates)
                    chosen.append(row)
                    chosen_urls.add(row.iiif_url)
                    remaining -= 1
                    progressed = True
                if not progressed:
                    report.warnings.append(
                        f"coverage sample: wanted {cfg.n_coverage}, "
                        f"matched {cfg.n_coverage - remaining}"
                    )
                    break

    pairs: list[MapCaptionPair] = []
    for row in chosen:
        report.sampled += 1
        record_path = records / record_filename(row.iiif_url)
        if not record_path.exists() or (probe is not None and not probe(row.iiif_url)):
            report.by_reason["unresponsive"] += 1
            continue
        with open(record_path, encoding="utf-8") as fh:
            record = json.load(fh)
        metadata = record.get("metadata", {})
        source = caption_source_from_metadata(_item_id(row.iiif_url), metadata)
        try:
            caption = build_caption(source)
        except MissingTitleError:
            # A caption that cannot even name its map describes no features.
            report.by_reason["no_features"] += 1
            continue
        pair = MapCaptionPair(image_ref=row.iiif_url, caption=caption)
        reason = quality_filter(pair, cfg.quality_rules)
        if reason is not None:
            report.by_reason[reason] += 1
            continue
        pairs.append(pair)

    report.discarded = sum(report.by_reason.values())
    report.final = len(pairs)
    return pairs, report


def write_manifest(pairs: Iterable[MapCaptionPair], path: str | Path) -> int:
    """Write pairs as line-delimited JSON; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.as_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_manifest(path: str | Path) -> list[MapCaptionPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                pairs.append(MapCaptionPair(obj["image_ref"], obj["caption"]))
    return pairs
