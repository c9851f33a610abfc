"""Columnar embedding index: build from record files, persist, memory-map.

The index is a dense m-by-n float32 matrix whose column i is the embedding
of image i, plus a parallel n-length table of IIIF URLs. Column-major layout
keeps each image's embedding contiguous, which is what the scoring loop
streams over.

On-disk format (little-endian, version 1):

    offset  size  field
    0       4     magic b"BETO"
    4       4     version: u32
    8       4     m (embedding dimension): u32
    12      8     n (column count): u64
    20      8     payload checksum: u64 (blake2b-8 of the float payload)
    28      36    zero padding to a 64-byte boundary
    64      4*m*n float32 payload, column-major
    ...           URL table: n entries of (u32 byte length, UTF-8 bytes)

The payload starts on a 64-byte boundary so it can be memory-mapped and
read without copying.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateUrlError,
    EmptyInputError,
    IndexCorruptionError,
    IndexFormatError,
)

MAGIC = b"BETO"
VERSION = 1
_HEADER = struct.Struct("<4sIIQQ")
PAYLOAD_OFFSET = 64
_CHUNK = 1 << 24  # 16 MiB checksum/copy granularity


@dataclass
class BetoIndex:
    """Dense column store of unit-norm embeddings with a parallel URL table."""

    matrix: np.ndarray  # float32, shape (m, n), column-major
    urls: list[str]
    source_path: Path | None = None
    build_duration: float = 0.0

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise DimensionMismatchError(
                f"index matrix must be 2-d, got shape {self.matrix.shape}"
            )
        if self.matrix.shape[1] != len(self.urls):
            raise DimensionMismatchError(
                f"matrix has {self.matrix.shape[1]} columns "
                f"but url table has {len(self.urls)} entries"
            )

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def count(self) -> int:
        return int(self.matrix.shape[1])


@dataclass
class IndexStats:
    n: int
    m: int
    bytes_on_disk: int
    build_duration: float = 0.0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "bytes_on_disk": self.bytes_on_disk,
            "build_duration": self.build_duration,
        }


def build_beto(records_dir: str | Path) -> BetoIndex:
    """Assemble an index from a directory of per-image record files.

    Records are consumed in sorted filename order so the same directory
    always produces a bit-identical index, regardless of how many workers
    wrote it. Raises EmptyInputError for an empty directory,
    DimensionMismatchError naming the first file whose embedding length
    disagrees, and DuplicateUrlError on a repeated IIIF URL.
    """
    records_dir = Path(records_dir)
    started = time.perf_counter()
    paths = sorted(records_dir.glob("*.json"))
    if not paths:
        raise EmptyInputError(f"no record files in {records_dir}")

    urls: list[str] = []
    seen: set[str] = set()
    matrix: np.ndarray | None = None
    dim = 0
    for i, path in enumerate(paths):
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        embedding = np.asarray(record["embedding"], dtype=np.float32)
        if matrix is None:
            dim = embedding.shape[0]
            matrix = np.empty((dim, len(paths)), dtype=np.float32, order="F")
        if embedding.shape != (dim,):
            raise DimensionMismatchError(
                f"{path.name}: embedding has length {embedding.shape[0]}, "
                f"expected {dim}"
            )
        url = record["iiif_url"]
        if url in seen:
            raise DuplicateUrlError(f"{path.name}: duplicate IIIF URL {url}")
        seen.add(url)
        matrix[:, i] = embedding
        urls.append(url)

    assert matrix is not None
    return BetoIndex(
        matrix=matrix, urls=urls, build_duration=time.perf_counter() - started
    )


def _payload_checksum_from_array(matrix: np.ndarray) -> tuple[int, int]:
    """Checksum the column-major payload without materializing it at once.

    Returns (checksum, payload_bytes).
    """
    h = hashlib.blake2b(digest_size=8)
    m, n = matrix.shape
    cols_per_chunk = max(1, _CHUNK // max(1, 4 * m))
    for j in range(0, n, cols_per_chunk):
        block = np.asfortranarray(matrix[:, j : j + cols_per_chunk], dtype=np.float32)
        h.update(block.tobytes(order="F"))
    return int.from_bytes(h.digest(), "little"), 4 * m * n


def save_index(index: BetoIndex, path: str | Path) -> int:
    """Write the index in the BETO binary format; returns bytes written.

    Saving an empty index is forbidden (a zero-column index has nothing to
    search and would not round-trip usefully).
    """
    if index.count == 0:
        raise EmptyInputError("refusing to save an index with no columns")
    path = Path(path)
    matrix = index.matrix
    m, n = matrix.shape
    checksum, payload_bytes = _payload_checksum_from_array(matrix)

    written = 0
    with open(path, "wb") as fh:
        header = _HEADER.pack(MAGIC, VERSION, m, n, checksum)
        fh.write(header)
        fh.write(b"\x00" * (PAYLOAD_OFFSET - len(header)))
        written += PAYLOAD_OFFSET
        cols_per_chunk = max(1, _CHUNK // max(1, 4 * m))
        for j in range(0, n, cols_per_chunk):
            block = np.asfortranarray(
                matrix[:, j : j + cols_per_chunk], dtype=np.float32
            )
            data = block.tobytes(order="F")
            fh.write(data)
            written += len(data)
        assert written == PAYLOAD_OFFSET + payload_bytes
        for url in index.urls:
            encoded = url.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            written += 4 + len(encoded)
    return written


def _verify_payload_checksum(view: memoryview, expected: int) -> None:
    h = hashlib.blake2b(digest_size=8)
    for off in range(0, len(view), _CHUNK):
        h.update(view[off : off + _CHUNK])
    actual = int.from_bytes(h.digest(), "little")
    if actual != expected:
        raise IndexCorruptionError(
            f"payload checksum mismatch: header says {expected:#018x}, "
            f"payload hashes to {actual:#018x}"
        )


def load_index(path: str | Path, verify: bool = True) -> BetoIndex:
    """Load a BETO file, memory-mapping the float payload.

    The payload is mapped read-only rather than copied. ``verify`` controls
    the payload checksum pass; it reads the whole payload once (through the
    page cache) and can be disabled when opening very large trusted files.
    Structural checks (magic, version, byte counts) always run.
    """
    path = Path(path)
    file_size = path.stat().st_size
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise IndexFormatError(f"{path}: file too small to hold a header")
    magic, version, m, n, checksum = _HEADER.unpack(header)
    if magic != MAGIC:
        raise IndexFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise IndexFormatError(f"{path}: unsupported version {version}")

    payload_bytes = 4 * m * n
    min_size = PAYLOAD_OFFSET + payload_bytes
    if file_size < min_size:
        raise IndexCorruptionError(
            f"{path}: truncated payload, need at least {min_size} bytes "
            f"but file has {file_size}"
        )

    matrix = np.memmap(
        path, dtype="<f4", mode="r", offset=PAYLOAD_OFFSET, shape=(m, n), order="F"
    )
    if verify:
        flat = np.memmap(
            path, dtype=np.uint8, mode="r", offset=PAYLOAD_OFFSET, shape=(payload_bytes,)
        )
        _verify_payload_checksum(memoryview(flat), checksum)

    urls: list[str] = []
    with open(path, "rb") as fh:
        fh.seek(PAYLOAD_OFFSET + payload_bytes)
        table = fh.read()
    offset = 0
    for i in range(n):
        if offset + 4 > len(table):
            raise IndexCorruptionError(
                f"{path}: URL table truncated at entry {i} of {n}"
            )
        (length,) = struct.unpack_from("<I", table, offset)
        offset += 4
        if offset + length > len(table):
            raise IndexCorruptionError(
                f"{path}: URL table truncated at entry {i} of {n}: "
                f"need {length} bytes, have {len(table) - offset}"
            )
        urls.append(table[offset : offset + length].decode("utf-8"))
        offset += length

    return BetoIndex(matrix=matrix, urls=urls, source_path=path)


def serialized_size(index: BetoIndex) -> int:
    """Size in bytes the index occupies (or would occupy) in BETO format."""
    url_table = sum(4 + len(url.encode("utf-8")) for url in index.urls)
    return PAYLOAD_OFFSET + 4 * index.dim * index.count + url_table


def stats(index: BetoIndex) -> IndexStats:
    """Counts and sizes for an index, as stored."""
    if index.source_path is not None and index.source_path.exists():
        bytes_on_disk = index.source_path.stat().st_size
    else:
        bytes_on_disk = serialized_size(index)
    return IndexStats(
        n=index.count,
        m=index.dim,
        bytes_on_disk=bytes_on_disk,
        build_duration=index.build_duration,
    )


def synthetic_index(n: int, m: int = 512, seed: int = 0) -> BetoIndex:
    """Random unit-norm index for benchmarks and scale tests.

    Columns are drawn standard-normal and normalized; URLs are synthetic
    but unique. Generation is chunked to bound peak memory.
    """
    if n < 1:
        raise EmptyInputError("synthetic index needs n >= 1")
    rng = np.random.default_rng(seed)
    matrix = np.empty((m, n), dtype=np.float32, order="F")
    cols_per_chunk = max(1, _CHUNK // max(1, 4 * m))
    for j in range(0, n, cols_per_chunk):
        block = rng.standard_normal((m, min(cols_per_chunk, n - j)), dtype=np.float32)
        norms = np.linalg.norm(block, axis=0, keepdims=True)
        np.maximum(norms, np.finfo(np.float32).tiny, out=norms)
        matrix[:, j : j + block.shape[1]] = block / norms
    urls = [f"synthetic://image/{i}" for i in range(n)]
    return BetoIndex(matrix=matrix, urls=urls)
