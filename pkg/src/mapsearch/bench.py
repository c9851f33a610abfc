"""Single-query latency benchmark over a real or synthetic index."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .search import score_all, softmax_top, top_k
from .store import BetoIndex


@dataclass
class BenchResult:
    queries: int
    k: int
    n: int
    m: int
    p50_ms: float
    p95_ms: float
    mean_ms: float
    max_ms: float

    def as_dict(self) -> dict:
        return {
            "queries": self.queries,
            "k": self.k,
            "n": self.n,
            "m": self.m,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "mean_ms": self.mean_ms,
            "max_ms": self.max_ms,
        }


def run_bench(
    index: BetoIndex, queries: int = 50, k: int = 10, seed: int = 0, warmup: int = 3
) -> BenchResult:
    """Time the full scoring path (score, select, softmax) per query.

    Queries are random unit vectors; embedding time is excluded since it is
    a property of the model backend, not the index.
    """
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((queries + warmup, index.dim), dtype=np.float32)
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

    latencies = []
    for i, vector in enumerate(vectors):
        started = time.perf_counter()
        scores = score_all(index, vector)
        hits = top_k(scores, k)
        softmax_top(np.array([score for _, score in hits]))
        elapsed = (time.perf_counter() - started) * 1000.0
        if i >= warmup:
            latencies.append(elapsed)

    arr = np.array(latencies)
    return BenchResult(
        queries=queries,
        k=k,
        n=index.count,
        m=index.dim,
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
        mean_ms=float(arr.mean()),
        max_ms=float(arr.max()),
    )
