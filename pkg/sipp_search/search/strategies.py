"""Gallery search strategies and the rule that fuses mean search with per-image search."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import ConfigError
from sipp_search.gallery.types import Gallery
from sipp_search.lsh.index import LshIndex
from sipp_search.search.protocols.neighbor_searcher import NeighborSearcher
from sipp_search.search.searchers import FlatSearcher, LshSearcher, MeanSearcher
from sipp_search.search.spaces import as_query_matrix

logger = get_logger(__name__)

DEFAULT_THRESHOLD_T = 0.03
# score differences within this of T count as exactly T
FUSE_TOLERANCE = 1e-9

# queries handed to one worker at a time
QUERY_CHUNK = 512


class Strategy(StrEnum):
    BRUTE = "brute"
    MEAN = "mean"
    MEAN_BRUTE = "mean_brute"
    MEAN_LSH = "mean_lsh"


class Backend(StrEnum):
    BRUTE = "brute"
    LSH = "lsh"


@dataclass(frozen=True)
class SearchResult:
    person_id: str
    score: float
    strategy: Strategy


def _check_threshold(threshold_t: float) -> None:
    if not (math.isfinite(threshold_t) and threshold_t >= 0):
        raise ConfigError(f"fusion threshold T must be >= 0, got {threshold_t}")


def fuse(
    s1: float,
    id1: str,
    s2: float,
    id2: str,
    threshold_t: float = DEFAULT_THRESHOLD_T,
    strategy: Strategy = Strategy.MEAN_BRUTE,
) -> SearchResult:
    """Combine the mean-search hit (s1, id1) with the per-image hit (s2, id2).

    The per-image person wins only when its score beats the mean score by more than T;
    inside the closed band [s1 - T, s1 + T] the mean person is kept with the lower score.
    """
    if id1 == id2:
        return SearchResult(id1, max(s1, s2), strategy)
    margin = s2 - s1
    if margin > threshold_t + FUSE_TOLERANCE:
        return SearchResult(id2, s2, strategy)
    if margin < -threshold_t - FUSE_TOLERANCE:
        return SearchResult(id1, s1, strategy)
    return SearchResult(id1, min(s1, s2), strategy)


def _per_image_searcher(
    gallery: Gallery, backend: Backend, index: LshIndex | None
) -> NeighborSearcher:
    if backend == Backend.LSH:
        return LshSearcher(gallery, index)
    return FlatSearcher(gallery, include_augmented=True)


def _run_chunks(
    queries: np.ndarray, handle, threads: int | None
) -> list[SearchResult]:
    chunks = [
        queries[start : start + QUERY_CHUNK]
        for start in range(0, queries.shape[0], QUERY_CHUNK)
    ]
    if threads == 1 or len(chunks) <= 1:
        parts = [handle(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(handle, chunks))
    return [result for part in parts for result in part]


def search_brute_many(
    gallery: Gallery,
    queries: np.ndarray,
    include_augmented: bool = True,
    threads: int | None = None,
) -> list[SearchResult]:
    searcher = FlatSearcher(gallery, include_augmented=include_augmented)
    queries = as_query_matrix(queries, gallery.dim)

    def handle(chunk: np.ndarray) -> list[SearchResult]:
        return [
            SearchResult(n.person_id, n.score, Strategy.BRUTE)
            for n in searcher.nearest(chunk)
        ]

    return _run_chunks(queries, handle, threads)


def search_mean_many(
    gallery: Gallery, queries: np.ndarray, threads: int | None = None
) -> list[SearchResult]:
    searcher = MeanSearcher(gallery)
    queries = as_query_matrix(queries, gallery.dim)

    def handle(chunk: np.ndarray) -> list[SearchResult]:
        return [
            SearchResult(n.person_id, n.score, Strategy.MEAN)
            for n in searcher.nearest(chunk)
        ]

    return _run_chunks(queries, handle, threads)


def search_combined_many(
    gallery: Gallery,
    queries: np.ndarray,
    backend: Backend = Backend.BRUTE,
    threshold_t: float = DEFAULT_THRESHOLD_T,
    index: LshIndex | None = None,
    threads: int | None = None,
) -> list[SearchResult]:
    _check_threshold(threshold_t)
    backend = Backend(backend)
    strategy = Strategy.MEAN_LSH if backend == Backend.LSH else Strategy.MEAN_BRUTE
    mean_searcher = MeanSearcher(gallery)
    image_searcher = _per_image_searcher(gallery, backend, index)
    queries = as_query_matrix(queries, gallery.dim)

    def handle(chunk: np.ndarray) -> list[SearchResult]:
        return [
            fuse(m.score, m.person_id, p.score, p.person_id, threshold_t, strategy)
            for m, p in zip(mean_searcher.nearest(chunk), image_searcher.nearest(chunk))
        ]

    results = _run_chunks(queries, handle, threads)
    if isinstance(image_searcher, LshSearcher) and image_searcher.fallbacks:
        logger.warning(
            f"{image_searcher.fallbacks} of {queries.shape[0]} queries fell back to exact search"
        )
    return results


def brute_force_search(
    gallery: Gallery, q: np.ndarray, include_augmented: bool = True
) -> SearchResult:
    return search_brute_many(gallery, q, include_augmented=include_augmented, threads=1)[0]


def mean_search(gallery: Gallery, q: np.ndarray) -> SearchResult:
    return search_mean_many(gallery, q, threads=1)[0]


def search_combined(
    gallery: Gallery,
    q: np.ndarray,
    backend: Backend = Backend.BRUTE,
    threshold_t: float = DEFAULT_THRESHOLD_T,
    index: LshIndex | None = None,
) -> SearchResult:
    return search_combined_many(
        gallery, q, backend=backend, threshold_t=threshold_t, index=index, threads=1
    )[0]
