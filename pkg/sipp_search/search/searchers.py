import threading
from abc import ABC
from typing import override

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError, UsageError
from sipp_search.gallery.types import Gallery
from sipp_search.lsh.index import LshIndex
from sipp_search.search.protocols.neighbor_searcher import NeighborSearcher
from sipp_search.search.spaces import Neighbor, as_query_matrix

logger = get_logger(__name__)


class BaseNeighborSearcher(NeighborSearcher, ABC):
    def __init__(self, gallery: Gallery):
        self._gallery = gallery

    def _queries(self, queries: np.ndarray) -> np.ndarray:
        return as_query_matrix(queries, self._gallery.dim)


class FlatSearcher(BaseNeighborSearcher):
    """Exact search over the per-image store, optionally without augmented vectors."""

    def __init__(self, gallery: Gallery, include_augmented: bool = True):
        super().__init__(gallery)
        self._include_augmented = include_augmented

    @override
    def nearest(self, queries: np.ndarray) -> list[Neighbor]:
        queries = self._queries(queries)
        if len(self._gallery) == 0:
            raise DataFormatError("cannot search an empty gallery")
        if self._include_augmented:
            return self._gallery.flat_space.nearest(queries)
        space, rows = self._gallery.original_space
        if len(space) == 0:
            raise DataFormatError("gallery holds no non-augmented entries")
        return [
            Neighbor(int(rows[n.row]), n.person_id, n.distance)
            for n in space.nearest(queries)
        ]


class MeanSearcher(BaseNeighborSearcher):
    @override
    def nearest(self, queries: np.ndarray) -> list[Neighbor]:
        queries = self._queries(queries)
        if not self._gallery.means:
            raise DataFormatError("gallery has no person means to search")
        return self._gallery.mean_space.nearest(queries)


class LshSearcher(BaseNeighborSearcher):
    """Top-1 from the LSH index, falling back to exact search when no bucket matches."""

    def __init__(self, gallery: Gallery, index: LshIndex | None):
        if index is None:
            raise UsageError(
                "the lsh backend needs an LSH index; build the gallery with --lsh"
            )
        if len(index) != len(gallery):
            raise UsageError(
                f"LSH index covers {len(index)} entries, gallery has {len(gallery)}"
            )
        super().__init__(gallery)
        self._index = index
        self._fallback = FlatSearcher(gallery, include_augmented=True)
        self._lock = threading.Lock()
        self.fallbacks = 0
        self.candidates_scored = 0

    @override
    def nearest(self, queries: np.ndarray) -> list[Neighbor]:
        queries = self._queries(queries)
        results: list[Neighbor | None] = [None] * queries.shape[0]
        missed = []
        scored = 0
        for position, q in enumerate(queries):
            found = self._index.query_with_stats(q, top=1)
            scored += found.candidates
            if found.neighbors:
                results[position] = found.neighbors[0]
            else:
                missed.append(position)
        with self._lock:
            self.candidates_scored += scored
        logger.debug(
            f"LSH scored {scored / max(len(queries), 1):.1f} candidates per query "
            f"over {len(queries)} queries"
        )
        if missed:
            with self._lock:
                self.fallbacks += len(missed)
            logger.debug(f"{len(missed)} queries had no LSH candidates, using exact search")
            for position, neighbor in zip(missed, self._fallback.nearest(queries[missed])):
                results[position] = neighbor
        return results
