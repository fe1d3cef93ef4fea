"""p-stable (Gaussian projection) LSH for euclidean distance with query-directed multiprobe.

Each table hashes a vector with k functions h(v) = floor((a.v + b) / w), a ~ N(0, I),
b ~ U[0, w), and folds the k integers into one 64-bit bucket key. Queries visit the home
bucket plus the perturbed buckets whose boundaries lie closest to the query projection,
then score the union of candidates exactly.
"""

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError
from sipp_search.gallery.types import Gallery
from sipp_search.lsh.params import LshParams
from sipp_search.lsh.rng import combine_hashes, table_generators
from sipp_search.search.spaces import Neighbor, VectorSpace, as_query_matrix

logger = get_logger(__name__)


@dataclass(eq=False)
class LshTable:
    projections: np.ndarray
    offsets: np.ndarray
    buckets: dict[int, np.ndarray]

    def project(self, vectors: np.ndarray, width: float) -> np.ndarray:
        return (np.atleast_2d(vectors) @ self.projections.T + self.offsets) / width

    def keys_for(self, vectors: np.ndarray, width: float) -> np.ndarray:
        codes = np.floor(self.project(vectors, width)).astype(np.int64)
        return combine_hashes(codes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LshTable):
            return NotImplemented
        if not (
            np.array_equal(self.projections, other.projections)
            and np.array_equal(self.offsets, other.offsets)
            and list(self.buckets) == list(other.buckets)
        ):
            return False
        return all(
            np.array_equal(rows, other.buckets[key]) for key, rows in self.buckets.items()
        )


@dataclass(frozen=True)
class LshQueryResult:
    neighbors: list[Neighbor]
    # distinct gallery rows scored exactly
    candidates: int


def _group_buckets(keys: np.ndarray) -> dict[int, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    boundaries = np.flatnonzero(np.diff(sorted_keys)) + 1
    starts = np.concatenate(([0], boundaries)) if keys.size else np.zeros(0, np.int64)
    groups = np.split(order, boundaries)
    return {
        int(sorted_keys[start]): group.astype(np.int64)
        for start, group in zip(starts, groups)
    }


def perturbation_sets(fractions: np.ndarray, limit: int) -> list[list[tuple[int, int]]]:
    """The `limit` cheapest perturbation sets of one hash vector, cheapest first.

    `fractions` holds each coordinate's position inside its slot in [0, 1). Moving a
    coordinate by -1 costs its distance to the lower boundary, by +1 its distance to the
    upper one; a set costs the sum of squared distances and never moves one coordinate twice.
    """
    if limit <= 0:
        return []
    steps = []
    for j, frac in enumerate(fractions.tolist()):
        steps.append((frac, j, -1))
        steps.append((1.0 - frac, j, +1))
    steps.sort()
    costs = [distance * distance for distance, _, _ in steps]

    results: list[list[tuple[int, int]]] = []
    heap: list[tuple[float, tuple[int, ...]]] = [(costs[0], (0,))]
    while heap and len(results) < limit:
        cost, members = heapq.heappop(heap)
        coords = [steps[m][1] for m in members]
        if len(set(coords)) == len(coords):
            results.append([(steps[m][1], steps[m][2]) for m in members])
        last = members[-1]
        if last + 1 < len(steps):
            shifted = members[:-1] + (last + 1,)
            heapq.heappush(heap, (cost - costs[last] + costs[last + 1], shifted))
            expanded = members + (last + 1,)
            heapq.heappush(heap, (cost + costs[last + 1], expanded))
    return results


class LshIndex:
    def __init__(self, params: LshParams, tables: list[LshTable], space: VectorSpace):
        self._params = params
        self._tables = tables
        self._space = space

    @property
    def params(self) -> LshParams:
        return self._params

    @property
    def tables(self) -> list[LshTable]:
        return self._tables

    @property
    def space(self) -> VectorSpace:
        return self._space

    def __len__(self) -> int:
        return len(self._space)

    def bucket_keys(self, table: int, vectors: np.ndarray) -> np.ndarray:
        return self._tables[table].keys_for(
            np.asarray(vectors, dtype=np.float64), self._params.bucket_width
        )

    def _probe_keys(self, table: LshTable, q: np.ndarray) -> list[int]:
        position = table.project(q, self._params.bucket_width)[0]
        home = np.floor(position)
        codes = [home.astype(np.int64)]
        for moves in perturbation_sets(position - home, self._params.probes_per_table - 1):
            code = codes[0].copy()
            for coordinate, delta in moves:
                code[coordinate] += delta
            codes.append(code)
        return [int(key) for key in combine_hashes(np.stack(codes))]

    def candidates(self, q: np.ndarray) -> np.ndarray:
        q = as_query_matrix(q, self._space.dim)[0]
        if self._params.exhaustive:
            return np.arange(len(self._space), dtype=np.int64)
        found: list[np.ndarray] = []
        for table in self._tables:
            for key in self._probe_keys(table, q):
                rows = table.buckets.get(key)
                if rows is not None:
                    found.append(rows)
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def query_with_stats(self, q: np.ndarray, top: int = 1) -> LshQueryResult:
        if top < 1:
            raise ValueError(f"top must be >= 1, got {top}")
        q = as_query_matrix(q, self._space.dim)[0]
        rows = self.candidates(q)
        return LshQueryResult(self._space.rank(q, rows, top), int(rows.size))

    def query(self, q: np.ndarray, top: int = 1) -> list[Neighbor]:
        return self.query_with_stats(q, top).neighbors

    def stats(self) -> list[dict[str, Any]]:
        stats = []
        for number, table in enumerate(self._tables):
            sizes = np.array([rows.size for rows in table.buckets.values()])
            stats.append(
                {
                    "table": number,
                    "buckets": int(sizes.size),
                    "mean_bucket_size": float(sizes.mean()) if sizes.size else 0.0,
                    "max_bucket_size": int(sizes.max()) if sizes.size else 0,
                }
            )
        return stats

    def __eq__(self, other) -> bool:
        if not isinstance(other, LshIndex):
            return NotImplemented
        return self._params == other._params and self._tables == other._tables


def make_tables(
    vectors: np.ndarray, params: LshParams, threads: int | None = None
) -> list[LshTable]:
    dim = vectors.shape[1]
    generators = table_generators(params.seed, params.num_tables)

    def build_table(rng: np.random.Generator) -> LshTable:
        projections = rng.standard_normal((params.hashes_per_table, dim))
        offsets = rng.uniform(0.0, params.bucket_width, size=params.hashes_per_table)
        table = LshTable(projections, offsets, {})
        table.buckets = _group_buckets(table.keys_for(vectors, params.bucket_width))
        return table

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(build_table, generators))


def build_lsh(
    gallery: Gallery, params: LshParams, threads: int | None = None
) -> LshIndex:
    if len(gallery) == 0:
        raise DataFormatError("cannot build an LSH index over an empty gallery")
    space = gallery.flat_space
    tables = make_tables(space.vectors, params, threads=threads)
    logger.debug(
        f"built LSH index: {params.num_tables} tables, k={params.hashes_per_table}, "
        f"w={params.bucket_width:.4f}, {len(space)} entries"
    )
    return LshIndex(params, tables, space)


def query_lsh(index: LshIndex, q: np.ndarray, top: int = 1) -> list[Neighbor]:
    """Ranked (entry row, exact score) neighbors from the visited buckets; may be empty."""
    return index.query(q, top=top)


def query_lsh_stats(index: LshIndex, q: np.ndarray, top: int = 1) -> LshQueryResult:
    """Like query_lsh, plus the number of candidates gathered from the visited buckets."""
    return index.query_with_stats(q, top=top)
