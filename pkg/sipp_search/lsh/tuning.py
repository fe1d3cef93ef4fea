import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import cachetools
import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import ConfigError, DataFormatError, TuningError
from sipp_search.gallery.types import Gallery
from sipp_search.lsh.index import LshIndex, LshTable, make_tables
from sipp_search.lsh.params import LshParams
from sipp_search.search.spaces import Neighbor, as_query_matrix

logger = get_logger(__name__)

DEFAULT_TARGET_RECALL = 0.98
MIN_VALIDATION_QUERIES = 100
DISTANCE_SAMPLE_PAIRS = 1000
# distances of the same row scored in different batches may differ in the last ulp
_RECALL_SLACK = 1e-12


@dataclass(frozen=True)
class TuningGrid:
    num_tables: Sequence[int] = (4, 8, 16)
    hashes_per_table: Sequence[int] = (8, 12, 16)
    width_factors: Sequence[float] = (1.0, 2.0, 4.0)
    probes_per_table: Sequence[int] = (1, 4, 16)

    def points(self, base_width: float, seed: int) -> list[LshParams]:
        """Grid points ordered cheapest first: L*probes, then k, then bucket width."""
        points = [
            LshParams(
                num_tables=tables,
                hashes_per_table=k,
                bucket_width=factor * base_width,
                probes_per_table=probes,
                seed=seed,
            )
            for tables, k, factor, probes in itertools.product(
                self.num_tables,
                self.hashes_per_table,
                self.width_factors,
                self.probes_per_table,
            )
        ]
        return sorted(points, key=lambda p: (p.cost, p.bucket_width))


def median_pairwise_distance(
    vectors: np.ndarray, pairs: int = DISTANCE_SAMPLE_PAIRS, seed: int = 0
) -> float:
    n = vectors.shape[0]
    if n < 2:
        raise DataFormatError("need at least two vectors to estimate pairwise distances")
    rng = np.random.default_rng(seed)
    left = rng.integers(0, n, size=pairs)
    right = (left + rng.integers(1, n, size=pairs)) % n
    diff = vectors[left].astype(np.float64) - vectors[right].astype(np.float64)
    median = float(np.median(np.sqrt(np.einsum("ij,ij->i", diff, diff))))
    if median <= 0:
        raise DataFormatError("sampled pairwise distances are all zero")
    return median


def measure_recall(
    index: LshIndex, queries: np.ndarray, truth: Sequence[Neighbor]
) -> float:
    """Fraction of queries whose LSH top-1 is as close as the exact nearest neighbor."""
    hits = 0
    for q, expected in zip(queries, truth):
        found = index.query(q, top=1)
        slack = _RECALL_SLACK * max(1.0, expected.distance)
        if found and found[0].distance <= expected.distance + slack:
            hits += 1
    return hits / len(truth)


def tune_lsh(
    gallery: Gallery,
    queries: np.ndarray,
    target_recall: float = DEFAULT_TARGET_RECALL,
    grid: TuningGrid | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> LshParams:
    if not 0.0 <= target_recall <= 1.0:
        raise ConfigError(f"target recall must be within [0, 1], got {target_recall}")
    queries = as_query_matrix(queries, gallery.dim)
    if queries.shape[0] < MIN_VALIDATION_QUERIES:
        raise ConfigError(
            f"tuning needs at least {MIN_VALIDATION_QUERIES} validation queries, got {queries.shape[0]}"
        )
    grid = grid or TuningGrid()
    space = gallery.flat_space
    truth = space.nearest(queries)
    base_width = median_pairwise_distance(space.vectors, seed=seed)
    logger.info(
        f"tuning LSH over {len(space)} entries with {queries.shape[0]} validation queries, "
        f"median pairwise distance {base_width:.4f}, target recall {target_recall}"
    )

    # tables are a prefix-stable function of the seed, so one build of the widest
    # table count serves every smaller count with the same k and w
    max_tables = max(grid.num_tables)
    built: cachetools.LRUCache = cachetools.LRUCache(
        maxsize=len(grid.hashes_per_table) * len(grid.width_factors)
    )

    def tables_for(params: LshParams) -> list[LshTable]:
        key = (params.hashes_per_table, params.bucket_width)
        if key not in built:
            widest = LshParams(
                num_tables=max_tables,
                hashes_per_table=params.hashes_per_table,
                bucket_width=params.bucket_width,
                seed=seed,
            )
            built[key] = make_tables(space.vectors, widest, threads=threads)
        return built[key][: params.num_tables]

    best_recall = 0.0
    for params in grid.points(base_width, seed):
        index = LshIndex(params, tables_for(params), space)
        recall = measure_recall(index, queries, truth)
        best_recall = max(best_recall, recall)
        logger.debug(
            f"L={params.num_tables} k={params.hashes_per_table} "
            f"w={params.bucket_width:.4f} probes={params.probes_per_table}: recall {recall:.4f}"
        )
        if recall >= target_recall:
            logger.info(f"selected LSH parameters {params.to_dict()} with recall {recall:.4f}")
            return params
    raise TuningError(
        f"no grid point reached target recall {target_recall}", best_recall
    )
