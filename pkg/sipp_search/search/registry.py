from dataclasses import dataclass

import numpy as np

from sipp_search.errors import UsageError
from sipp_search.gallery.types import Gallery
from sipp_search.lsh.index import LshIndex
from sipp_search.search.strategies import (
    DEFAULT_THRESHOLD_T,
    Backend,
    SearchResult,
    Strategy,
    search_brute_many,
    search_combined_many,
    search_mean_many,
)


@dataclass(frozen=True)
class SearchStrategy:
    name: str
    strategy: Strategy
    include_augmented: bool = True
    backend: Backend | None = None

    @property
    def needs_index(self) -> bool:
        return self.backend == Backend.LSH


_search_strategy_registry: dict[str, SearchStrategy] = {}


def register_search_strategy(search_strategy: SearchStrategy) -> None:
    _search_strategy_registry[search_strategy.name] = search_strategy


def get_search_strategy(name: str) -> SearchStrategy | None:
    return _search_strategy_registry.get(name, None)


def registered_strategy_names() -> list[str]:
    return list(_search_strategy_registry)


def register_search_strategies():
    register_search_strategy(
        SearchStrategy(name="base0", strategy=Strategy.BRUTE, include_augmented=False)
    )
    register_search_strategy(
        SearchStrategy(name="svd-brute", strategy=Strategy.BRUTE, include_augmented=True)
    )
    register_search_strategy(SearchStrategy(name="mean", strategy=Strategy.MEAN))
    register_search_strategy(
        SearchStrategy(
            name="mean-brute", strategy=Strategy.MEAN_BRUTE, backend=Backend.BRUTE
        )
    )
    register_search_strategy(
        SearchStrategy(name="mean-lsh", strategy=Strategy.MEAN_LSH, backend=Backend.LSH)
    )


def resolve_search_strategy(name: str) -> SearchStrategy:
    search_strategy = get_search_strategy(name)
    if search_strategy is None:
        raise UsageError(
            f"unknown strategy {name!r}, expected one of {registered_strategy_names()}"
        )
    return search_strategy


def run_strategy(
    gallery: Gallery,
    queries: np.ndarray,
    name: str,
    threshold_t: float = DEFAULT_THRESHOLD_T,
    index: LshIndex | None = None,
    threads: int | None = None,
) -> list[SearchResult]:
    """Answer every query with the named strategy; results follow the query order."""
    search_strategy = resolve_search_strategy(name)
    if search_strategy.strategy == Strategy.BRUTE:
        return search_brute_many(
            gallery,
            queries,
            include_augmented=search_strategy.include_augmented,
            threads=threads,
        )
    if search_strategy.strategy == Strategy.MEAN:
        return search_mean_many(gallery, queries, threads=threads)
    return search_combined_many(
        gallery,
        queries,
        backend=search_strategy.backend,
        threshold_t=threshold_t,
        index=index,
        threads=threads,
    )


def init():
    register_search_strategies()
