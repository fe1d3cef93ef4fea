import numpy as np

from typing import Protocol, runtime_checkable

from sipp_search.search.spaces import Neighbor


@runtime_checkable
class NeighborSearcher(Protocol):
    def nearest(self, queries: np.ndarray) -> list[Neighbor]: ...
