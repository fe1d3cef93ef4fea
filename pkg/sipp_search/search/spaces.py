from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from sipp_search.errors import DataFormatError, DimensionMismatchError
from sipp_search.similarity import row_distances, similarity_score

# queries per matrix-product block in batched nearest-neighbor search
QUERY_BLOCK = 256


@dataclass(frozen=True)
class Neighbor:
    row: int
    person_id: str
    distance: float

    @property
    def score(self) -> float:
        return similarity_score(self.distance)


def as_query_matrix(queries: np.ndarray, dim: int) -> np.ndarray:
    matrix = np.asarray(queries, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[np.newaxis, :]
    if matrix.ndim != 2:
        raise DataFormatError(f"queries must be a 2-d array, got shape {matrix.shape}")
    if matrix.shape[1] != dim:
        raise DimensionMismatchError(dim, matrix.shape[1], context="query")
    if not np.all(np.isfinite(matrix)):
        raise DataFormatError("queries contain non-finite values")
    return matrix


class VectorSpace:
    """Exact euclidean nearest-neighbor search over a fixed set of labeled vectors.

    Candidate rows are shortlisted with a float64 matrix product and then rescored with
    direct differences, so reported distances are exact and ties break toward the
    smallest person id, then the smallest row.
    """

    def __init__(self, vectors: np.ndarray, person_ids: Sequence[str]):
        self._vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if self._vectors.ndim != 2:
            raise DataFormatError(f"vectors must be 2-d, got shape {self._vectors.shape}")
        if len(person_ids) != self._vectors.shape[0]:
            raise DataFormatError(
                f"{len(person_ids)} labels for {self._vectors.shape[0]} vectors"
            )
        self._person_ids = tuple(person_ids)
        self._sq_norms = np.einsum("ij,ij->i", self._vectors, self._vectors)
        self._sq_max = float(self._sq_norms.max()) if len(self) else 0.0

    def __len__(self) -> int:
        return self._vectors.shape[0]

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def person_id(self, row: int) -> str:
        return self._person_ids[row]

    def _best(self, q: np.ndarray, rows: np.ndarray) -> Neighbor:
        distances = row_distances(self._vectors[rows], q)
        best = distances.min()
        tied = rows[distances == best]
        row = min(tied, key=lambda r: (self._person_ids[r], r))
        return Neighbor(int(row), self._person_ids[row], float(best))

    def nearest(self, queries: np.ndarray) -> list[Neighbor]:
        if len(self) == 0:
            raise DataFormatError("cannot search an empty vector set")
        queries = as_query_matrix(queries, self.dim)
        results: list[Neighbor] = []
        for start in range(0, queries.shape[0], QUERY_BLOCK):
            block = queries[start : start + QUERY_BLOCK]
            q_norms = np.einsum("ij,ij->i", block, block)
            approx = self._sq_norms[np.newaxis, :] - 2.0 * (block @ self._vectors.T)
            approx += q_norms[:, np.newaxis]
            for i, q in enumerate(block):
                tol = 1e-10 * (q_norms[i] + self._sq_max) + 1e-12
                rows = np.flatnonzero(approx[i] <= approx[i].min() + tol)
                results.append(self._best(q, rows))
        return results

    def rank(self, q: np.ndarray, rows: np.ndarray, top: int) -> list[Neighbor]:
        """Exactly score the given rows against q and return the best `top`, best first."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0 or top < 1:
            return []
        distances = row_distances(self._vectors[rows], q)
        if rows.size > top:
            cutoff = np.partition(distances, top - 1)[top - 1]
            keep = distances <= cutoff
            rows, distances = rows[keep], distances[keep]
        ordered = sorted(
            zip(distances.tolist(), rows.tolist()),
            key=lambda item: (item[0], self._person_ids[item[1]], item[1]),
        )
        return [
            Neighbor(row, self._person_ids[row], distance)
            for distance, row in ordered[:top]
        ]
