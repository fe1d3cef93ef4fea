"""Distance and similarity-score primitives shared by every search strategy.

Vectors are used as produced by the feature extractor, no normalization is applied.
Squared differences are always accumulated in float64 whatever the storage precision.
"""

import math
from collections.abc import Sequence

import numpy as np

from sipp_search.errors import DataFormatError, DimensionMismatchError

FeatureVector = np.ndarray


def as_feature_vector(
    values: Sequence[float] | np.ndarray, dim: int | None = None
) -> FeatureVector:
    vector = np.asarray(values)
    if vector.ndim != 1 or vector.shape[0] == 0:
        raise DataFormatError(
            f"feature vector must be a non-empty 1-d sequence, got shape {vector.shape}"
        )
    if dim is not None and vector.shape[0] != dim:
        raise DimensionMismatchError(dim, vector.shape[0])
    if not np.all(np.isfinite(vector)):
        raise DataFormatError("feature vector contains non-finite values")
    return vector


def row_distances(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Exact euclidean distances from q to every row of matrix, in float64."""
    diff = np.asarray(matrix, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def euclidean_distance(x: FeatureVector, y: FeatureVector) -> float:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DimensionMismatchError(x.shape[-1], y.shape[-1])
    return float(row_distances(x[np.newaxis, :], y)[0])


def similarity_score(d: float) -> float:
    if not math.isfinite(d) or d < 0:
        raise ValueError(f"distance must be finite and non-negative, got {d}")
    return 1.0 / (1.0 + d)


def scores_from_distances(distances: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.asarray(distances, dtype=np.float64))
