import math
import unittest

import numpy as np

from sipp_search.errors import DataFormatError, DimensionMismatchError
from sipp_search.similarity import (
    as_feature_vector,
    euclidean_distance,
    scores_from_distances,
    similarity_score,
)


class TestEuclideanDistance(unittest.TestCase):
    """Test cases for euclidean_distance."""

    def test_known_values(self):
        """Test hand-computed distances."""
        self.assertEqual(euclidean_distance(np.zeros(3), np.zeros(3)), 0.0)
        self.assertAlmostEqual(euclidean_distance(np.array([3.0, 0.0]), np.array([0.0, 4.0])), 5.0)
        self.assertAlmostEqual(
            euclidean_distance(np.array([1.0, 2.0, 2.0]), np.zeros(3)), 3.0
        )

    def test_dimension_mismatch(self):
        """Test that both dims are reported on mismatch."""
        with self.assertRaises(DimensionMismatchError) as ctx:
            euclidean_distance(np.zeros(3), np.zeros(4))
        self.assertEqual(ctx.exception.expected, 3)
        self.assertEqual(ctx.exception.actual, 4)
        self.assertIn("dim 3", str(ctx.exception))
        self.assertIn("dim 4", str(ctx.exception))

    def test_float32_inputs_accumulate_in_float64(self):
        """Test float32 storage gives the float64 distance."""
        x = np.full(128, 0.1, dtype=np.float32)
        y = np.zeros(128, dtype=np.float32)
        expected = math.sqrt(128 * float(np.float32(0.1)) ** 2)
        self.assertAlmostEqual(euclidean_distance(x, y), expected, places=12)

    def test_symmetry_and_triangle_inequality(self):
        """Test metric properties on random vectors."""
        rng = np.random.default_rng(7)
        for _ in range(200):
            x, y, z = rng.standard_normal((3, 16))
            self.assertAlmostEqual(euclidean_distance(x, y), euclidean_distance(y, x))
            self.assertLessEqual(
                euclidean_distance(x, z),
                euclidean_distance(x, y) + euclidean_distance(y, z) + 1e-12,
            )
            self.assertEqual(euclidean_distance(x, x), 0.0)


class TestSimilarityScore(unittest.TestCase):
    """Test cases for similarity_score."""

    def test_known_values(self):
        self.assertEqual(similarity_score(0.0), 1.0)
        self.assertEqual(similarity_score(1.0), 0.5)
        self.assertEqual(similarity_score(3.0), 0.25)

    def test_rejects_invalid_distances(self):
        """Test negative and non-finite distances."""
        for d in (-0.1, math.inf, math.nan):
            with self.assertRaises(ValueError):
                similarity_score(d)

    def test_strictly_decreasing(self):
        distances = np.linspace(0.0, 10.0, 101)
        scores = [similarity_score(float(d)) for d in distances]
        self.assertTrue(all(a > b for a, b in zip(scores, scores[1:])))
        np.testing.assert_allclose(scores_from_distances(distances), scores)

    def test_argmax_score_is_argmin_distance(self):
        """Test the score keeps the nearest neighbor on random candidate sets."""
        rng = np.random.default_rng(11)
        for size in range(1, 101, 7):
            candidates = rng.standard_normal((size, 8))
            q = rng.standard_normal(8)
            distances = [euclidean_distance(c, q) for c in candidates]
            scores = [similarity_score(d) for d in distances]
            self.assertEqual(int(np.argmax(scores)), int(np.argmin(distances)))


class TestAsFeatureVector(unittest.TestCase):
    def test_validation(self):
        self.assertEqual(as_feature_vector([1.0, 2.0], dim=2).shape, (2,))
        with self.assertRaises(DataFormatError):
            as_feature_vector([])
        with self.assertRaises(DataFormatError):
            as_feature_vector([[1.0]])
        with self.assertRaises(DataFormatError):
            as_feature_vector([1.0, math.nan])
        with self.assertRaises(DimensionMismatchError):
            as_feature_vector([1.0, 2.0], dim=3)


if __name__ == "__main__":
    unittest.main()
