import math
import os
import random
import shutil
import tempfile
import unittest

from sipp_search.errors import DataFormatError, UsageError
from sipp_search.evaluation import (
    DEFAULT_PRECISIONS,
    NO_THRESHOLD,
    LabeledPrediction,
    coverage_at_precision,
    coverage_monotone,
    label_predictions,
    overall_precision,
    precision_coverage_curve,
    read_predictions,
    read_truth,
    split_report,
    write_curve,
    write_predictions,
    write_truth,
)

# (correct, score) for the ten ranked rows of the worked example
WORKED_EXAMPLE = [
    (True, 0.92),
    (True, 0.91),
    (True, 0.90),
    (True, 0.89),
    (True, 0.88),
    (False, 0.87),
    (True, 0.86),
    (False, 0.85),
    (True, 0.84),
    (False, 0.83),
]


def labeled(rows) -> list[LabeledPrediction]:
    return [
        LabeledPrediction(f"q{n}", "p" if correct else "x", "p", score)
        for n, (correct, score) in enumerate(rows)
    ]


def oracle(preds: list[LabeledPrediction], precision: float) -> tuple[float, float]:
    best = (0.0, NO_THRESHOLD)
    for threshold in sorted({p.score for p in preds}, reverse=True):
        answered = [p for p in preds if p.score >= threshold]
        correct = sum(p.correct for p in answered)
        if correct / len(answered) >= precision:
            coverage = len(answered) / len(preds)
            if coverage > best[0]:
                best = (coverage, threshold)
    return best


class TestCoverageAtPrecision(unittest.TestCase):
    """Test cases for coverage_at_precision."""

    def test_worked_example_full_precision(self):
        self.assertEqual(coverage_at_precision(labeled(WORKED_EXAMPLE), 1.0), (0.5, 0.88))

    def test_worked_example_lower_precision(self):
        # 0.86 answers 7 with 6 correct; 0.84 answers 9 with 7 correct
        preds = labeled(WORKED_EXAMPLE)
        self.assertEqual(coverage_at_precision(preds, 0.85), (0.7, 0.86))
        self.assertEqual(coverage_at_precision(preds, 0.75), (0.9, 0.84))

    def test_all_correct(self):
        preds = labeled([(True, 0.9), (True, 0.4), (True, 0.7)])
        for precision in DEFAULT_PRECISIONS + (1.0,):
            self.assertEqual(coverage_at_precision(preds, precision), (1.0, 0.4))

    def test_nothing_qualifies(self):
        preds = labeled([(False, 0.9), (True, 0.8)])
        self.assertEqual(coverage_at_precision(preds, 0.99), (0.0, NO_THRESHOLD))
        self.assertTrue(math.isinf(NO_THRESHOLD))

    def test_tied_scores_enter_together(self):
        preds = labeled([(True, 0.9), (True, 0.8), (False, 0.8)])
        self.assertEqual(coverage_at_precision(preds, 1.0), (1 / 3, 0.9))

    def test_invalid_inputs(self):
        with self.assertRaises(DataFormatError):
            coverage_at_precision([], 0.9)
        for precision in (0.0, -0.1, 1.01):
            with self.assertRaises(UsageError):
                coverage_at_precision(labeled(WORKED_EXAMPLE), precision)

    def test_matches_exhaustive_oracle(self):
        rng = random.Random(7)
        for _ in range(500):
            size = rng.randint(1, 200)
            preds = [
                LabeledPrediction(
                    f"q{n}",
                    "p" if rng.random() < 0.8 else "x",
                    "p",
                    # coarse scores so ties are common
                    rng.randint(1, 40) / 40,
                )
                for n in range(size)
            ]
            for precision in (0.5, 0.8) + DEFAULT_PRECISIONS + (1.0,):
                self.assertEqual(
                    coverage_at_precision(preds, precision), oracle(preds, precision)
                )

    def test_monotone_in_precision(self):
        rng = random.Random(11)
        for _ in range(100):
            preds = [
                LabeledPrediction(f"q{n}", rng.choice("pq"), "p", rng.random())
                for n in range(50)
            ]
            self.assertTrue(coverage_monotone(preds))


class TestPrecisionCoverageCurve(unittest.TestCase):
    """Test cases for precision_coverage_curve."""

    def test_single_prediction(self):
        curve = precision_coverage_curve(labeled([(True, 0.7)]))
        self.assertEqual(len(curve), 1)
        self.assertEqual((curve[0].precision, curve[0].coverage), (1.0, 1.0))

    def test_two_predictions(self):
        curve = precision_coverage_curve(labeled([(False, 0.8), (True, 0.9)]))
        self.assertEqual(
            [(p.threshold, p.precision, p.coverage) for p in curve],
            [(0.9, 1.0, 0.5), (0.8, 0.5, 1.0)],
        )

    def test_worked_example_point(self):
        curve = precision_coverage_curve(labeled(WORKED_EXAMPLE))
        self.assertEqual(len(curve), 10)
        point = next(p for p in curve if p.threshold == 0.88)
        self.assertEqual((point.precision, point.coverage), (1.0, 0.5))

    def test_one_point_per_distinct_score(self):
        preds = labeled([(True, 0.5), (False, 0.5), (True, 0.9), (True, 0.1), (False, 0.9)])
        curve = precision_coverage_curve(preds)
        self.assertEqual([p.threshold for p in curve], [0.9, 0.5, 0.1])
        coverages = [p.coverage for p in curve]
        self.assertEqual(coverages, sorted(set(coverages)))
        self.assertEqual(coverages[-1], 1.0)

    def test_independent_of_input_order(self):
        rng = random.Random(3)
        preds = [
            LabeledPrediction(f"q{n}", rng.choice("pq"), "p", rng.randint(1, 10) / 10)
            for n in range(60)
        ]
        shuffled = list(preds)
        rng.shuffle(shuffled)
        self.assertEqual(precision_coverage_curve(preds), precision_coverage_curve(shuffled))

    def test_empty(self):
        with self.assertRaises(DataFormatError):
            precision_coverage_curve([])

    def test_total_counts_unanswered_queries(self):
        curve = precision_coverage_curve(labeled([(False, 0.8), (True, 0.9)]), total=4)
        self.assertEqual([p.coverage for p in curve], [0.25, 0.5])
        with self.assertRaises(DataFormatError):
            precision_coverage_curve(labeled([(True, 0.9), (True, 0.8)]), total=1)


class TestSplitReport(unittest.TestCase):
    """Test cases for split_report."""

    def test_all_novel_matches_all_row(self):
        preds = labeled(WORKED_EXAMPLE)
        reports = split_report(preds, {p.query_id: "novel" for p in preds})
        self.assertEqual([r.subset for r in reports], ["all", "novel"])
        self.assertEqual(reports[0].coverage, reports[1].coverage)
        self.assertEqual(reports[0].precision, reports[1].precision)
        self.assertEqual(reports[1].queries, 10)

    def test_identical_halves(self):
        rows = [(True, 0.9), (False, 0.8), (True, 0.7)]
        preds = [
            LabeledPrediction(f"{subset}{n}", "p" if correct else "x", "p", score)
            for subset in ("b", "n")
            for n, (correct, score) in enumerate(rows)
        ]
        membership = {p.query_id: "base" if p.query_id[0] == "b" else "novel" for p in preds}
        reports = {r.subset: r for r in split_report(preds, membership)}
        self.assertEqual(reports["base"].coverage, reports["novel"].coverage)
        self.assertEqual(reports["base"].precision, reports["novel"].precision)

    def test_subset_matches_filtered_list(self):
        rng = random.Random(5)
        preds = [
            LabeledPrediction(f"q{n}", rng.choice("pqr"), "p", rng.random()) for n in range(300)
        ]
        membership = {p.query_id: rng.choice(("base", "novel")) for p in preds}
        novel = [p for p in preds if membership[p.query_id] == "novel"]
        report = next(r for r in split_report(preds, membership) if r.subset == "novel")
        for precision in DEFAULT_PRECISIONS:
            self.assertEqual(report.coverage[precision], coverage_at_precision(novel, precision)[0])
        self.assertEqual(report.precision, overall_precision(novel))

    def test_unanswered_truth_queries(self):
        """Test truth queries without a prediction stay in the coverage denominator."""
        truth = {f"q{n}": (person, "novel") for n, person in enumerate("abcd", start=1)}
        preds = label_predictions([("q1", "a", 0.9), ("q2", "b", 0.8)], truth)
        self.assertEqual(coverage_at_precision(preds, 0.99, total=len(truth)), (0.5, 0.8))
        reports = split_report(preds, {q: subset for q, (_, subset) in truth.items()}, (0.99,))
        self.assertEqual([r.subset for r in reports], ["all", "novel"])
        self.assertEqual((reports[0].queries, reports[0].answered), (4, 2))
        self.assertEqual(reports[0].precision, 1.0)
        self.assertEqual(reports[0].coverage[0.99], 0.5)

    def test_subset_without_predictions(self):
        preds = [LabeledPrediction("q1", "a", "a", 0.9)]
        reports = {r.subset: r for r in split_report(preds, {"q1": "base", "q2": "novel"}, (0.99,))}
        self.assertEqual(reports["all"].coverage[0.99], 0.5)
        self.assertEqual((reports["novel"].queries, reports["novel"].answered), (1, 0))
        self.assertEqual(reports["novel"].coverage[0.99], 0.0)

    def test_missing_membership(self):
        with self.assertRaises(DataFormatError):
            split_report(labeled(WORKED_EXAMPLE), {"q0": "base"})

    def test_unknown_subset(self):
        preds = labeled([(True, 0.5)])
        with self.assertRaises(DataFormatError):
            split_report(preds, {"q0": "other"})


class TestCsvFiles(unittest.TestCase):
    """Test cases for prediction, truth and curve CSV files."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_predictions_round_trip(self):
        path = os.path.join(self.temp_dir, "predictions.csv")
        write_predictions(path, [("q1", "alice", 0.9), ("q2", "bob", 1 / 3)])
        with open(path) as f:
            self.assertEqual(
                f.read().splitlines(),
                ["query_image_id,person_id,score", "q1,alice,0.900000", "q2,bob,0.333333"],
            )
        self.assertEqual(read_predictions(path), [("q1", "alice", 0.9), ("q2", "bob", 0.333333)])

    def test_truth_round_trip(self):
        path = os.path.join(self.temp_dir, "truth.csv")
        write_truth(path, [("q1", "alice", "base"), ("q2", "bob", "novel")])
        self.assertEqual(read_truth(path), {"q1": ("alice", "base"), "q2": ("bob", "novel")})

    def test_curve_columns(self):
        path = os.path.join(self.temp_dir, "curve.csv")
        write_curve(path, precision_coverage_curve(labeled([(False, 0.8), (True, 0.9)])))
        with open(path) as f:
            self.assertEqual(
                f.read().splitlines(),
                [
                    "threshold,precision,coverage",
                    "0.900000,1.000000,0.500000",
                    "0.800000,0.500000,1.000000",
                ],
            )

    def test_invalid_score(self):
        path = os.path.join(self.temp_dir, "predictions.csv")
        with open(path, "w") as f:
            f.write("query_image_id,person_id,score\nq1,alice,high\n")
        with self.assertRaises(DataFormatError):
            read_predictions(path)

    def test_missing_column(self):
        path = os.path.join(self.temp_dir, "truth.csv")
        with open(path, "w") as f:
            f.write("query_id,person_id\nq1,alice\n")
        with self.assertRaises(DataFormatError):
            read_truth(path)

    def test_missing_file(self):
        with self.assertRaises(DataFormatError):
            read_predictions(os.path.join(self.temp_dir, "absent.csv"))


class TestLabelPredictions(unittest.TestCase):
    """Test cases for label_predictions."""

    def test_labels(self):
        preds = label_predictions(
            [("q1", "alice", 0.9), ("q2", "carol", 0.4)],
            {"q1": ("alice", "base"), "q2": ("bob", "novel")},
        )
        self.assertEqual([p.correct for p in preds], [True, False])
        self.assertEqual(preds[1].true_person, "bob")

    def test_duplicate_query(self):
        with self.assertRaises(DataFormatError):
            label_predictions(
                [("q1", "alice", 0.9), ("q1", "bob", 0.4)], {"q1": ("alice", "base")}
            )

    def test_unknown_query(self):
        with self.assertRaises(DataFormatError):
            label_predictions([("q9", "alice", 0.9)], {"q1": ("alice", "base")})


if __name__ == "__main__":
    unittest.main()
