"""Coverage-at-precision evaluation.

Predictions are ranked by confidence score; a threshold t answers every query whose score
is >= t. With M answered queries of which C are correct among N total, precision is C/M
and coverage is M/N. Scores tied at a threshold enter or leave together.
"""

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError, UsageError

logger = get_logger(__name__)

DEFAULT_PRECISIONS: tuple[float, ...] = (0.99, 0.97, 0.95, 0.90)
SUBSETS = ("base", "novel")
NO_THRESHOLD = math.inf


@dataclass(frozen=True)
class LabeledPrediction:
    query_id: str
    predicted_person: str
    true_person: str
    score: float

    @property
    def correct(self) -> bool:
        return self.predicted_person == self.true_person


@dataclass(frozen=True)
class PrecisionCoveragePoint:
    threshold: float
    precision: float
    coverage: float


@dataclass(frozen=True)
class SubsetReport:
    subset: str
    queries: int
    answered: int
    precision: float
    coverage: dict[float, float] = field(default_factory=dict)


def _ranked(preds: Sequence[LabeledPrediction]) -> list[LabeledPrediction]:
    if not preds:
        raise DataFormatError("cannot evaluate an empty prediction list")
    return sorted(preds, key=lambda p: (-p.score, p.query_id))


def _total(preds: Sequence[LabeledPrediction], total: int | None) -> int:
    if total is None:
        return len(preds)
    if total < len(preds):
        raise DataFormatError(f"{len(preds)} predictions for only {total} queries")
    return total


def precision_coverage_curve(
    preds: Sequence[LabeledPrediction], total: int | None = None
) -> list[PrecisionCoveragePoint]:
    """One point per distinct score. `total` counts unanswered queries too; it defaults
    to the number of predictions."""
    ranked = _ranked(preds)
    total = _total(ranked, total)
    points = []
    answered = correct = 0
    for position, pred in enumerate(ranked):
        answered += 1
        correct += pred.correct
        last_of_score = (
            position + 1 == len(ranked) or ranked[position + 1].score != pred.score
        )
        if last_of_score:
            points.append(
                PrecisionCoveragePoint(
                    threshold=pred.score,
                    precision=correct / answered,
                    coverage=answered / total,
                )
            )
    return points


def coverage_at_precision(
    preds: Sequence[LabeledPrediction], precision: float, total: int | None = None
) -> tuple[float, float]:
    """Maximum coverage over thresholds whose precision reaches `precision`.

    Returns (coverage, threshold), or (0.0, inf) when no threshold qualifies.
    """
    if not 0.0 < precision <= 1.0:
        raise UsageError(f"target precision must be within (0, 1], got {precision}")
    best = (0.0, NO_THRESHOLD)
    for point in precision_coverage_curve(preds, total):
        if point.precision >= precision and point.coverage > best[0]:
            best = (point.coverage, point.threshold)
    return best


def overall_precision(preds: Sequence[LabeledPrediction]) -> float:
    if not preds:
        raise DataFormatError("cannot evaluate an empty prediction list")
    return sum(p.correct for p in preds) / len(preds)


def split_report(
    preds: Sequence[LabeledPrediction],
    membership: Mapping[str, str],
    precisions: Sequence[float] = DEFAULT_PRECISIONS,
) -> list[SubsetReport]:
    """Coverage per target precision for all queries and for each non-empty subset.

    `membership` lists every query; those without a prediction count as unanswered.
    """
    sizes = dict.fromkeys(SUBSETS, 0)
    for query_id, subset in membership.items():
        if subset not in sizes:
            raise DataFormatError(
                f"query {query_id!r} has unknown subset {subset!r}, expected {SUBSETS}"
            )
        sizes[subset] += 1
    groups: dict[str, list[LabeledPrediction]] = {subset: [] for subset in SUBSETS}
    for pred in preds:
        subset = membership.get(pred.query_id)
        if subset is None:
            raise DataFormatError(f"query {pred.query_id!r} has no subset membership")
        groups[subset].append(pred)

    reports = []
    subsets = (("all", list(preds), len(membership)), *((s, groups[s], sizes[s]) for s in SUBSETS))
    for name, subset_preds, size in subsets:
        if size == 0:
            continue
        if not subset_preds:
            reports.append(SubsetReport(name, size, 0, 0.0, dict.fromkeys(precisions, 0.0)))
            continue
        reports.append(
            SubsetReport(
                subset=name,
                queries=size,
                answered=len(subset_preds),
                precision=overall_precision(subset_preds),
                coverage={
                    p: coverage_at_precision(subset_preds, p, size)[0] for p in precisions
                },
            )
        )
    return reports


def coverage_monotone(
    preds: Sequence[LabeledPrediction], precisions: Iterable[float] = DEFAULT_PRECISIONS
) -> bool:
    ordered = sorted(precisions)
    coverages = [coverage_at_precision(preds, p)[0] for p in ordered]
    return all(a >= b for a, b in zip(coverages, coverages[1:]))


def write_predictions(
    path: str | Path, rows: Iterable[tuple[str, str, float]]
) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["query_image_id", "person_id", "score"])
        for query_id, person_id, score in rows:
            writer.writerow([query_id, person_id, f"{score:.6f}"])


def read_predictions(path: str | Path) -> list[tuple[str, str, float]]:
    rows = []
    for number, record in enumerate(_read_csv(path, ("query_image_id", "person_id", "score"))):
        try:
            score = float(record["score"])
        except ValueError:
            raise DataFormatError(f"{path}: row {number} has invalid score {record['score']!r}")
        rows.append((record["query_image_id"], record["person_id"], score))
    return rows


def write_truth(path: str | Path, rows: Iterable[tuple[str, str, str]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["query_id", "person_id", "subset"])
        writer.writerows(rows)


def read_truth(path: str | Path) -> dict[str, tuple[str, str]]:
    """query_id -> (person_id, subset)"""
    truth = {}
    for record in _read_csv(path, ("query_id", "person_id", "subset")):
        truth[record["query_id"]] = (record["person_id"], record["subset"])
    return truth


def write_curve(path: str | Path, points: Iterable[PrecisionCoveragePoint]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "precision", "coverage"])
        for point in points:
            writer.writerow(
                [f"{point.threshold:.6f}", f"{point.precision:.6f}", f"{point.coverage:.6f}"]
            )


def label_predictions(
    predictions: Iterable[tuple[str, str, float]], truth: Mapping[str, tuple[str, str]]
) -> list[LabeledPrediction]:
    labeled = []
    seen = set()
    for query_id, person_id, score in predictions:
        if query_id in seen:
            raise DataFormatError(f"query {query_id!r} has more than one prediction")
        seen.add(query_id)
        if query_id not in truth:
            raise DataFormatError(f"query {query_id!r} is missing from the truth file")
        labeled.append(LabeledPrediction(query_id, person_id, truth[query_id][0], score))
    return labeled


def _read_csv(path: str | Path, columns: Sequence[str]) -> list[dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"csv file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}")
        return list(reader)
