"""Calibration of the synthetic label noise.

The base0 baseline only separates the strategies when its coverage sits well inside
(0, 1). `calibrate_outlier_sigma` bisects `outlier_sigma` with pilot runs on the same
seed until base0 coverage at the target precision lands near the target. Closer
outliers steal more novel queries, so coverage grows with `outlier_sigma`.
"""

from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import ConfigError
from sipp_search.evaluation import coverage_at_precision, label_predictions
from sipp_search.gallery.builder import build_gallery
from sipp_search.search.strategies import search_brute_many
from sipp_search.synth import SynthConfig, generate_data

logger = get_logger(__name__)

DEFAULT_TARGET_COVERAGE = 0.25
DEFAULT_COVERAGE_TOLERANCE = 0.05
MAX_CALIBRATION_STEPS = 14
# search range of outlier_sigma as multiples of intra_sigma
SIGMA_RANGE = (1.0, 2.5)


@dataclass(frozen=True)
class CalibrationResult:
    outlier_sigma: float
    coverage: float
    steps: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def pilot_coverage(config: SynthConfig, precision: float, threads: int | None = None) -> float:
    """base0 coverage at `precision` on the data `config` generates."""
    data = generate_data(config)
    # base0 never looks at augmented vectors
    gallery = build_gallery(data.base, data.novel_original, dim=config.dim)
    queries = np.stack([e.vector for e in data.queries])
    results = search_brute_many(gallery, queries, include_augmented=False, threads=threads)
    rows = [(q.image_id, r.person_id, r.score) for q, r in zip(data.queries, results)]
    truth = {query_id: (person_id, subset) for query_id, person_id, subset in data.truth}
    return coverage_at_precision(label_predictions(rows, truth), precision, len(truth))[0]


def calibrate_outlier_sigma(
    config: SynthConfig,
    precision: float,
    target: float = DEFAULT_TARGET_COVERAGE,
    tolerance: float = DEFAULT_COVERAGE_TOLERANCE,
    max_steps: int = MAX_CALIBRATION_STEPS,
    threads: int | None = None,
) -> CalibrationResult:
    """Bisect outlier_sigma within SIGMA_RANGE x intra_sigma.

    Stops at the first pilot within `tolerance` of `target`, otherwise returns the
    closest pilot after `max_steps`.
    """
    if config.label_noise <= 0:
        raise ConfigError("outlier_sigma calibration needs label_noise > 0")
    if not 0.0 < target < 1.0:
        raise ConfigError(f"target coverage must be within (0, 1), got {target}")
    if max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {max_steps}")

    low, high = (factor * config.intra_sigma for factor in SIGMA_RANGE)
    best: CalibrationResult | None = None
    steps = 0
    while steps < max_steps:
        steps += 1
        sigma = (low + high) / 2
        coverage = pilot_coverage(replace(config, outlier_sigma=sigma), precision, threads)
        logger.debug(f"calibration step {steps}: outlier_sigma {sigma:.4f} -> coverage {coverage:.4f}")
        if best is None or abs(coverage - target) < abs(best.coverage - target):
            best = CalibrationResult(sigma, coverage, steps)
        if abs(coverage - target) <= tolerance:
            break
        if coverage < target:
            low = sigma
        else:
            high = sigma

    best = replace(best, steps=steps)
    if abs(best.coverage - target) > tolerance:
        logger.warning(
            f"outlier_sigma calibration missed base0 coverage {target} +- {tolerance}: "
            f"best {best.coverage:.4f} at {best.outlier_sigma:.4f}"
        )
    logger.info(
        f"calibrated outlier_sigma {best.outlier_sigma:.4f}: base0 coverage {best.coverage:.4f} "
        f"at precision {precision} after {steps} pilot runs"
    )
    return best
