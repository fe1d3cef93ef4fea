"""Seeded synthetic base/novel benchmark.

Person centers are isotropic Gaussian; base images and queries scatter around their
center with `intra_sigma`. A novel person has one original sample around its center
and `augment_count` augmented vectors scattered with `aug_sigma` around that original,
not around the center, so the augmented cloud is off-center like real SVD variants.

Sigmas are norm scales: a noise vector has per-coordinate standard deviation
sigma / sqrt(dim), so its expected norm is close to sigma whatever the dimension.

`label_noise` is the fraction of base images drawn around some other person's center
(base or novel) while keeping their own label, the way mislabeled crawled images sit
inside a foreign cluster. It is 0 by default. Those images scatter with `outlier_sigma`
rather than `intra_sigma`; `repro` calibrates it so the base0 baseline stays informative.

The default scale puts a query about 5.7 away from its own images, where the fusion
margin T=0.03 spans a distance band of about 1.3.
"""

import math
from dataclasses import asdict, dataclass, fields
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import ConfigError
from sipp_search.evaluation import write_truth
from sipp_search.gallery.feature_files import write_features
from sipp_search.gallery.types import GalleryEntry, Source

logger = get_logger(__name__)


class QueryPersons(StrEnum):
    ALL = "all"
    NOVEL = "novel"


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 128
    n_base_persons: int = 2000
    imgs_per_base: int = 20
    n_novel_persons: int = 100
    intra_sigma: float = 4.0
    inter_sigma: float = 8.0
    aug_sigma: float = 1.2
    outlier_sigma: float = 4.8
    queries_per_person: int = 20
    augment_count: int = 63
    label_noise: float = 0.0
    query_persons: QueryPersons = QueryPersons.ALL
    seed: int = 42

    def __post_init__(self):
        try:
            object.__setattr__(self, "query_persons", QueryPersons(self.query_persons))
        except ValueError:
            raise ConfigError(
                f"query_persons must be one of {[str(q) for q in QueryPersons]}, "
                f"got {self.query_persons!r}"
            )
        for name in (
            "dim",
            "n_base_persons",
            "imgs_per_base",
            "n_novel_persons",
            "queries_per_person",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.augment_count < 0:
            raise ConfigError(f"augment_count must be >= 0, got {self.augment_count}")
        if not 0 <= self.aug_sigma < self.intra_sigma < self.inter_sigma:
            raise ConfigError(
                "expected 0 <= aug_sigma < intra_sigma < inter_sigma, got "
                f"{self.aug_sigma}, {self.intra_sigma}, {self.inter_sigma}"
            )
        if self.outlier_sigma < 0:
            raise ConfigError(f"outlier_sigma must be >= 0, got {self.outlier_sigma}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError(f"label_noise must be within [0, 1), got {self.label_noise}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["query_persons"] = str(self.query_persons)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid synth config {data}: {e}")


@dataclass(frozen=True)
class SynthArtifacts:
    base: Path
    novel_original: Path
    novel_augmented: Path
    queries: Path
    truth: Path

    def paths(self) -> list[Path]:
        return [self.base, self.novel_original, self.novel_augmented, self.queries, self.truth]


@dataclass(frozen=True)
class SynthData:
    base: list[GalleryEntry]
    novel_original: list[GalleryEntry]
    novel_augmented: list[GalleryEntry]
    queries: list[GalleryEntry]
    truth: list[tuple[str, str, str]]


def base_person_id(number: int) -> str:
    return f"b{number:06d}"


def novel_person_id(number: int) -> str:
    return f"n{number:06d}"


def generate_data(config: SynthConfig) -> SynthData:
    rng = np.random.default_rng(config.seed)
    dim = config.dim
    scale = 1.0 / math.sqrt(dim)

    def noise(count: int, sigma: float) -> np.ndarray:
        return rng.standard_normal((count, dim)) * (sigma * scale)

    base_centers = noise(config.n_base_persons, config.inter_sigma)
    novel_centers = noise(config.n_novel_persons, config.inter_sigma)
    all_centers = np.concatenate([base_centers, novel_centers])

    base = []
    for number, center in enumerate(base_centers):
        person_id = base_person_id(number)
        anchors = np.repeat(center[None, :], config.imgs_per_base, axis=0)
        sigmas = np.full(config.imgs_per_base, config.intra_sigma)
        if config.label_noise > 0 and len(all_centers) > 1:
            flipped = rng.random(config.imgs_per_base) < config.label_noise
            # never the own center: shift the draw past it
            others = rng.integers(0, len(all_centers) - 1, size=config.imgs_per_base)
            others[others >= number] += 1
            anchors[flipped] = all_centers[others[flipped]]
            sigmas[flipped] = config.outlier_sigma
        # unit draws scaled per row: the random stream does not depend on outlier_sigma
        vectors = anchors + noise(config.imgs_per_base, 1.0) * sigmas[:, None]
        for image, vector in enumerate(vectors):
            base.append(GalleryEntry(person_id, f"{person_id}_{image:03d}", Source.BASE, vector))

    novel_original = []
    novel_augmented = []
    for number, center in enumerate(novel_centers):
        person_id = novel_person_id(number)
        original = center + noise(1, config.intra_sigma)[0]
        novel_original.append(
            GalleryEntry(person_id, f"{person_id}_orig", Source.NOVEL_ORIGINAL, original)
        )
        for image, vector in enumerate(
            original + noise(config.augment_count, config.aug_sigma), start=1
        ):
            novel_augmented.append(
                GalleryEntry(
                    person_id, f"{person_id}_aug{image:02d}", Source.NOVEL_AUGMENTED, vector
                )
            )

    queried: list[tuple[str, str, np.ndarray]] = []
    if config.query_persons == QueryPersons.ALL:
        queried.extend(
            (base_person_id(n), "base", c) for n, c in enumerate(base_centers)
        )
    queried.extend((novel_person_id(n), "novel", c) for n, c in enumerate(novel_centers))

    queries = []
    truth = []
    for person_id, subset, center in queried:
        for vector in center + noise(config.queries_per_person, config.intra_sigma):
            query_id = f"q{len(queries):07d}"
            queries.append(GalleryEntry("", query_id, Source.BASE, vector))
            truth.append((query_id, person_id, subset))

    return SynthData(base, novel_original, novel_augmented, queries, truth)


def generate(config: SynthConfig, out_dir: str | Path) -> SynthArtifacts:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = generate_data(config)
    artifacts = SynthArtifacts(
        base=out_dir / "base.sipf",
        novel_original=out_dir / "novel_original.sipf",
        novel_augmented=out_dir / "novel_augmented.sipf",
        queries=out_dir / "queries.sipf",
        truth=out_dir / "truth.csv",
    )
    write_features(artifacts.base, data.base, config.dim)
    write_features(artifacts.novel_original, data.novel_original, config.dim)
    write_features(artifacts.novel_augmented, data.novel_augmented, config.dim)
    write_features(artifacts.queries, data.queries, config.dim)
    write_truth(artifacts.truth, data.truth)
    logger.info(
        f"generated synthetic benchmark in {out_dir}: {len(data.base)} base, "
        f"{len(data.novel_original)} novel originals, {len(data.novel_augmented)} augmented, "
        f"{len(data.queries)} queries"
    )
    return artifacts
