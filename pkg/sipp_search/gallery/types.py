from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np

from sipp_search.errors import DataFormatError, DimensionMismatchError
from sipp_search.search.spaces import VectorSpace

VECTOR_DTYPE = np.float32


class Source(IntEnum):
    BASE = 0
    NOVEL_ORIGINAL = 1
    NOVEL_AUGMENTED = 2


@dataclass(frozen=True, eq=False)
class GalleryEntry:
    person_id: str
    image_id: str
    source: Source
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "source", Source(self.source))
        object.__setattr__(
            self, "vector", np.ascontiguousarray(self.vector, dtype=VECTOR_DTYPE)
        )

    @property
    def key(self) -> tuple[str, str]:
        return self.person_id, self.image_id

    def __eq__(self, other) -> bool:
        if not isinstance(other, GalleryEntry):
            return NotImplemented
        return (
            self.key == other.key
            and self.source == other.source
            and self.vector.tobytes() == other.vector.tobytes()
        )


@dataclass(frozen=True, eq=False)
class PersonMean:
    person_id: str
    mean: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise DataFormatError(
                f"person {self.person_id!r} mean must cover at least one vector"
            )
        object.__setattr__(
            self, "mean", np.ascontiguousarray(self.mean, dtype=VECTOR_DTYPE)
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PersonMean):
            return NotImplemented
        return (
            self.person_id == other.person_id
            and self.count == other.count
            and self.mean.tobytes() == other.mean.tobytes()
        )


@dataclass(frozen=True, eq=False)
class Gallery:
    """Flat per-image store plus one mean vector per person.

    Immutable after construction, array views are computed lazily and shared by searches.
    """

    dim: int
    entries: tuple[GalleryEntry, ...]
    means: tuple[PersonMean, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "means", tuple(self.means))
        for entry in self.entries:
            if entry.vector.shape[0] != self.dim:
                raise DimensionMismatchError(
                    self.dim, entry.vector.shape[0], context=f"entry {entry.key}"
                )
        for mean in self.means:
            if mean.mean.shape[0] != self.dim:
                raise DimensionMismatchError(
                    self.dim, mean.mean.shape[0], context=f"mean of {mean.person_id!r}"
                )

    @cached_property
    def vectors(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.dim), dtype=VECTOR_DTYPE)
        return np.stack([entry.vector for entry in self.entries])

    @cached_property
    def person_ids(self) -> tuple[str, ...]:
        return tuple(entry.person_id for entry in self.entries)

    @cached_property
    def sources(self) -> np.ndarray:
        return np.fromiter(
            (int(entry.source) for entry in self.entries),
            dtype=np.uint8,
            count=len(self.entries),
        )

    @cached_property
    def mean_vectors(self) -> np.ndarray:
        if not self.means:
            return np.zeros((0, self.dim), dtype=VECTOR_DTYPE)
        return np.stack([mean.mean for mean in self.means])

    @cached_property
    def mean_person_ids(self) -> tuple[str, ...]:
        return tuple(mean.person_id for mean in self.means)

    @cached_property
    def flat_space(self) -> VectorSpace:
        return VectorSpace(self.vectors, self.person_ids)

    @cached_property
    def original_space(self) -> tuple[VectorSpace, np.ndarray]:
        """Space over non-augmented entries, with the gallery row of each space row."""
        rows = np.flatnonzero(self.sources != Source.NOVEL_AUGMENTED)
        space = VectorSpace(self.vectors[rows], [self.person_ids[r] for r in rows])
        return space, rows

    @cached_property
    def mean_space(self) -> VectorSpace:
        return VectorSpace(self.mean_vectors, self.mean_person_ids)

    def mean_for(self, person_id: str) -> PersonMean | None:
        return next((m for m in self.means if m.person_id == person_id), None)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Gallery):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.entries == other.entries
            and self.means == other.means
        )
