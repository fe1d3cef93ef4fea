from collections.abc import Sequence

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError, DimensionMismatchError
from sipp_search.gallery.types import VECTOR_DTYPE, Gallery, GalleryEntry, PersonMean

logger = get_logger(__name__)


def compute_person_mean(entries: Sequence[GalleryEntry]) -> PersonMean:
    """Arithmetic mean over every vector of one person, originals and augmented alike."""
    if not entries:
        raise DataFormatError("cannot compute a person mean from an empty list")
    person_id = entries[0].person_id
    dim = entries[0].vector.shape[0]
    for entry in entries[1:]:
        if entry.person_id != person_id:
            raise DataFormatError(
                f"mixed person ids in mean computation: {person_id!r} and {entry.person_id!r}"
            )
        if entry.vector.shape[0] != dim:
            raise DimensionMismatchError(
                dim, entry.vector.shape[0], context=f"entry {entry.key}"
            )
    stacked = np.stack([entry.vector for entry in entries]).astype(np.float64)
    mean = stacked.mean(axis=0).astype(VECTOR_DTYPE)
    return PersonMean(person_id=person_id, mean=mean, count=len(entries))


def _group_by_person(entries: Sequence[GalleryEntry]) -> dict[str, list[GalleryEntry]]:
    groups: dict[str, list[GalleryEntry]] = {}
    for entry in entries:
        groups.setdefault(entry.person_id, []).append(entry)
    return groups


def compute_means(entries: Sequence[GalleryEntry]) -> list[PersonMean]:
    groups = _group_by_person(entries)
    return [compute_person_mean(groups[person_id]) for person_id in sorted(groups)]


def build_gallery(
    base: Sequence[GalleryEntry],
    novel: Sequence[GalleryEntry],
    dim: int | None = None,
) -> Gallery:
    entries = list(base) + list(novel)
    if dim is None:
        if not entries:
            raise DataFormatError("cannot infer gallery dim from empty inputs")
        dim = entries[0].vector.shape[0]
    for entry in entries:
        if entry.vector.shape[0] != dim:
            raise DimensionMismatchError(
                dim, entry.vector.shape[0], context=f"entry {entry.key}"
            )

    collisions = {e.person_id for e in base} & {e.person_id for e in novel}
    if collisions:
        raise DataFormatError(
            f"person ids present in both base and novel inputs: {sorted(collisions)[:10]}"
        )
    seen: set[tuple[str, str]] = set()
    for entry in entries:
        if entry.key in seen:
            raise DataFormatError(f"duplicate (person_id, image_id) {entry.key}")
        seen.add(entry.key)

    gallery = Gallery(dim=dim, entries=tuple(entries), means=tuple(compute_means(entries)))
    logger.info(
        f"built gallery: {len(gallery.entries)} entries, {len(gallery.means)} persons, dim {dim}"
    )
    return gallery


def means_consistent(gallery: Gallery, rtol: float = 1e-5) -> bool:
    recomputed = compute_means(gallery.entries)
    if len(recomputed) != len(gallery.means):
        return False
    stored = {mean.person_id: mean for mean in gallery.means}
    for mean in recomputed:
        other = stored.get(mean.person_id)
        if other is None or other.count != mean.count:
            return False
        if not np.allclose(other.mean, mean.mean, rtol=rtol, atol=rtol):
            return False
    return True
