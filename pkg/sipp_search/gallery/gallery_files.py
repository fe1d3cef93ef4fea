"""Reader and writer for `SIPG` gallery files.

Layout: header (magic `SIPG`, version, dim, entry count) and entry records exactly as in
feature files, then a means section (count u64; per person: person_id, vector count
u32, dim float32 values) and optionally an LSH index section starting with `SIPL`.
"""

from collections import Counter
from pathlib import Path

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError
from sipp_search.gallery import codec
from sipp_search.gallery.feature_files import decode_entries, encode_entry
from sipp_search.gallery.types import Gallery, GalleryEntry, PersonMean
from sipp_search.lsh.index import LshIndex
from sipp_search.lsh.persistence import INDEX_MAGIC, decode_index, encode_index

logger = get_logger(__name__)

GALLERY_MAGIC = b"SIPG"


def encode_gallery(gallery: Gallery, index: LshIndex | None = None) -> bytes:
    chunks = [codec.pack_header(GALLERY_MAGIC, gallery.dim, len(gallery.entries))]
    chunks.extend(encode_entry(entry) for entry in gallery.entries)
    chunks.append(codec.pack_u64(len(gallery.means)))
    for mean in gallery.means:
        chunks.append(codec.pack_str(mean.person_id))
        chunks.append(codec.pack_u32(mean.count))
        chunks.append(codec.pack_f32_array(mean.mean))
    if index is not None:
        chunks.append(encode_index(index))
    return b"".join(chunks)


def save_gallery(
    gallery: Gallery, path: str | Path, index: LshIndex | None = None
) -> None:
    Path(path).write_bytes(encode_gallery(gallery, index=index))
    logger.debug(
        f"saved gallery with {len(gallery.entries)} entries to {path}"
        + (" including LSH index" if index is not None else "")
    )


def _check_means(path: Path, entries: list[GalleryEntry], means: list[PersonMean]) -> None:
    """Every person in the entries has exactly one mean covering all of its vectors."""
    counts = Counter(entry.person_id for entry in entries)
    seen = set()
    for mean in means:
        if mean.person_id in seen:
            raise DataFormatError(f"{path}: person {mean.person_id!r} has more than one mean")
        seen.add(mean.person_id)
        if mean.person_id not in counts:
            raise DataFormatError(f"{path}: mean of {mean.person_id!r} has no gallery entries")
        if mean.count != counts[mean.person_id]:
            raise DataFormatError(
                f"{path}: mean of {mean.person_id!r} covers {mean.count} vectors, "
                f"the gallery has {counts[mean.person_id]}"
            )
    missing = sorted(set(counts) - seen)
    if missing:
        raise DataFormatError(f"{path}: persons without a mean: {missing[:10]}")


def read_gallery_file(path: str | Path) -> tuple[Gallery, LshIndex | None]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"gallery file not found: {path}")
    reader = codec.BinaryReader(path.read_bytes(), source=str(path))
    dim, count = reader.header(GALLERY_MAGIC)
    entries = decode_entries(reader, dim, count, str(path))
    means = []
    for number in range(reader.u64("means count")):
        person_id = reader.string(f"mean {number} person_id")
        vectors = reader.u32(f"mean {number} count")
        if vectors < 1:
            raise DataFormatError(
                f"{path}: mean {number} of {person_id!r} covers zero vectors "
                f"(byte offset {reader.offset})"
            )
        means.append(PersonMean(person_id, reader.f32_array(dim, f"mean {number}"), vectors))
    _check_means(path, entries, means)
    gallery = Gallery(dim=dim, entries=tuple(entries), means=tuple(means))

    index = None
    if reader.remaining:
        start = reader.offset
        magic = reader.magic()
        if magic != INDEX_MAGIC:
            raise DataFormatError(
                f"{path}: unexpected section magic {magic!r} at byte offset {start}"
            )
        index = decode_index(reader, gallery)
        if reader.remaining:
            raise DataFormatError(
                f"{path}: {reader.remaining} trailing bytes after byte offset {reader.offset}"
            )
    logger.debug(
        f"loaded gallery {path}: {len(entries)} entries, {len(means)} means, "
        f"index {'present' if index is not None else 'absent'}"
    )
    return gallery, index


def load_gallery(path: str | Path) -> Gallery:
    return read_gallery_file(path)[0]


def load_index(path: str | Path) -> LshIndex | None:
    return read_gallery_file(path)[1]
