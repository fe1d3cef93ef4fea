"""Reader and writer for `SIPF` feature files.

Layout: magic `SIPF`, version u32, dim u32, count u64, then `count` records of
person_id (u16 length + UTF-8), image_id (u16 length + UTF-8), source u8 and
dim little-endian float32 values.
"""

from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError, DimensionMismatchError
from sipp_search.gallery import codec
from sipp_search.gallery.types import GalleryEntry, Source

logger = get_logger(__name__)

FEATURE_MAGIC = b"SIPF"


@dataclass(frozen=True)
class FeatureFile:
    dim: int
    entries: list[GalleryEntry]


def encode_entry(entry: GalleryEntry) -> bytes:
    return b"".join(
        (
            codec.pack_str(entry.person_id),
            codec.pack_str(entry.image_id),
            codec.pack_u8(int(entry.source)),
            codec.pack_f32_array(entry.vector),
        )
    )


def decode_entries(
    reader: codec.BinaryReader, dim: int, count: int, source_name: str
) -> list[GalleryEntry]:
    entries: list[GalleryEntry] = []
    seen: set[tuple[str, str]] = set()
    for index in range(count):
        person_id = reader.string(f"record {index} person_id")
        image_id = reader.string(f"record {index} image_id")
        raw_source = reader.u8(f"record {index} source")
        try:
            source = Source(raw_source)
        except ValueError:
            raise DataFormatError(
                f"{source_name}: record {index} has unknown source tag {raw_source}"
            )
        vector = reader.f32_array(dim, f"record {index} vector")
        if not np.all(np.isfinite(vector)):
            raise DataFormatError(
                f"{source_name}: record {index} ({person_id!r}, {image_id!r}) has non-finite values"
            )
        key = (person_id, image_id)
        if key in seen:
            raise DataFormatError(
                f"{source_name}: record {index} duplicates (person_id, image_id) {key}"
            )
        seen.add(key)
        entries.append(GalleryEntry(person_id, image_id, source, vector))
    return entries


def read_feature_file(path: str | Path, dim: int | None = None) -> FeatureFile:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"feature file not found: {path}")
    reader = codec.BinaryReader(path.read_bytes(), source=str(path))
    file_dim, count = reader.header(FEATURE_MAGIC)
    if file_dim == 0:
        raise DataFormatError(f"{path}: header declares dim 0")
    if dim is not None and file_dim != dim:
        raise DimensionMismatchError(dim, file_dim, context=str(path))
    entries = decode_entries(reader, file_dim, count, str(path))
    if reader.remaining:
        raise DataFormatError(
            f"{path}: {reader.remaining} trailing bytes after byte offset {reader.offset}"
        )
    logger.debug(f"read {len(entries)} feature records of dim {file_dim} from {path}")
    return FeatureFile(dim=file_dim, entries=entries)


def load_features(path: str | Path, dim: int | None = None) -> list[GalleryEntry]:
    return read_feature_file(path, dim=dim).entries


def write_features(
    path: str | Path, entries: Iterable[GalleryEntry], dim: int
) -> None:
    entries = list(entries)
    chunks = [codec.pack_header(FEATURE_MAGIC, dim, len(entries))]
    for index, entry in enumerate(entries):
        if entry.vector.shape[0] != dim:
            raise DimensionMismatchError(
                dim, entry.vector.shape[0], context=f"record {index}"
            )
        chunks.append(encode_entry(entry))
    Path(path).write_bytes(b"".join(chunks))
    logger.debug(f"wrote {len(entries)} feature records of dim {dim} to {path}")
