"""Optional `SIPL` section appended to gallery files.

Layout: magic `SIPL`, num_tables u32, hashes_per_table u32, bucket_width f64,
probes_per_table u32, seed u64, dim u32; per table: k*dim f64 projections, k f64
offsets, bucket count u64, then per bucket: key u64, size u32, size u32 entry rows.
"""

import numpy as np

from sipp_search.errors import DataFormatError, DimensionMismatchError
from sipp_search.gallery import codec
from sipp_search.gallery.types import Gallery
from sipp_search.lsh.index import LshIndex, LshTable
from sipp_search.lsh.params import LshParams

INDEX_MAGIC = b"SIPL"


def encode_index(index: LshIndex) -> bytes:
    params = index.params
    chunks = [
        INDEX_MAGIC,
        codec.pack_u32(params.num_tables),
        codec.pack_u32(params.hashes_per_table),
        codec.pack_f64(params.bucket_width),
        codec.pack_u32(params.probes_per_table),
        codec.pack_u64(params.seed),
        codec.pack_u32(index.space.dim),
    ]
    for table in index.tables:
        chunks.append(codec.pack_f64_array(table.projections))
        chunks.append(codec.pack_f64_array(table.offsets))
        chunks.append(codec.pack_u64(len(table.buckets)))
        for key, rows in table.buckets.items():
            chunks.append(codec.pack_u64(key))
            chunks.append(codec.pack_u32(rows.size))
            chunks.append(np.asarray(rows, dtype="<u4").tobytes())
    return b"".join(chunks)


def decode_index(reader: codec.BinaryReader, gallery: Gallery) -> LshIndex:
    """Read an index section whose magic has already been consumed."""
    params = LshParams(
        num_tables=reader.u32("num_tables"),
        hashes_per_table=reader.u32("hashes_per_table"),
        bucket_width=reader.f64("bucket_width"),
        probes_per_table=reader.u32("probes_per_table"),
        seed=reader.u64("seed"),
    )
    dim = reader.u32("index dim")
    if dim != gallery.dim:
        raise DimensionMismatchError(gallery.dim, dim, context="lsh index")
    k = params.hashes_per_table
    tables = []
    for number in range(params.num_tables):
        projections = reader.f64_array(k * dim, f"table {number} projections")
        offsets = reader.f64_array(k, f"table {number} offsets")
        buckets: dict[int, np.ndarray] = {}
        indexed = 0
        for _ in range(reader.u64(f"table {number} bucket count")):
            key = reader.u64(f"table {number} bucket key")
            size = reader.u32(f"table {number} bucket size")
            rows = reader.u32_array(size, f"table {number} bucket rows")
            if rows.size and rows.max() >= len(gallery):
                raise DataFormatError(
                    f"table {number} references entry {int(rows.max())} "
                    f"beyond gallery size {len(gallery)} (byte offset {reader.offset})"
                )
            buckets[key] = rows
            indexed += size
        if indexed != len(gallery):
            raise DataFormatError(
                f"table {number} indexes {indexed} entries, gallery has {len(gallery)}"
            )
        tables.append(LshTable(projections.reshape(k, dim), offsets, buckets))
    return LshIndex(params, tables, gallery.flat_space)
