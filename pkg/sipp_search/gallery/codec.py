"""Little-endian binary primitives shared by the feature, gallery and index file formats."""

import struct

import numpy as np

from sipp_search.errors import DataFormatError

FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


def pack_header(magic: bytes, dim: int, count: int) -> bytes:
    return _HEADER.pack(magic, FORMAT_VERSION, dim, count)


def pack_u8(value: int) -> bytes:
    return _U8.pack(value)


def pack_u32(value: int) -> bytes:
    return _U32.pack(value)


def pack_u64(value: int) -> bytes:
    return _U64.pack(value)


def pack_f64(value: float) -> bytes:
    return _F64.pack(value)


def pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise DataFormatError(f"identifier too long for u16 length prefix: {value[:40]!r}")
    return _U16.pack(len(raw)) + raw


def pack_f32_array(values: np.ndarray) -> bytes:
    return np.asarray(values, dtype="<f4").tobytes()


def pack_f64_array(values: np.ndarray) -> bytes:
    return np.asarray(values, dtype="<f8").tobytes()


class BinaryReader:
    """Cursor over an in-memory buffer; every read failure names the byte offset."""

    def __init__(self, buffer: bytes, source: str = "<buffer>"):
        self._buffer = memoryview(buffer)
        self._offset = 0
        self._source = source

    @property
    def offset(self) -> int:
        return self._offset

    @property
    def remaining(self) -> int:
        return len(self._buffer) - self._offset

    def _take(self, size: int, what: str) -> memoryview:
        if self.remaining < size:
            raise DataFormatError(
                f"{self._source}: truncated at byte offset {self._offset} "
                f"reading {what} (need {size} bytes, {self.remaining} left)"
            )
        view = self._buffer[self._offset : self._offset + size]
        self._offset += size
        return view

    def header(self, magic: bytes) -> tuple[int, int]:
        start = self._offset
        found, version, dim, count = _HEADER.unpack(self._take(_HEADER.size, "header"))
        if found != magic:
            raise DataFormatError(
                f"{self._source}: bad magic at byte offset {start}: "
                f"expected {magic!r}, found {bytes(found)!r}"
            )
        if version != FORMAT_VERSION:
            raise DataFormatError(
                f"{self._source}: unsupported format version {version}, expected {FORMAT_VERSION}"
            )
        return dim, count

    def magic(self, size: int = 4) -> bytes:
        return bytes(self._take(size, "section magic"))

    def u8(self, what: str = "u8") -> int:
        return _U8.unpack(self._take(_U8.size, what))[0]

    def u16(self, what: str = "u16") -> int:
        return _U16.unpack(self._take(_U16.size, what))[0]

    def u32(self, what: str = "u32") -> int:
        return _U32.unpack(self._take(_U32.size, what))[0]

    def u64(self, what: str = "u64") -> int:
        return _U64.unpack(self._take(_U64.size, what))[0]

    def f64(self, what: str = "f64") -> float:
        return _F64.unpack(self._take(_F64.size, what))[0]

    def string(self, what: str = "string") -> str:
        length = self.u16(f"{what} length")
        raw = self._take(length, what)
        try:
            return bytes(raw).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataFormatError(
                f"{self._source}: invalid UTF-8 in {what} before byte offset {self._offset}: {e}"
            )

    def f32_array(self, count: int, what: str = "vector") -> np.ndarray:
        raw = self._take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)

    def f64_array(self, count: int, what: str = "array") -> np.ndarray:
        raw = self._take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    def u32_array(self, count: int, what: str = "indices") -> np.ndarray:
        raw = self._take(4 * count, what)
        return np.frombuffer(raw, dtype="<u4").astype(np.int64)
