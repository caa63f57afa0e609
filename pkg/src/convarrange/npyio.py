"""Reader/writer for the NPY/NPZ array interchange formats.

Deliberately strict: little-endian float32/float64, C order only. Anything
else is rejected rather than silently converted, so a checkpoint read back
from disk is guaranteed bit-identical to what was written. Reads accept
format versions 1.0 and 2.0; writes always emit 1.0 with the data section
aligned to a 64-byte boundary. NPZ archives are plain ZIP files; entries are
written uncompressed with a fixed timestamp so identical inputs produce
identical archive bytes.
"""

import ast
import io
import struct
import zipfile
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BadZip,
    FormatError,
    HeaderParse,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
)

MAGIC = b"\x93NUMPY"

_DESCR_TO_TAG = {"<f4": "f4", "<f8": "f8"}
_TAG_TO_NPDTYPE = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


@dataclass(eq=False)
class TensorRecord:
    """One named tensor: dtype tag ("f4" or "f8"), shape, flat C-order data."""

    name: str
    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        if self.dtype not in _TAG_TO_NPDTYPE:
            raise UnsupportedDtype(f"dtype tag {self.dtype!r} (want 'f4' or 'f8')")
        self.shape = tuple(int(d) for d in self.shape)
        if any(d < 0 for d in self.shape):
            raise ShapeMismatch(f"negative extent in shape {self.shape}")
        want = 1
        for d in self.shape:
            want *= d
        flat = np.asarray(self.data, dtype=_TAG_TO_NPDTYPE[self.dtype]).reshape(-1)
        if flat.size != want:
            raise ShapeMismatch(
                f"shape {self.shape} holds {want} elements, data has {flat.size}"
            )
        self.data = flat

    @classmethod
    def from_array(cls, name, array):
        arr = np.asarray(array)
        if arr.dtype == np.float32:
            tag = "f4"
        elif arr.dtype == np.float64:
            tag = "f8"
        else:
            raise UnsupportedDtype(f"array dtype {arr.dtype} (want float32/float64)")
        return cls(name=name, dtype=tag, shape=arr.shape, data=arr.reshape(-1))

    def as_array(self):
        return self.data.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


def read_npy(buf: bytes, name: str = "") -> TensorRecord:
    if len(buf) < 6 or buf[:6] != MAGIC:
        raise BadMagic("stream does not start with the NPY magic bytes")
    if len(buf) < 10:
        raise TruncatedPayload("stream ends inside the version/header-length fields")
    major, minor = buf[6], buf[7]
    if (major, minor) == (1, 0):
        (hlen,) = struct.unpack_from("<H", buf, 8)
        hstart = 10
    elif (major, minor) == (2, 0):
        if len(buf) < 12:
            raise TruncatedPayload("stream ends inside the version-2 header length")
        (hlen,) = struct.unpack_from("<I", buf, 8)
        hstart = 12
    else:
        raise HeaderParse(f"unsupported format version {major}.{minor}")
    hend = hstart + hlen
    if len(buf) < hend:
        raise TruncatedPayload("declared header length overruns the stream")
    header = buf[hstart:hend]
    if not header.endswith(b"\n"):
        raise HeaderParse("header is not newline-terminated")
    try:
        meta = ast.literal_eval(header.decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise HeaderParse(f"malformed header literal: {exc}") from None
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise HeaderParse(f"unexpected header structure: {meta!r}")

    descr = meta["descr"]
    if isinstance(descr, str) and descr.startswith(">"):
        raise UnsupportedDtype(f"big-endian descr {descr!r} is rejected")
    if descr not in _DESCR_TO_TAG:
        raise UnsupportedDtype(f"descr {descr!r} (only '<f4' and '<f8' are supported)")
    if meta["fortran_order"] is not False:
        raise HeaderParse("fortran_order must be False (column-major data rejected)")
    shape = meta["shape"]
    if not isinstance(shape, tuple) or not all(
        isinstance(d, int) and d >= 0 for d in shape
    ):
        raise HeaderParse(f"bad shape {shape!r}")

    dtype = np.dtype(descr)
    count = 1
    for d in shape:
        count *= d
    need = count * dtype.itemsize
    body = buf[hend : hend + need]
    if len(body) < need:
        raise TruncatedPayload(f"need {need} data bytes after header, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype).copy()
    return TensorRecord(name=name, dtype=_DESCR_TO_TAG[descr], shape=shape, data=data)


def write_npy(record: TensorRecord) -> bytes:
    descr = "<" + record.dtype
    header = "{'descr': %r, 'fortran_order': False, 'shape': %s, }" % (
        descr,
        repr(record.shape),
    )
    # pad with spaces so the data section starts on a 64-byte boundary
    unpadded = len(MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    if len(header) > 0xFFFF:
        raise HeaderParse("header too large for format version 1.0")
    out = bytearray(MAGIC)
    out += bytes((1, 0))
    out += struct.pack("<H", len(header))
    out += header.encode("latin1")
    out += record.data.tobytes()
    return bytes(out)


def write_npz(records) -> bytes:
    seen = set()
    bio = io.BytesIO()
    with zipfile.ZipFile(bio, "w", zipfile.ZIP_STORED) as zf:
        for rec in records:
            if not rec.name:
                raise ValueError("record name must be non-empty")
            if rec.name in seen:
                raise ValueError(f"duplicate record name {rec.name!r}")
            seen.add(rec.name)
            info = zipfile.ZipInfo(rec.name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_STORED
            info.external_attr = 0o600 << 16
            zf.writestr(info, write_npy(rec))
    return bio.getvalue()


def read_npz(buf: bytes) -> list[TensorRecord]:
    try:
        zf = zipfile.ZipFile(io.BytesIO(buf))
    except zipfile.BadZipFile as exc:
        raise BadZip(str(exc)) from None
    records = []
    with zf:
        for info in zf.infolist():
            entry = info.filename
            stem = entry[:-4] if entry.endswith(".npy") else entry
            try:
                payload = zf.read(info)
            except (zipfile.BadZipFile, NotImplementedError) as exc:
                raise BadZip(f"entry {entry!r}: {exc}") from None
            try:
                records.append(read_npy(payload, name=stem))
            except FormatError as exc:
                raise type(exc)(f"entry {entry!r}: {exc}") from None
    return records
