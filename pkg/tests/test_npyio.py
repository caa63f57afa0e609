"""Archive format checks, with numpy's own save/load as the reference
implementation for everything our reader/writer accepts."""

import io
import struct
import zipfile

import numpy as np
import pytest

from convarrange.errors import (
    BadMagic,
    BadZip,
    HeaderParse,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
)
from convarrange.npyio import TensorRecord, read_npy, read_npz, write_npy, write_npz


def np_save_bytes(arr):
    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def np_load_bytes(payload):
    return np.load(io.BytesIO(payload))


class TestNpyRoundTrip:
    def test_random_records_round_trip(self, rng):
        shapes = [(), (1,), (7,), (3, 4), (2, 3, 4), (4, 3, 3, 3), (0,), (3, 0, 2)]
        for i, shape in enumerate(shapes):
            for tag, npdt in (("f4", np.float32), ("f8", np.float64)):
                arr = rng.standard_normal(shape).astype(npdt)
                rec = TensorRecord.from_array(f"t{i}", arr)
                back = read_npy(write_npy(rec), name=rec.name)
                assert back == rec
                assert back.shape == shape
                assert back.as_array().dtype == npdt

    def test_write_matches_numpy_bytes(self, rng):
        for shape in [(4, 3, 3, 3), (5,), (2, 2)]:
            arr = rng.standard_normal(shape).astype(np.float32)
            assert write_npy(TensorRecord.from_array("w", arr)) == np_save_bytes(arr)

    def test_numpy_loads_our_bytes(self, rng):
        arr = rng.standard_normal((3, 5)).astype(np.float64)
        out = np_load_bytes(write_npy(TensorRecord.from_array("w", arr)))
        np.testing.assert_array_equal(out, arr)
        assert out.dtype == np.float64

    def test_we_load_numpy_bytes(self, rng):
        arr = rng.standard_normal((6, 2)).astype(np.float32)
        rec = read_npy(np_save_bytes(arr), name="w")
        np.testing.assert_array_equal(rec.as_array(), arr)

    def test_data_offset_is_64_aligned(self, rng):
        for shape in [(1,), (3, 4), (2, 3, 4, 5, 6)]:
            payload = write_npy(TensorRecord.from_array("w", rng.standard_normal(shape)))
            (hlen,) = struct.unpack_from("<H", payload, 8)
            assert (10 + hlen) % 64 == 0

    def test_zero_element_and_scalar_shapes(self):
        rec = TensorRecord.from_array("z", np.zeros((0,), np.float32))
        assert read_npy(write_npy(rec)).shape == (0,)
        rec = TensorRecord.from_array("s", np.float64(3.5))
        back = read_npy(write_npy(rec))
        assert back.shape == ()
        assert float(back.as_array()) == 3.5


class TestNpyRejections:
    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            read_npy(b"NOTNPY" + b"\x00" * 64)
        with pytest.raises(BadMagic):
            read_npy(b"\x93")

    def test_big_endian_rejected(self, rng):
        arr = rng.standard_normal(4).astype(">f4")
        with pytest.raises(UnsupportedDtype):
            read_npy(np_save_bytes(arr))

    def test_integer_dtype_rejected(self):
        with pytest.raises(UnsupportedDtype):
            read_npy(np_save_bytes(np.arange(4, dtype=np.int32)))

    def test_fortran_order_rejected(self, rng):
        arr = np.asfortranarray(rng.standard_normal((3, 4)).astype(np.float32))
        with pytest.raises(HeaderParse):
            read_npy(np_save_bytes(arr))

    def test_truncated_payload(self, rng):
        payload = write_npy(TensorRecord.from_array("w", rng.standard_normal((4, 4))))
        with pytest.raises(TruncatedPayload):
            read_npy(payload[:-8])
        with pytest.raises(TruncatedPayload):
            read_npy(payload[:9])

    def test_unsupported_version(self, rng):
        payload = bytearray(write_npy(TensorRecord.from_array("w", np.zeros(2))))
        payload[6] = 3
        with pytest.raises(HeaderParse):
            read_npy(bytes(payload))

    def test_header_not_a_dict(self):
        header = b"[1, 2]" + b" " * 49 + b"\n"
        payload = b"\x93NUMPY\x01\x00" + struct.pack("<H", len(header)) + header
        with pytest.raises(HeaderParse):
            read_npy(payload)

    def test_header_missing_newline(self, rng):
        payload = bytearray(write_npy(TensorRecord.from_array("w", np.zeros(2))))
        (hlen,) = struct.unpack_from("<H", payload, 8)
        payload[10 + hlen - 1] = ord(" ")
        with pytest.raises(HeaderParse):
            read_npy(bytes(payload))

    def test_bad_shape_entry(self):
        header = b"{'descr': '<f4', 'fortran_order': False, 'shape': (2, -1), }"
        header += b" " * (-(10 + len(header) + 1) % 64) + b"\n"
        payload = b"\x93NUMPY\x01\x00" + struct.pack("<H", len(header)) + header + b"\x00" * 8
        with pytest.raises(HeaderParse):
            read_npy(payload)


class TestTensorRecord:
    def test_shape_data_mismatch(self):
        with pytest.raises(ShapeMismatch):
            TensorRecord("x", "f4", (3, 3), np.zeros(4, np.float32))

    def test_negative_extent(self):
        with pytest.raises(ShapeMismatch):
            TensorRecord("x", "f4", (-1,), np.zeros(0, np.float32))

    def test_bad_dtype_tag(self):
        with pytest.raises(UnsupportedDtype):
            TensorRecord("x", "i4", (2,), np.zeros(2, np.float32))

    def test_from_array_rejects_ints(self):
        with pytest.raises(UnsupportedDtype):
            TensorRecord.from_array("x", np.arange(3))


class TestNpz:
    def records(self, rng, n=5):
        return [
            TensorRecord.from_array(f"layer{i}.weight", rng.standard_normal((2, 3)).astype(np.float32))
            for i in range(n)
        ]

    def test_round_trip_and_order(self, rng):
        recs = self.records(rng)
        back = read_npz(write_npz(recs))
        assert back == recs
        assert [r.name for r in back] == [r.name for r in recs]

    def test_deterministic_bytes(self, rng):
        recs = self.records(rng)
        assert write_npz(recs) == write_npz(recs)

    def test_reads_numpy_savez_and_compressed(self, rng):
        arrays = {"a": rng.standard_normal((3, 2)).astype(np.float32),
                  "b": rng.standard_normal(4).astype(np.float64)}
        for saver in (np.savez, np.savez_compressed):
            buf = io.BytesIO()
            saver(buf, **arrays)
            recs = {r.name: r for r in read_npz(buf.getvalue())}
            assert set(recs) == {"a", "b"}
            for name, arr in arrays.items():
                np.testing.assert_array_equal(recs[name].as_array(), arr)

    def test_numpy_reads_our_archive(self, rng):
        recs = self.records(rng, n=2)
        loaded = np.load(io.BytesIO(write_npz(recs)))
        for rec in recs:
            np.testing.assert_array_equal(loaded[rec.name], rec.as_array())

    def test_duplicate_name_rejected(self, rng):
        recs = self.records(rng, n=2)
        recs[1].name = recs[0].name
        with pytest.raises(ValueError):
            write_npz(recs)

    def test_empty_name_rejected(self, rng):
        recs = self.records(rng, n=1)
        recs[0].name = ""
        with pytest.raises(ValueError):
            write_npz(recs)

    def test_not_a_zip(self):
        with pytest.raises(BadZip):
            read_npz(b"definitely not a zip archive")

    def test_empty_archive(self):
        bio = io.BytesIO()
        zipfile.ZipFile(bio, "w").close()
        assert read_npz(bio.getvalue()) == []

    def test_entry_error_carries_name(self):
        bio = io.BytesIO()
        with zipfile.ZipFile(bio, "w") as zf:
            zf.writestr("broken.npy", b"garbage bytes")
        with pytest.raises(BadMagic, match="broken"):
            read_npz(bio.getvalue())

    def test_extensionless_entry_keeps_name(self, rng):
        arr = rng.standard_normal(3).astype(np.float32)
        bio = io.BytesIO()
        with zipfile.ZipFile(bio, "w") as zf:
            zf.writestr("plain", write_npy(TensorRecord.from_array("plain", arr)))
        recs = read_npz(bio.getvalue())
        assert recs[0].name == "plain"
