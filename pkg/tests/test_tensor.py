import struct

import numpy as np
import pytest

from wavedepth.errors import (
    BadMagic,
    ChannelMismatch,
    FormatError,
    NonFiniteData,
    TooSmall,
    TruncatedPayload,
    UnsupportedFormat,
)
from wavedepth.tensor import (
    crop_to_dyadic,
    read_mask,
    read_pfm,
    read_tensor,
    write_mask,
    write_pfm,
    write_tensor,
)


def _pfm_bytes(magic, width, height, scale, values, fmt="<"):
    header = f"{magic}\n{width} {height}\n{scale}\n".encode()
    return header + struct.pack(f"{fmt}{len(values)}f", *values)


def test_pfm_roundtrip_bitwise(tmp_path, rng):
    t = rng.normal(size=(7, 5)).astype(np.float32)
    write_pfm(t, tmp_path / "a.pfm")
    back = read_pfm(tmp_path / "a.pfm")
    assert back.dtype == np.float32
    assert back.tobytes() == t.tobytes()


def test_pfm_rows_are_stored_bottom_up(tmp_path):
    (tmp_path / "a.pfm").write_bytes(_pfm_bytes("Pf", 2, 2, -1.0, [1, 2, 3, 4]))
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), [[3, 4], [1, 2]])


def test_pfm_big_endian(tmp_path):
    (tmp_path / "a.pfm").write_bytes(_pfm_bytes("Pf", 2, 1, 1.0, [1.5, -2.0], ">"))
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), [[1.5, -2.0]])


def test_write_pfm_layout(tmp_path):
    write_pfm(np.full((4, 4), 5.0, np.float32), tmp_path / "c.pfm")
    raw = (tmp_path / "c.pfm").read_bytes()
    assert raw.startswith(b"Pf\n4 4\n-1.0\n")
    payload = np.frombuffer(raw[len(b"Pf\n4 4\n-1.0\n"):], "<f4")
    assert payload.size == 16 and np.all(payload == 5.0)


@pytest.mark.parametrize(
    "blob, exc",
    [
        (_pfm_bytes("PF", 1, 1, -1.0, [1, 2, 3]), UnsupportedFormat),
        (b"P6\n1 1\n255\n\x00\x00\x00", UnsupportedFormat),
        (b"Pf\nx 1\n-1.0\n\x00\x00\x00\x00", FormatError),
        (b"Pf\n99999999 99999999\n-1.0\n", FormatError),
        (_pfm_bytes("Pf", 2, 2, -1.0, [1, 2, 3]), TruncatedPayload),
        (_pfm_bytes("Pf", 2, 1, -1.0, [1, float("nan")]), NonFiniteData),
    ],
)
def test_pfm_rejects(tmp_path, blob, exc):
    (tmp_path / "bad.pfm").write_bytes(blob)
    with pytest.raises(exc):
        read_pfm(tmp_path / "bad.pfm")


def test_write_pfm_needs_one_channel(tmp_path):
    with pytest.raises(ChannelMismatch):
        write_pfm(np.zeros((2, 2, 3), np.float32), tmp_path / "x.pfm")


def test_wmdt_roundtrip(tmp_path, rng):
    t = rng.normal(size=(8, 8, 3)).astype(np.float32)
    write_tensor(t, tmp_path / "t.wmdt")
    back = read_tensor(tmp_path / "t.wmdt")
    assert back.shape == (8, 8, 3)
    assert back.tobytes() == t.tobytes()


def test_wmdt_hand_decode(tmp_path):
    blob = b"WMDT" + struct.pack("<IIII", 1, 2, 2, 2) + struct.pack("<4f", 1, 2, 3, 4)
    (tmp_path / "t.wmdt").write_bytes(blob)
    np.testing.assert_array_equal(read_tensor(tmp_path / "t.wmdt"), [[1, 2], [3, 4]])


def test_wmdt_header_is_bit_exact(tmp_path):
    write_tensor(np.zeros((3, 5), np.float32), tmp_path / "t.wmdt")
    raw = (tmp_path / "t.wmdt").read_bytes()
    assert raw[:20] == b"WMDT" + struct.pack("<IIII", 1, 2, 3, 5)
    assert len(raw) == 20 + 4 * 15


def test_wmdt_errors(tmp_path):
    (tmp_path / "a").write_bytes(b"XXXX" + struct.pack("<IIII", 1, 2, 1, 1) + b"\0" * 4)
    with pytest.raises(BadMagic):
        read_tensor(tmp_path / "a")
    (tmp_path / "b").write_bytes(b"WMDT" + struct.pack("<IIII", 1, 2, 2, 2) + b"\0" * 12)
    with pytest.raises(TruncatedPayload):
        read_tensor(tmp_path / "b")


def test_mask_pgm_roundtrip(tmp_path, rng):
    m = rng.random((6, 9)) > 0.5
    write_mask(m, tmp_path / "m.pgm")
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n9 6\n255\n")
    assert set(raw[len(b"P5\n9 6\n255\n"):]) <= {0, 255}
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), m)


def test_crop_to_dyadic():
    t = np.arange(481 * 641, dtype=np.float32).reshape(481, 641)
    assert crop_to_dyadic(np.zeros((480, 640)), 4).shape == (480, 640)
    c = crop_to_dyadic(t, 4)
    assert c.shape == (480, 640)
    np.testing.assert_array_equal(c, t[:480, :640])
    assert crop_to_dyadic(np.zeros((40, 40)), 4).shape == (32, 32)
    np.testing.assert_array_equal(crop_to_dyadic(t[:40, :40], 4), t[4:36, 4:36])
    with pytest.raises(TooSmall):
        crop_to_dyadic(np.zeros((10, 10)), 4)
