"""Dense float32 tensors and their on-disk formats.

A tensor is a C-contiguous ``numpy.float32`` array of shape ``(H, W)`` or
``(H, W, C)`` (row-major, channel-minor).  Every function here returns a new
array and never writes into its inputs.

Formats:

* PFM (``Pf`` grayscale only), read in either byte order, written
  little-endian with scale ``-1.0``.
* WMDT, a minimal binary container: ``b"WMDT"``, ``u32 version = 1``,
  ``u32 ndim`` (2 or 3), ``ndim x u32`` dims, then the float32 payload, all
  little-endian.
* Binary PGM (``P5``, maxval 255) for boolean masks, active = 255.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    ChannelMismatch,
    FormatError,
    NonFiniteData,
    ShapeMismatch,
    TooSmall,
    TruncatedPayload,
    UnsupportedFormat,
)

WMDT_MAGIC = b"WMDT"
WMDT_VERSION = 1
# PFM/PGM dimensions above this are treated as a corrupt header
MAX_DIM = 1 << 20


def as_tensor(a, *, check_finite: bool = True) -> np.ndarray:
    """Validate ``a`` as a 2-D or 3-D tensor and return a float32 copy-if-needed."""
    arr = np.ascontiguousarray(a, dtype=np.float32)
    if arr.ndim not in (2, 3):
        raise ShapeMismatch(f"tensor must be 2-D or 3-D, got shape {arr.shape}")
    if check_finite and not np.isfinite(arr).all():
        raise NonFiniteData("tensor contains NaN or Inf")
    return arr


def channels(t: np.ndarray) -> int:
    return 1 if t.ndim == 2 else t.shape[2]


# --------------------------------------------------------------------------
# PFM


def _pfm_tokens(buf: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    tokens = []
    n = len(buf)
    for _ in range(count):
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PFM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise FormatError("PFM header not terminated by whitespace")
    return tokens, pos + 1


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into an ``(H, W)`` tensor, top row first."""
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic == b"PF":
        raise UnsupportedFormat("color PFM ('PF') is not supported; expected 'Pf'")
    if magic != b"Pf":
        raise UnsupportedFormat(f"not a grayscale PFM file (magic {magic!r})")
    (w_tok, h_tok, s_tok), offset = _pfm_tokens(buf, 3, 2)
    try:
        width, height, scale = int(w_tok), int(h_tok), float(s_tok)
    except ValueError as exc:
        raise FormatError(f"malformed PFM header: {exc}") from None
    if not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        raise FormatError(f"PFM dimensions out of range: {width}x{height}")
    if scale == 0.0 or not np.isfinite(scale):
        raise FormatError(f"invalid PFM scale {scale}")
    dtype = "<f4" if scale < 0 else ">f4"
    nbytes = 4 * width * height
    payload = buf[offset:]
    if len(payload) < nbytes:
        raise TruncatedPayload(f"PFM payload has {len(payload)} bytes, expected {nbytes}")
    data = np.frombuffer(payload, dtype=dtype, count=width * height)
    if not np.isfinite(data).all():
        raise NonFiniteData("PFM payload contains NaN or Inf")
    img = data.reshape(height, width)[::-1]
    return np.ascontiguousarray(img, dtype=np.float32)


def write_pfm(tensor, path) -> None:
    t = as_tensor(tensor)
    if channels(t) != 1:
        raise ChannelMismatch(f"PFM output needs 1 channel, got {channels(t)}")
    if t.ndim == 3:
        t = t[:, :, 0]
    height, width = t.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    raster = np.ascontiguousarray(t[::-1], dtype="<f4").tobytes()
    Path(path).write_bytes(header + raster)


# --------------------------------------------------------------------------
# WMDT


def write_tensor(tensor, path) -> None:
    t = as_tensor(tensor, check_finite=False)
    head = WMDT_MAGIC + struct.pack(f"<II{t.ndim}I", WMDT_VERSION, t.ndim, *t.shape)
    Path(path).write_bytes(head + t.astype("<f4", copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise TruncatedPayload("WMDT header truncated")
    if buf[:4] != WMDT_MAGIC:
        raise BadMagic(f"bad magic {buf[:4]!r}, expected {WMDT_MAGIC!r}")
    version, ndim = struct.unpack_from("<II", buf, 4)
    if version != WMDT_VERSION:
        raise UnsupportedFormat(f"WMDT version {version} not supported")
    if ndim not in (2, 3):
        raise FormatError(f"WMDT ndim must be 2 or 3, got {ndim}")
    if len(buf) < 12 + 4 * ndim:
        raise TruncatedPayload("WMDT dims truncated")
    dims = struct.unpack_from(f"<{ndim}I", buf, 12)
    count = int(np.prod(dims, dtype=np.int64))
    offset = 12 + 4 * ndim
    if len(buf) - offset != 4 * count:
        raise TruncatedPayload(
            f"WMDT payload has {len(buf) - offset} bytes, expected {4 * count}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    return data.reshape(dims).astype(np.float32)


# --------------------------------------------------------------------------
# PGM masks


def write_mask(mask, path) -> None:
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ShapeMismatch(f"mask must be 2-D, got shape {m.shape}")
    height, width = m.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (m.astype(np.uint8) * 255).tobytes())


def read_mask(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise UnsupportedFormat(f"not a binary PGM (magic {buf[:2]!r})")
    (w_tok, h_tok, max_tok), offset = _pfm_tokens(buf, 3, 2)
    width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    if maxval != 255 or not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        raise FormatError("unsupported PGM header")
    payload = buf[offset:]
    if len(payload) < width * height:
        raise TruncatedPayload("PGM payload truncated")
    data = np.frombuffer(payload, dtype=np.uint8, count=width * height)
    return data.reshape(height, width) > 127


# --------------------------------------------------------------------------
# geometry


def crop_to_dyadic(tensor, levels: int) -> np.ndarray:
    """Center-crop so both spatial dims are multiples of ``2**levels``."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    t = as_tensor(tensor, check_finite=False)
    step = 1 << levels
    height, width = t.shape[:2]
    if height < step or width < step:
        raise TooSmall(f"{height}x{width} is smaller than {step}x{step}")
    new_h, new_w = height - height % step, width - width % step
    top, left = (height - new_h) // 2, (width - new_w) // 2
    return np.ascontiguousarray(t[top : top + new_h, left : left + new_w])
