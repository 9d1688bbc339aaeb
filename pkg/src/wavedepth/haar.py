"""Orthonormal 2-D Haar analysis and synthesis.

For a 2x2 block ``[[a, b], [c, d]]``::

    ll = (a + b + c + d) / 2      lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2      hh = (a - b - c + d) / 2

so ``lh`` responds to horizontal edges, ``hl`` to vertical ones and ``hh`` to
diagonal structure.  3-D tensors are transformed channel by channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .tensor import as_tensor, read_tensor, write_tensor


@dataclass(frozen=True)
class WaveletLevel:
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        if not (self.lh.shape == self.hl.shape == self.hh.shape):
            raise ShapeMismatch(
                f"detail bands differ: {self.lh.shape}, {self.hl.shape}, {self.hh.shape}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.lh.shape

    def bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lh, self.hl, self.hh

    def zeros_like(self) -> "WaveletLevel":
        z = np.zeros_like(self.lh)
        return WaveletLevel(z, z.copy(), z.copy())


@dataclass(frozen=True)
class CoefficientPyramid:
    """Coarsest low-pass band plus detail levels ordered coarsest first."""

    ll: np.ndarray
    levels: list[WaveletLevel] = field(default_factory=list)

    def __post_init__(self):
        expect = self.ll.shape
        for j, lvl in enumerate(self.levels):
            if lvl.shape != expect:
                raise ShapeMismatch(f"level {j} has shape {lvl.shape}, expected {expect}")
            expect = (2 * expect[0], 2 * expect[1]) + tuple(expect[2:])

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def full_shape(self) -> tuple[int, ...]:
        f = 1 << self.depth
        return (self.ll.shape[0] * f, self.ll.shape[1] * f) + tuple(self.ll.shape[2:])

    def detail_count(self) -> int:
        return sum(3 * lvl.lh.size for lvl in self.levels)

    def with_levels(self, levels) -> "CoefficientPyramid":
        return CoefficientPyramid(self.ll, list(levels))


def _split(x: np.ndarray):
    return x[0::2, 0::2], x[0::2, 1::2], x[1::2, 0::2], x[1::2, 1::2]


def dwt_level(x) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One analysis step; returns ``(ll, lh, hl, hh)`` at half resolution."""
    x = as_tensor(x, check_finite=False)
    height, width = x.shape[:2]
    if height % 2 or width % 2:
        raise ShapeMismatch(f"dwt_level needs even dimensions, got {height}x{width}")
    a, b, c, d = _split(x)
    # pairing keeps exactly-constant blocks at exactly-zero detail
    top_sum, bot_sum = a + b, c + d
    top_dif, bot_dif = a - b, c - d
    half = np.float32(0.5)
    ll = (top_sum + bot_sum) * half
    lh = (top_sum - bot_sum) * half
    hl = (top_dif + bot_dif) * half
    hh = (top_dif - bot_dif) * half
    return ll, lh, hl, hh


def idwt_level(ll, lh, hl, hh) -> np.ndarray:
    """Exact inverse of :func:`dwt_level`."""
    ll, lh, hl, hh = (as_tensor(t, check_finite=False) for t in (ll, lh, hl, hh))
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ShapeMismatch(
            f"band shapes differ: {ll.shape}, {lh.shape}, {hl.shape}, {hh.shape}"
        )
    half = np.float32(0.5)
    s_plus, s_minus = ll + lh, ll - lh
    d_plus, d_minus = hl + hh, hl - hh
    height, width = ll.shape[:2]
    out = np.empty((2 * height, 2 * width) + ll.shape[2:], dtype=np.float32)
    out[0::2, 0::2] = (s_plus + d_plus) * half
    out[0::2, 1::2] = (s_plus - d_plus) * half
    out[1::2, 0::2] = (s_minus + d_minus) * half
    out[1::2, 1::2] = (s_minus - d_minus) * half
    return out


def dwt_pyramid(x, levels: int) -> CoefficientPyramid:
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    x = as_tensor(x, check_finite=False)
    step = 1 << levels
    if x.shape[0] % step or x.shape[1] % step:
        raise ShapeMismatch(
            f"{x.shape[0]}x{x.shape[1]} is not divisible by 2**{levels}; use crop_to_dyadic"
        )
    details = []
    ll = x
    for _ in range(levels):
        ll, lh, hl, hh = dwt_level(ll)
        details.append(WaveletLevel(lh, hl, hh))
    return CoefficientPyramid(ll, details[::-1])


def idwt_pyramid(pyr: CoefficientPyramid) -> np.ndarray:
    return reconstruct_bands(pyr)[-1]


def reconstruct_bands(pyr: CoefficientPyramid) -> list[np.ndarray]:
    """All low-pass bands from ``pyr.ll`` up to full resolution (coarsest first)."""
    out = [pyr.ll]
    for lvl in pyr.levels:
        if lvl.shape != out[-1].shape:
            raise ShapeMismatch(f"level shape {lvl.shape} does not match band {out[-1].shape}")
        out.append(idwt_level(out[-1], lvl.lh, lvl.hl, lvl.hh))
    return out


# --------------------------------------------------------------------------
# directory serialization


def save_pyramid(pyr: CoefficientPyramid, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(pyr.ll, d / "ll.wmdt")
    for j, lvl in enumerate(pyr.levels):
        for name, band in zip(("lh", "hl", "hh"), lvl.bands()):
            write_tensor(band, d / f"level{j}_{name}.wmdt")
    manifest = {
        "levels": pyr.depth,
        "ll_shape": list(pyr.ll.shape),
        "level_shapes": [list(lvl.shape) for lvl in pyr.levels],
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_pyramid(directory) -> CoefficientPyramid:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    ll = read_tensor(d / "ll.wmdt")
    if list(ll.shape) != manifest["ll_shape"]:
        raise ShapeMismatch("ll.wmdt does not match manifest")
    levels = []
    for j in range(manifest["levels"]):
        bands = [read_tensor(d / f"level{j}_{n}.wmdt") for n in ("lh", "hl", "hh")]
        levels.append(WaveletLevel(*bands))
    return CoefficientPyramid(ll, levels)
