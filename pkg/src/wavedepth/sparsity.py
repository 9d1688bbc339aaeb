"""Sparse masks, sparsity levels and coefficient thresholding.

Masks are plain ``bool`` arrays (``True`` = active pixel).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ShapeMismatch
from .haar import CoefficientPyramid, WaveletLevel, reconstruct_bands


def scale_threshold(ll, eta: float) -> float:
    """Per-scale absolute threshold ``eta * (max(ll) - min(ll))``."""
    ll = np.asarray(ll)
    if ll.size == 0:
        raise ValueError("empty low-pass band")
    spread = float(ll.max()) - float(ll.min())
    return float(eta) * spread


def coefficient_magnitude(level: WaveletLevel) -> np.ndarray:
    """Pointwise ``max(|LH|, |HL|, |HH|)``."""
    return np.maximum(np.maximum(np.abs(level.lh), np.abs(level.hl)), np.abs(level.hh))


def upsample_mask(mask) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    return np.repeat(np.repeat(m, 2, axis=0), 2, axis=1)


def get_sparse_mask(level: WaveletLevel, eta_s: float) -> np.ndarray:
    """Active where any detail magnitude strictly exceeds ``eta_s``, upsampled x2."""
    if level.lh.ndim != 2:
        raise ShapeMismatch(f"mask derivation needs single-channel bands, got {level.shape}")
    coarse = coefficient_magnitude(level) > abs(float(eta_s))
    return upsample_mask(coarse)


def active_count(mask) -> int:
    return int(np.count_nonzero(mask))


def sparsity_level(mask) -> float:
    m = np.asarray(mask, dtype=bool)
    if m.size == 0:
        return 0.0
    return active_count(m) / m.size


# --------------------------------------------------------------------------
# pyramid thresholding


@dataclass(frozen=True)
class AbsoluteThreshold:
    """Keep a detail coefficient iff ``|c| > thresholds[j]`` (``j`` coarsest first)."""

    thresholds: Sequence[float]


@dataclass(frozen=True)
class KeepTopFraction:
    """Keep the ``rho`` fraction of detail coefficients with largest magnitude."""

    rho: float

    def __post_init__(self):
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")


Policy = Union[AbsoluteThreshold, KeepTopFraction]


def _flat_details(pyr: CoefficientPyramid) -> np.ndarray:
    # level, then band (lh, hl, hh), then row-major
    parts = [band.ravel() for lvl in pyr.levels for band in lvl.bands()]
    if not parts:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(parts)


def _unflatten(pyr: CoefficientPyramid, flat: np.ndarray) -> CoefficientPyramid:
    levels, pos = [], 0
    for lvl in pyr.levels:
        bands = []
        for band in lvl.bands():
            bands.append(flat[pos : pos + band.size].reshape(band.shape))
            pos += band.size
        levels.append(WaveletLevel(*bands))
    return pyr.with_levels(levels)


def keep_count(rho: float, total: int) -> int:
    return min(total, int(round(rho * total)))


def threshold_pyramid(pyr: CoefficientPyramid, policy: Policy) -> CoefficientPyramid:
    """Zero the detail coefficients rejected by ``policy``; ``ll`` is untouched."""
    if isinstance(policy, AbsoluteThreshold):
        if len(policy.thresholds) != pyr.depth:
            raise ValueError(
                f"{len(policy.thresholds)} thresholds given for {pyr.depth} levels"
            )
        levels = []
        for lvl, t in zip(pyr.levels, policy.thresholds):
            t = abs(float(t))
            levels.append(
                WaveletLevel(*(np.where(np.abs(b) > t, b, np.float32(0)) for b in lvl.bands()))
            )
        return pyr.with_levels(levels)

    if isinstance(policy, KeepTopFraction):
        flat = _flat_details(pyr)
        k = keep_count(policy.rho, flat.size)
        if k == flat.size:
            return pyr
        order = np.argsort(-np.abs(flat), kind="stable")
        kept = np.zeros_like(flat)
        idx = order[:k]
        kept[idx] = flat[idx]
        return _unflatten(pyr, kept)

    raise TypeError(f"unknown threshold policy {policy!r}")


def dropped_energy(pyr: CoefficientPyramid, thresholded: CoefficientPyramid) -> float:
    """Sum of squared coefficients removed by thresholding (float64)."""
    a = _flat_details(pyr).astype(np.float64)
    b = _flat_details(thresholded).astype(np.float64)
    return float(np.sum((a - b) ** 2))


def level_support(level: WaveletLevel) -> np.ndarray:
    """Pixel positions of a level that carry any non-zero detail coefficient."""
    return (level.lh != 0) | (level.hl != 0) | (level.hh != 0)


@dataclass(frozen=True)
class MaskedAnalysis:
    """Result of gating a true pyramid with decoder-style masks.

    ``masks[i]`` gates ``pyramid.levels[i]`` (coarsest first); ``masks[0]`` is
    all-ones.  ``thresholds[i]`` is the absolute threshold that produced
    ``masks[i + 1]``.
    """

    pyramid: CoefficientPyramid
    masks: list[np.ndarray]
    thresholds: list[float]

    @property
    def psi(self) -> list[float]:
        return [sparsity_level(m) for m in self.masks]


def emulate_masks(pyr: CoefficientPyramid, eta: float) -> MaskedAnalysis:
    """Run the coarse-to-fine mask propagation over known coefficients.

    Each level is gated by the current mask; the next mask comes from the gated
    coefficients with threshold ``eta`` times the range of the true low-pass
    band one level finer.  Using the true bands makes the masks nested in
    ``eta``.
    """
    if pyr.ll.ndim != 2:
        raise ShapeMismatch("mask emulation needs a single-channel pyramid")
    bands = reconstruct_bands(pyr)
    mask = np.ones(pyr.ll.shape, dtype=bool)
    masks, thresholds, gated = [], [], []
    for j, lvl in enumerate(pyr.levels):
        masks.append(mask)
        level = WaveletLevel(*(np.where(mask, b, np.float32(0)) for b in lvl.bands()))
        gated.append(level)
        if j + 1 < pyr.depth:
            eta_s = scale_threshold(bands[j + 1], eta)
            thresholds.append(eta_s)
            mask = get_sparse_mask(level, eta_s)
    return MaskedAnalysis(pyr.with_levels(gated), masks, thresholds)
