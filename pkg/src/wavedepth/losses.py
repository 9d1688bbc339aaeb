"""Photometric, smoothness and stereo-warping primitives used for training.

Everything is evaluated in float64 and returned as float32 maps (or Python
floats for scalar losses).  Nothing here computes gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.85
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


DEFAULT = LossConfig()


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"images differ in shape: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise ShapeMismatch(f"images must be HxW or HxWxC, got {a.shape}")
    return a, b


def mean3x3(x: np.ndarray) -> np.ndarray:
    """3x3 box mean with reflected borders."""
    pad = ((1, 1), (1, 1)) + ((0, 0),) * (x.ndim - 2)
    xp = np.pad(x, pad, mode="reflect")
    height, width = x.shape[:2]
    acc = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            acc += xp[dy : dy + height, dx : dx + width]
    return acc / 9.0


def ssim_map(a, b, cfg: LossConfig = DEFAULT) -> np.ndarray:
    a, b = _pair(a, b)
    mu_a, mu_b = mean3x3(a), mean3x3(b)
    mu_ab = mu_a * mu_b
    var_a = mean3x3(a * a) - mu_a * mu_a
    var_b = mean3x3(b * b) - mu_b * mu_b
    cov = mean3x3(a * b) - mu_ab
    # written so that swapping a and b gives bitwise-identical results
    num = (2.0 * mu_ab + cfg.c1) * (2.0 * cov + cfg.c2)
    den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2)
    return (num / den).astype(np.float32)


def photometric_error(a, b, cfg: LossConfig = DEFAULT) -> np.ndarray:
    """``alpha * (1 - SSIM) / 2 + (1 - alpha) * |a - b|`` per pixel."""
    a64, b64 = _pair(a, b)
    ssim = ssim_map(a64, b64, cfg).astype(np.float64)
    pe = cfg.alpha * (1.0 - ssim) / 2.0 + (1.0 - cfg.alpha) * np.abs(a64 - b64)
    return pe.astype(np.float32)


def smoothness_loss(disp, image) -> float:
    """Edge-aware smoothness of mean-normalised disparity.

    Gradients are forward differences; image gradient magnitudes are averaged
    over channels.  Each direction is averaged over the pixels where its
    difference exists and the two means are summed.
    """
    d = np.asarray(disp, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    if d.ndim == 3:
        d = d[:, :, 0]
    if img.ndim == 2:
        img = img[:, :, None]
    if d.shape != img.shape[:2]:
        raise ShapeMismatch(f"disparity {d.shape} and image {img.shape[:2]} differ")
    mean = d.mean()
    if mean <= 0:
        raise ValueError("disparity mean must be positive")
    d = d / mean
    gx_d = np.abs(d[:, 1:] - d[:, :-1])
    gy_d = np.abs(d[1:, :] - d[:-1, :])
    gx_i = np.mean(np.abs(img[:, 1:] - img[:, :-1]), axis=2)
    gy_i = np.mean(np.abs(img[1:, :] - img[:-1, :]), axis=2)
    return float(np.mean(gx_d * np.exp(-gx_i)) + np.mean(gy_d * np.exp(-gy_i)))


def depth_l1_loss(pred, gt, weight: float = 0.1) -> float:
    """Weighted mean absolute depth error used for supervised indoor training."""
    p, g = _pair(pred, gt)
    return float(weight * np.mean(np.abs(p - g)))


def warp_stereo(src, disparity, direction: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``src`` at ``x + direction * disparity`` along each row.

    Returns the warped image and a boolean mask of samples that fell inside
    the image; invalid samples are 0.
    """
    s = np.asarray(src, dtype=np.float32)
    disp = np.asarray(disparity, dtype=np.float64)
    if disp.ndim == 3:
        disp = disp[:, :, 0]
    if s.shape[:2] != disp.shape:
        raise ShapeMismatch(f"source {s.shape[:2]} and disparity {disp.shape} differ")
    if direction not in (-1, 1):
        raise ValueError("direction must be -1 or +1")
    height, width = disp.shape
    xs = np.arange(width, dtype=np.float64)[None, :] + direction * disp
    valid = (xs >= 0) & (xs <= width - 1)
    xc = np.clip(xs, 0, width - 1)
    x0 = np.floor(xc).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    frac = (xc - x0).astype(np.float32)
    rows = np.arange(height)[:, None]
    if s.ndim == 3:
        frac = frac[:, :, None]
    warped = s[rows, x0] * (np.float32(1) - frac) + s[rows, x1] * frac
    if s.ndim == 3:
        warped = warped * valid[:, :, None]
    else:
        warped = warped * valid
    return warped.astype(np.float32), valid
