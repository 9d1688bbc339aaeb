"""Seeded synthetic depth scenes: constant-depth rectangles over a planar ramp."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scene:
    depth: np.ndarray  # float32 metres
    labels: np.ndarray  # int32, 0 = background, i = i-th rectangle (topmost wins)


def piecewise_scene(seed: int, height: int = 480, width: int = 640, n_rects: int = 6,
                    ramp: bool = True, align: int = 1, min_size: int | None = None,
                    depth_range: tuple[float, float] = (2.0, 60.0)) -> Scene:
    """Background plane plus ``n_rects`` fronto-parallel rectangles.

    With ``align > 1`` every rectangle corner sits on a multiple of ``align``.
    Rectangle depths are distinct from each other and from a flat background.
    """
    rng = np.random.default_rng(seed)
    lo, hi = depth_range
    if min_size is None:
        min_size = max(align, min(height, width) // 10)
    yy, xx = np.mgrid[0:height, 0:width]
    if ramp:
        far, near = rng.uniform(0.6, 0.9) * hi, rng.uniform(0.3, 0.5) * hi
        tilt = rng.uniform(-0.15, 0.15) * hi
        bg = far + (near - far) * (yy / (height - 1)) + tilt * (xx / (width - 1) - 0.5)
    else:
        bg = np.full((height, width), rng.uniform(0.5, 0.9) * hi)
    depth = bg.astype(np.float64)
    labels = np.zeros((height, width), dtype=np.int32)
    used = {float(np.float32(depth[0, 0]))}

    def snap(v):
        return int(v) // align * align

    for i in range(1, n_rects + 1):
        rh = snap(rng.integers(min_size, max(min_size + 1, height // 2)))
        rw = snap(rng.integers(min_size, max(min_size + 1, width // 2)))
        rh, rw = max(rh, min_size), max(rw, min_size)
        top = snap(rng.integers(0, height - rh + 1))
        left = snap(rng.integers(0, width - rw + 1))
        d = float(np.float32(rng.uniform(lo, 0.5 * hi)))
        while d in used:
            d = float(np.float32(d + 0.125))
        used.add(d)
        depth[top : top + rh, left : left + rw] = d
        labels[top : top + rh, left : left + rw] = i
    return Scene(depth.astype(np.float32), labels)


def error_field(seed: int, height: int, width: int, amplitude: float = 0.08) -> np.ndarray:
    """Smooth multiplicative error ``1 + bias + amplitude * wave`` around 1."""
    rng = np.random.default_rng(seed + 1_000_003)
    yy, xx = np.mgrid[0:height, 0:width]
    fy, fx = rng.uniform(0.5, 2.0, size=2)
    py, px = rng.uniform(0, 2 * np.pi, size=2)
    wave = np.sin(2 * np.pi * fx * xx / width + px) * np.cos(2 * np.pi * fy * yy / height + py)
    bias = rng.uniform(-0.03, 0.03)
    return (1.0 + bias + amplitude * wave).astype(np.float64)


def scene_pair(seed: int, height: int = 480, width: int = 640,
               **kwargs) -> tuple[np.ndarray, np.ndarray]:
    """``(prediction, ground_truth)``: a scene and a smoothly mis-scaled copy of it."""
    gt = piecewise_scene(seed, height, width, **kwargs).depth
    pred = gt.astype(np.float64) * error_field(seed, height, width)
    return pred.astype(np.float32), gt


def straddling_blocks(labels: np.ndarray, block: int) -> np.ndarray:
    """Blocks of ``block x block`` pixels containing more than one label."""
    height, width = labels.shape
    tiles = labels.reshape(height // block, block, width // block, block)
    return tiles.min(axis=(1, 3)) != tiles.max(axis=(1, 3))
