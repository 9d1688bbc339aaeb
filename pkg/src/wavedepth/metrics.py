"""Standard single-image depth evaluation metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class EvalConfig:
    """Depth clamp range, optional crop ``(top, bottom, left, right)`` and median scaling."""

    min_depth: float = 1e-3
    max_depth: float = 80.0
    crop: Optional[tuple[int, int, int, int]] = None
    median_scaling: bool = False

    def __post_init__(self):
        if not self.min_depth < self.max_depth:
            raise ValueError(f"clamp range inverted: ({self.min_depth}, {self.max_depth})")


KITTI = EvalConfig(1e-3, 80.0)
NYU = EvalConfig(0.4, 10.0)
PRESETS = {"kitti": KITTI, "nyu": NYU}

# column order used when reporting each preset
PRESET_COLUMNS = {
    "kitti": ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"),
    "nyu": ("abs_rel", "rmse", "log10", "delta1", "delta2", "delta3"),
}


def depth_metrics(pred, gt, cfg: EvalConfig = KITTI) -> DepthMetrics:
    """Metrics over pixels with ``gt > 0`` after clamping both maps to the config range."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    valid = gt > 0
    if cfg.crop is not None:
        top, bottom, left, right = cfg.crop
        region = np.zeros_like(valid)
        region[top:bottom, left:right] = True
        valid &= region
    if not valid.any():
        raise ValueError("no valid ground-truth pixels")
    p, g = pred[valid], gt[valid]
    if cfg.median_scaling:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, cfg.min_depth, cfg.max_depth)
    g = np.clip(g, cfg.min_depth, cfg.max_depth)

    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
    )


def relative_change(m: DepthMetrics, baseline: DepthMetrics) -> dict[str, Optional[float]]:
    """Percent change per metric; ``None`` where the baseline is zero."""
    out = {}
    for name, value in m.as_dict().items():
        base = getattr(baseline, name)
        out[name] = None if base == 0 else 100.0 * (value - base) / base
    return out


def metrics_csv(m: DepthMetrics, preset: str = "kitti", header: bool = True) -> str:
    cols = PRESET_COLUMNS[preset]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(cols)
    writer.writerow([repr(getattr(m, c)) for c in cols])
    return buf.getvalue()
