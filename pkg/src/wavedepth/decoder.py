"""Coarse-to-fine wavelet depth decoding with threshold-driven sparsity.

The decoder consumes a feature pyramid ``[F4, F3, F2, F1]`` at 1/16, 1/8,
1/4 and 1/2 of the output resolution.  ``F4`` feeds the dense disparity head
that predicts the coarsest low-pass band ``LL3``.  Then for ``s = 3 .. 0`` the
wavelet head of scale ``s`` predicts ``(LH_s, HL_s, HH_s)`` from ``F_{s+1}``
only where the current mask is set, an IDWT step doubles the resolution, and
the next mask is derived from the coefficients just predicted with threshold
``eta * (max - min)`` of the new low-pass band.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .conv import ConvSpec, WaveHeadSpec, run_chain, wave_head
from .errors import ChannelMismatch, FormatError, ShapeMismatch
from .flops import LayerShape, MacReport, arch_report, default_arch, fmt_number
from .haar import WaveletLevel, dwt_pyramid, idwt_level, reconstruct_bands
from .sparsity import get_sparse_mask, scale_threshold, sparsity_level
from .tensor import read_tensor, write_mask, write_pfm, write_tensor

SCALES = (3, 2, 1, 0)
DEFAULT_CHANNELS = (256, 128, 64, 32)  # F4, F3, F2, F1
DEFAULT_DISP_RANGE = (0.01, 10.0)


def sigmoid_to_disparity(raw, d_min: float, d_max: float) -> np.ndarray:
    if not d_min < d_max:
        raise ValueError(f"disparity range inverted: ({d_min}, {d_max})")
    raw = np.asarray(raw, dtype=np.float32)
    return (np.float32(d_min) + raw * np.float32(d_max - d_min)).astype(np.float32)


# --------------------------------------------------------------------------
# features


def splitmix64(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset + 1 .. offset + n`` of the SplitMix64 sequence for ``seed``."""
    gamma = np.uint64(0x9E3779B97F4A7C15)
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * gamma
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix_uniform(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Float32 values in [-1, 1) from the top 24 bits of each SplitMix64 output."""
    top = (splitmix64(seed, n, offset) >> np.uint64(40)).astype(np.float32)
    return top * np.float32(2.0 ** -23) - np.float32(1)


@dataclass(frozen=True)
class FeaturePyramid:
    """Feature maps ``[F4, F3, F2, F1]``, each H x W x C, doubling in size."""

    maps: list[np.ndarray]

    def __post_init__(self):
        if len(self.maps) != len(SCALES):
            raise ShapeMismatch(f"need {len(SCALES)} feature maps, got {len(self.maps)}")
        maps = [np.ascontiguousarray(m if m.ndim == 3 else m[:, :, None], dtype=np.float32)
                for m in self.maps]
        for a, b in zip(maps, maps[1:]):
            if b.shape[:2] != (2 * a.shape[0], 2 * a.shape[1]):
                raise ShapeMismatch(f"feature chain broken: {a.shape[:2]} -> {b.shape[:2]}")
        object.__setattr__(self, "maps", maps)

    def for_scale(self, s: int) -> np.ndarray:
        return self.maps[3 - s]

    @property
    def output_shape(self) -> tuple[int, int]:
        h, w = self.maps[0].shape[:2]
        return 16 * h, 16 * w

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(m.shape[2] for m in self.maps)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for s in SCALES:
            write_tensor(self.for_scale(s), d / f"F{s + 1}.wmdt")

    @classmethod
    def load(cls, directory) -> "FeaturePyramid":
        d = Path(directory)
        missing = [f"F{s + 1}.wmdt" for s in SCALES if not (d / f"F{s + 1}.wmdt").exists()]
        if missing:
            raise FormatError(f"{d}: missing feature maps {missing}")
        return cls([read_tensor(d / f"F{s + 1}.wmdt") for s in SCALES])


def synth_features(seed: int, dims: tuple[int, int],
                   channels: Sequence[int] = DEFAULT_CHANNELS) -> FeaturePyramid:
    """Deterministic pseudo-random pyramid for an output of size ``dims``.

    Maps are filled in order F4, F3, F2, F1 from one SplitMix64 stream.
    """
    height, width = dims
    if height % 16 or width % 16:
        raise ShapeMismatch(f"output dims {height}x{width} must be divisible by 16")
    maps, offset = [], 0
    for factor, c in zip((16, 8, 4, 2), channels):
        shape = (height // factor, width // factor, int(c))
        n = int(np.prod(shape))
        maps.append(splitmix_uniform(seed, n, offset).reshape(shape))
        offset += n
    return FeaturePyramid(maps)


def scene_features(depth, channels: Sequence[int] = DEFAULT_CHANNELS,
                   seed: int = 0) -> FeaturePyramid:
    """Features that encode a known depth map for :func:`oracle_stack`.

    ``F_{s+1}`` holds ``[LL_s, LH_s, HL_s, HH_s]`` of the orthonormal Haar
    pyramid of ``depth`` followed by SplitMix64 noise channels.
    """
    pyr = dwt_pyramid(depth, 4)
    bands = reconstruct_bands(pyr)
    maps, offset = [], 0
    for i, c in enumerate(channels):
        if c < 4:
            raise ChannelMismatch(f"scene features need >= 4 channels, got {c}")
        lvl = pyr.levels[i]
        h, w = lvl.shape
        extra = (c - 4) * h * w
        noise = splitmix_uniform(seed, extra, offset).reshape(h, w, c - 4)
        offset += extra
        maps.append(np.concatenate(
            [np.stack([bands[i], lvl.lh, lvl.hl, lvl.hh], axis=2), noise], axis=2))
    return FeaturePyramid(maps)


# --------------------------------------------------------------------------
# layer stack


@dataclass(frozen=True)
class LayerStack:
    disp_head: list[ConvSpec]
    wave_heads: dict[int, WaveHeadSpec]
    disp_range: tuple[float, float] = DEFAULT_DISP_RANGE

    def __post_init__(self):
        if sorted(self.wave_heads) != sorted(SCALES):
            raise ShapeMismatch(f"need wave heads for scales {SCALES}, got {sorted(self.wave_heads)}")
        if not self.disp_head or self.disp_head[-1].c_out != 1:
            raise ShapeMismatch("disparity head must end in a 1-channel layer")
        for a, b in zip(self.disp_head, self.disp_head[1:]):
            if a.c_out != b.c_in:
                raise ShapeMismatch(f"disparity head link {a.c_out} -> {b.c_in} mismatched")
        if self.disp_head[0].c_in != self.wave_heads[3].c_in:
            raise ShapeMismatch("disparity head and scale-3 wave head must share F4")
        if not self.disp_range[0] < self.disp_range[1]:
            raise ValueError(f"disparity range inverted: {self.disp_range}")

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(self.wave_heads[s].c_in for s in SCALES)

    @property
    def sigmoid_disparity(self) -> bool:
        return self.disp_head[-1].activation == "sigmoid"


def default_stack(seed: int = 0, channels: Sequence[int] = DEFAULT_CHANNELS,
                  disp_range=DEFAULT_DISP_RANGE) -> LayerStack:
    """Randomly initialised stack with sigmoid disparity and two-sigmoid heads."""
    rng = np.random.default_rng(seed)
    c4 = channels[0]
    disp = [ConvSpec.random(rng, c4, max(1, c4 // 4), 1, "leaky_relu", 0.1),
            ConvSpec.random(rng, max(1, c4 // 4), 1, 3, "sigmoid")]
    heads = {}
    for s, c in zip(SCALES, channels):
        branches = [[ConvSpec.random(rng, c, c, 1, "leaky_relu", 0.1),
                     ConvSpec.random(rng, c, 3, 3, "sigmoid")] for _ in range(2)]
        heads[s] = WaveHeadSpec("two_sigmoid_difference", *branches)
    return LayerStack(disp, heads, tuple(disp_range))


def oracle_stack(channels: Sequence[int] = DEFAULT_CHANNELS) -> LayerStack:
    """Linear stack that copies channel 0 to LL3 and channels 1-3 to the details."""
    disp = ConvSpec.zeros(channels[0], 1, 3)
    disp.weights[0, 0, 1, 1] = 1
    heads = {}
    for s, c in zip(SCALES, channels):
        head = ConvSpec.zeros(c, 3, 3)
        for o in range(3):
            head.weights[o, 1 + o, 1, 1] = 1
        heads[s] = WaveHeadSpec("linear", [head])
    return LayerStack([disp], heads)


# ---- manifest I/O


def _layer_entry(spec: ConvSpec, name: str, directory: Path) -> dict:
    write_tensor(spec.weights.reshape(spec.c_out, -1), directory / f"{name}.w.wmdt")
    write_tensor(spec.bias.reshape(1, -1), directory / f"{name}.b.wmdt")
    return {"name": name, "c_in": spec.c_in, "c_out": spec.c_out, "k": spec.k,
            "activation": spec.activation, "slope": spec.slope,
            "weights": f"{name}.w.wmdt", "bias": f"{name}.b.wmdt"}


def _load_layer(entry: dict, directory: Path) -> ConvSpec:
    try:
        c_in, c_out, k = int(entry["c_in"]), int(entry["c_out"]), int(entry["k"])
        wpath, bpath = directory / entry["weights"], directory / entry["bias"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed layer entry: {exc!r}") from None
    for p in (wpath, bpath):
        if not p.exists():
            raise FormatError(f"missing blob {p.name}")
    w, b = read_tensor(wpath), read_tensor(bpath)
    if w.shape != (c_out, c_in * k * k):
        raise ShapeMismatch(
            f"{entry.get('name')}: weights {w.shape} do not match c_out={c_out}, c_in={c_in}, k={k}"
        )
    if b.shape != (1, c_out):
        raise ShapeMismatch(f"{entry.get('name')}: bias {b.shape} does not match c_out={c_out}")
    return ConvSpec(w.reshape(c_out, c_in, k, k), b.reshape(-1),
                    entry.get("activation", "linear"), float(entry.get("slope", 0.1)))


def save_stack(stack: LayerStack, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scales": len(SCALES),
        "disp_range": list(stack.disp_range),
        "disp_head": [_layer_entry(spec, f"disp4_{i + 1}", d)
                      for i, spec in enumerate(stack.disp_head)],
        "heads": [],
    }
    for s in SCALES:
        head = stack.wave_heads[s]
        entry = {"scale": s, "kind": head.kind}
        for key, chain in (("plus", head.plus), ("minus", head.minus)):
            if chain:
                entry[key] = [_layer_entry(spec, f"wave{s + 1}_{key}_{i + 1}", d)
                              for i, spec in enumerate(chain)]
        manifest["heads"].append(entry)
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_stack(path) -> LayerStack:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    d = path.parent
    if manifest.get("scales", len(SCALES)) != len(SCALES):
        raise FormatError(f"only {len(SCALES)}-scale stacks are supported")
    disp = [_load_layer(e, d) for e in manifest["disp_head"]]
    heads = {}
    for entry in manifest["heads"]:
        plus = [_load_layer(e, d) for e in entry.get("plus", [])]
        minus = [_load_layer(e, d) for e in entry.get("minus", [])]
        heads[int(entry["scale"])] = WaveHeadSpec(entry["kind"], plus, minus)
    rng = tuple(float(v) for v in manifest.get("disp_range", DEFAULT_DISP_RANGE))
    return LayerStack(disp, heads, rng)


# --------------------------------------------------------------------------
# decoding


@dataclass(frozen=True)
class DecoderRun:
    """Outputs of one decoder pass.

    ``depths`` holds the five low-pass maps at 1/16, 1/8, 1/4, 1/2 and full
    resolution; ``masks[i]``/``coefficients[i]`` belong to scale ``SCALES[i]``.
    """

    depths: list[np.ndarray]
    masks: list[np.ndarray]
    coefficients: list[WaveletLevel]
    thresholds: list[float]
    macs: MacReport = field(default_factory=MacReport)

    @property
    def psi(self) -> list[float]:
        return [sparsity_level(m) for m in self.masks]

    @property
    def depth(self) -> np.ndarray:
        return self.depths[-1]

    def mask_by_scale(self) -> dict[int, np.ndarray]:
        return dict(zip(SCALES, self.masks))

    def arch_report(self, layers: Sequence[LayerShape] | None = None) -> MacReport:
        """Cost of a full decoder (default layout at this resolution) under these masks."""
        if layers is None:
            layers = default_arch(*self.depth.shape)
        return arch_report(layers, self.mask_by_scale())

    def psi_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scale", "factor", "height", "width", "active", "psi", "eta_s"])
        for s, m, t in zip(SCALES, self.masks, [None] + list(self.thresholds)):
            writer.writerow([s, 2 ** (s + 1), m.shape[0], m.shape[1], int(np.count_nonzero(m)),
                             fmt_number(sparsity_level(m)), "" if t is None else repr(t)])
        return buf.getvalue()

    def dump(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for factor, depth in zip((16, 8, 4, 2, 1), self.depths):
            write_pfm(depth, d / f"depth_x{factor}.pfm")
        for s, m in zip(SCALES, self.masks):
            write_mask(m, d / f"mask_x{2 ** (s + 1)}.pgm")
        (d / "psi.csv").write_text(self.psi_csv())
        (d / "macs.csv").write_text(self.macs.to_csv())
        (d / "arch_macs.csv").write_text(self.arch_report().to_csv())


def run_decoder(features: FeaturePyramid, stack: LayerStack, eta: float,
                sparse: bool = True) -> DecoderRun:
    """Decode a depth map; ``sparse=False`` evaluates every head densely.

    The dense variant still derives masks (for reporting) but never gates the
    heads with them.
    """
    if features.channels != stack.channels:
        raise ChannelMismatch(
            f"feature channels {features.channels} do not match stack {stack.channels}"
        )
    report = MacReport()
    raw = run_chain(features.for_scale(3), stack.disp_head, None, report, "disp4", 3)[:, :, 0]
    ll = sigmoid_to_disparity(raw, *stack.disp_range) if stack.sigmoid_disparity else raw
    depths = [np.ascontiguousarray(ll)]
    mask = np.ones(ll.shape, dtype=bool)
    masks, coeffs, thresholds = [], [], []
    for s in SCALES:
        masks.append(mask)
        level = wave_head(features.for_scale(s), stack.wave_heads[s], mask if sparse else None,
                          report, f"wave{s + 1}", s)
        coeffs.append(level)
        ll = idwt_level(ll, level.lh, level.hl, level.hh)
        depths.append(ll)
        if s > 0:
            eta_s = scale_threshold(ll, eta)
            thresholds.append(eta_s)
            mask = get_sparse_mask(level, eta_s)
    return DecoderRun(depths, masks, coeffs, thresholds, report)
