"""Dense and mask-gated 2-D convolution plus the wavelet prediction heads.

Both convolution paths accumulate in float32 in the same fixed order (bias
first, then input channel, kernel row, kernel column), one elementwise
multiply and one add per tap.  The sparse path therefore reproduces the dense
result bit for bit at every active pixel while only touching active pixels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ChannelMismatch, ShapeMismatch
from .flops import MacReport
from .haar import WaveletLevel

ACTIVATIONS = ("linear", "sigmoid", "leaky_relu", "elu")
# largest float32 strictly below 1
_BELOW_ONE = np.nextafter(np.float32(1), np.float32(0))


@dataclass(frozen=True)
class ConvSpec:
    weights: np.ndarray  # (c_out, c_in, k, k)
    bias: np.ndarray  # (c_out,)
    activation: str = "linear"
    slope: float = 0.1

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
            raise ShapeMismatch(f"weights must be (c_out, c_in, k, k) with odd k, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeMismatch(f"bias shape {b.shape} does not match c_out={w.shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[2]

    @classmethod
    def zeros(cls, c_in: int, c_out: int, k: int = 3, activation: str = "linear",
              slope: float = 0.1) -> "ConvSpec":
        return cls(np.zeros((c_out, c_in, k, k), np.float32), np.zeros(c_out, np.float32),
                   activation, slope)

    @classmethod
    def random(cls, rng: np.random.Generator, c_in: int, c_out: int, k: int = 3,
               activation: str = "linear", slope: float = 0.1) -> "ConvSpec":
        """Uniform fan-in scaled initialisation."""
        bound = np.sqrt(3.0 / (c_in * k * k))
        w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(np.float32)
        b = rng.uniform(-0.1, 0.1, size=c_out).astype(np.float32)
        return cls(w, b, activation, slope)


def activate(z: np.ndarray, activation: str, slope: float = 0.1) -> np.ndarray:
    if activation == "linear":
        return z
    if activation == "sigmoid":
        with np.errstate(over="ignore"):
            return (np.float32(1) / (np.float32(1) + np.exp(-z))).astype(np.float32)
    if activation == "leaky_relu":
        return np.where(z >= 0, z, z * np.float32(slope))
    if activation == "elu":
        with np.errstate(over="ignore"):
            return np.where(z > 0, z, np.expm1(np.minimum(z, 0))).astype(np.float32)
    raise ValueError(f"unknown activation {activation!r}")


def _as_hwc(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ShapeMismatch(f"feature map must be HxW or HxWxC, got {x.shape}")
    return x


def _check(x: np.ndarray, spec: ConvSpec) -> None:
    if x.shape[2] != spec.c_in:
        raise ChannelMismatch(f"input has {x.shape[2]} channels, layer expects {spec.c_in}")


def _taps(spec: ConvSpec):
    w = spec.weights
    for ci in range(spec.c_in):
        for ky in range(spec.k):
            for kx in range(spec.k):
                yield ci, ky, kx, np.ascontiguousarray(w[:, ci, ky, kx])


def conv2d_dense(x, spec: ConvSpec, report: MacReport | None = None, name: str = "conv",
                 scale: int = 0) -> np.ndarray:
    """Zero-padded 'same' cross-correlation + bias + activation on every pixel."""
    x = _as_hwc(x)
    _check(x, spec)
    height, width = x.shape[:2]
    r = spec.k // 2
    xp = np.pad(x, ((r, r), (r, r), (0, 0)))
    acc = np.broadcast_to(spec.bias, (height, width, spec.c_out)).copy()
    for ci, ky, kx, wv in _taps(spec):
        acc += xp[ky : ky + height, kx : kx + width, ci][:, :, None] * wv
    if report is not None:
        report.record(name, spec, height, width, height * width, scale=scale)
    return activate(acc, spec.activation, spec.slope)


def conv2d_sparse(x, spec: ConvSpec, mask, report: MacReport | None = None,
                  name: str = "conv", scale: int = 0) -> np.ndarray:
    """Evaluate only where ``mask`` is set; all other outputs are exactly zero."""
    x = _as_hwc(x)
    _check(x, spec)
    height, width = x.shape[:2]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (height, width):
        raise ShapeMismatch(f"mask {mask.shape} does not match input {height}x{width}")
    ys, xs = np.nonzero(mask)
    n = ys.size
    out = np.zeros((height, width, spec.c_out), dtype=np.float32)
    if report is not None:
        report.record(name, spec, height, width, n, scale=scale)
    if n == 0:
        return out
    r = spec.k // 2
    xp = np.pad(x, ((r, r), (r, r), (0, 0)))
    acc = np.broadcast_to(spec.bias, (n, spec.c_out)).copy()
    for ci, ky, kx, wv in _taps(spec):
        acc += xp[ys + ky, xs + kx, ci][:, None] * wv
    out[ys, xs] = activate(acc, spec.activation, spec.slope)
    return out


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a ``(2r+1)`` square, clipped at the border."""
    if radius == 0:
        return mask
    height, width = mask.shape
    padded = np.pad(mask, radius)
    out = np.zeros_like(mask)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out |= padded[dy : dy + height, dx : dx + width]
    return out


def run_chain(x, chain: Sequence[ConvSpec], mask=None, report: MacReport | None = None,
              name: str = "chain", scale: int = 0) -> np.ndarray:
    """Apply a stack of convolutions so the last one is exact on ``mask``.

    Intermediate layers are evaluated on the mask dilated by the receptive
    field of the layers after them, which is what the final layer reads.
    """
    if mask is None:
        for i, spec in enumerate(chain):
            x = conv2d_dense(x, spec, report, f"{name}({i + 1})", scale)
        return x
    needed = [np.asarray(mask, dtype=bool)]
    for spec in reversed(chain[1:]):
        needed.append(dilate(needed[-1], spec.k // 2))
    needed.reverse()
    for i, (spec, m) in enumerate(zip(chain, needed)):
        x = conv2d_sparse(x, spec, m, report, f"{name}({i + 1})", scale)
    return x


# --------------------------------------------------------------------------
# wavelet heads

HEAD_KINDS = ("two_sigmoid_difference", "linear")


@dataclass(frozen=True)
class WaveHeadSpec:
    """Predicts (LH, HL, HH).

    ``two_sigmoid_difference`` outputs ``sigmoid(plus(f)) - sigmoid(minus(f))``
    where both branch chains end in a sigmoid layer; ``linear`` uses ``plus``
    alone.
    """

    kind: str
    plus: list[ConvSpec]
    minus: list[ConvSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}")
        branches = [self.plus, self.minus] if self.kind == HEAD_KINDS[0] else [self.plus]
        if self.kind == "linear" and self.minus:
            raise ValueError("linear head takes a single branch")
        for chain in branches:
            if not chain:
                raise ValueError(f"{self.kind} head needs non-empty branches")
            if chain[-1].c_out != 3:
                raise ShapeMismatch(f"head must output 3 channels, got {chain[-1].c_out}")
            for a, b in zip(chain, chain[1:]):
                if a.c_out != b.c_in:
                    raise ShapeMismatch(f"chain link {a.c_out} -> {b.c_in} mismatched")
        if self.kind == HEAD_KINDS[0]:
            if self.plus[0].c_in != self.minus[0].c_in:
                raise ShapeMismatch("plus/minus branches consume different channel counts")
            if self.plus[-1].activation != "sigmoid" or self.minus[-1].activation != "sigmoid":
                raise ValueError("two-sigmoid branches must end with a sigmoid layer")

    @property
    def c_in(self) -> int:
        return self.plus[0].c_in

    def branches(self) -> dict[str, list[ConvSpec]]:
        if self.kind == "linear":
            return {"": self.plus}
        return {"+": self.plus, "-": self.minus}


def wave_head(features, spec: WaveHeadSpec, mask=None, report: MacReport | None = None,
              name: str = "wave", scale: int = 0) -> WaveletLevel:
    """Evaluate a wavelet head; with a mask, inactive pixels are exactly zero."""
    f = _as_hwc(features)
    if f.shape[2] != spec.c_in:
        raise ChannelMismatch(f"features have {f.shape[2]} channels, head expects {spec.c_in}")
    outs = {}
    for sign, chain in spec.branches().items():
        outs[sign] = run_chain(f, chain, mask, report, f"{name}{sign}", scale)
    if spec.kind == "linear":
        coeffs = outs[""]
    else:
        coeffs = np.clip(outs["+"] - outs["-"], -_BELOW_ONE, _BELOW_ONE)
    return WaveletLevel(*(np.ascontiguousarray(coeffs[:, :, i]) for i in range(3)))
