"""Multiply-accumulate accounting for dense and mask-gated convolutions.

A ``K x K`` convolution with bias on an ``H x W`` map costs
``H * W * (C_in * K**2 + 1) * C_out`` multiply-adds; evaluating it only on a
fraction ``psi`` of the pixels costs ``psi`` times that.  Counts are exact
Python integers.  Sparse counts derived from a bare ``psi`` are kept as
:class:`fractions.Fraction` so that totals stay exactly proportional to
``psi``; counts derived from a concrete mask are integers.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError


def per_pixel_macs(spec) -> int:
    """``(C_in * K**2 + 1) * C_out`` for anything exposing ``c_in``, ``c_out``, ``k``."""
    return (int(spec.c_in) * int(spec.k) ** 2 + 1) * int(spec.c_out)


def mac_dense(spec, h: int, w: int) -> int:
    return int(h) * int(w) * per_pixel_macs(spec)


def _check_psi(psi) -> None:
    if not (0 <= psi <= 1):
        raise ValueError(f"sparsity level must lie in [0, 1], got {psi}")


def mac_sparse(spec, h: int, w: int, psi=None, *, active: int | None = None) -> int:
    """Sparse cost; an exact ``active`` pixel count takes precedence over ``psi``."""
    if active is None:
        if psi is None:
            raise ValueError("give either psi or active")
        _check_psi(psi)
        active = round(Fraction(psi) * int(h) * int(w))
    if not (0 <= active <= int(h) * int(w)):
        raise ValueError(f"active count {active} outside [0, {h * w}]")
    return int(active) * per_pixel_macs(spec)


def as_fraction(psi) -> Fraction:
    """Exact rational for a sparsity level; decimal strings stay decimal."""
    if isinstance(psi, Fraction):
        return psi
    if isinstance(psi, str):
        return Fraction(psi)
    if isinstance(psi, (int, np.integer)):
        return Fraction(int(psi))
    return Fraction(float(psi))


# --------------------------------------------------------------------------
# architecture description


@dataclass(frozen=True)
class LayerShape:
    """One convolution of a decoder, as listed in an architecture config.

    ``scale`` is the decoder scale whose mask gates the layer (3 at 1/16 of
    the output down to 0 at 1/2); layers coarser than every mask use 4.
    """

    name: str
    h: int
    w: int
    c_in: int
    c_out: int
    k: int = 3
    maskable: bool = True
    scale: int = 0


@dataclass(frozen=True)
class LayerCost:
    name: str
    h: int
    w: int
    c_in: int
    c_out: int
    k: int
    psi: Fraction
    mac_dense: int
    mac_sparse: Fraction
    maskable: bool = True
    scale: int = 0
    active: int | None = None


@dataclass
class MacReport:
    layers: list[LayerCost] = field(default_factory=list)

    def add(self, cost: LayerCost) -> None:
        self.layers.append(cost)

    def record(self, name: str, spec, h: int, w: int, active: int, *, scale: int = 0,
               maskable: bool = True) -> LayerCost:
        """Append an entry for a layer evaluated at ``active`` pixels."""
        cost = LayerCost(
            name=name, h=h, w=w, c_in=spec.c_in, c_out=spec.c_out, k=spec.k,
            psi=Fraction(active, h * w) if h * w else Fraction(0),
            mac_dense=mac_dense(spec, h, w),
            mac_sparse=Fraction(mac_sparse(spec, h, w, active=active)),
            maskable=maskable, scale=scale, active=active,
        )
        self.layers.append(cost)
        return cost

    def extend(self, other: "MacReport") -> None:
        self.layers.extend(other.layers)

    @property
    def total_dense(self) -> int:
        return sum(c.mac_dense for c in self.layers)

    @property
    def total_sparse(self) -> Fraction:
        return sum((c.mac_sparse for c in self.layers), Fraction(0))

    @property
    def ratio(self) -> Fraction:
        dense = self.total_dense
        return self.total_sparse / dense if dense else Fraction(1)

    @property
    def maskable_ratio(self) -> Fraction:
        dense = sum(c.mac_dense for c in self.layers if c.maskable)
        sparse = sum((c.mac_sparse for c in self.layers if c.maskable), Fraction(0))
        return sparse / dense if dense else Fraction(1)

    def by_scale(self) -> dict[int, tuple[int, Fraction]]:
        out: dict[int, tuple[int, Fraction]] = {}
        for c in self.layers:
            d, s = out.get(c.scale, (0, Fraction(0)))
            out[c.scale] = (d + c.mac_dense, s + c.mac_sparse)
        return out

    # ---- output

    CSV_FIELDS = ("name", "scale", "h", "w", "c_in", "c_out", "k", "maskable",
                  "active", "psi", "mac_dense", "mac_sparse")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        for c in self.layers:
            writer.writerow([
                c.name, c.scale, c.h, c.w, c.c_in, c.c_out, c.k, int(c.maskable),
                "" if c.active is None else c.active, fmt_number(c.psi),
                c.mac_dense, fmt_number(c.mac_sparse),
            ])
        writer.writerow(["TOTAL", "", "", "", "", "", "", "", "", fmt_number(self.ratio),
                         self.total_dense, fmt_number(self.total_sparse)])
        return buf.getvalue()

    def format_table(self) -> str:
        rows = [("layer", "scale", "HxW", "Cin", "Cout", "k", "psi", "MAC dense", "MAC sparse")]
        for c in self.layers:
            rows.append((c.name, str(c.scale), f"{c.h}x{c.w}", str(c.c_in), str(c.c_out),
                         str(c.k), f"{float(c.psi):.4f}", f"{c.mac_dense:,}",
                         f"{float(c.mac_sparse):,.0f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(v.rjust(wd) if i else v.ljust(wd) for i, (v, wd) in
                           enumerate(zip(r, widths))) for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        dense, sparse = self.total_dense, self.total_sparse
        lines.append("-" * len(lines[0]))
        lines.append(f"total MACs  dense {dense:,}  sparse {float(sparse):,.0f}")
        lines.append(f"total FLOPs (2 x MAC)  dense {2 * dense:,}  sparse {float(2 * sparse):,.0f}")
        ratio = float(self.ratio)
        factor = f"{1 / ratio:.2f}x" if ratio else "inf"
        lines.append(f"sparse/dense ratio {ratio:.6f}  (reduction {factor})")
        lines.append(f"maskable-layer ratio {float(self.maskable_ratio):.6f}")
        return "\n".join(lines)


def fmt_number(x) -> str:
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        return repr(float(x))
    return str(x)


# --------------------------------------------------------------------------
# reference decoder layout

# encoder skip channels at strides 2, 4, 8, 16, 32
RESNET50_CHANNELS = (64, 256, 512, 1024, 2048)
RESNET18_CHANNELS = (64, 64, 128, 256, 512)
DECODER_CHANNELS = (32, 64, 128, 256, 256)  # iconv1..iconv4, upconv5


def _wave_head_layers(j: int, h: int, w: int, c: int, scale: int) -> list[LayerShape]:
    out = []
    for sign in "+-":
        out.append(LayerShape(f"wave{j}(1{sign})", h, w, c, c, 1, True, scale))
        out.append(LayerShape(f"wave{j}(2{sign})", h, w, c, 3, 3, True, scale))
    return out


def default_arch(height: int, width: int, encoder=RESNET50_CHANNELS) -> list[LayerShape]:
    """Wavelet decoder on a ResNet encoder, with two-sigmoid wavelet heads.

    Nearest-neighbour upsampling, skip concatenation, the sigmoid-difference
    and the IDWT carry no multiply-adds and are not listed.
    """
    if height % 32 or width % 32:
        raise ValueError(f"{height}x{width} must be divisible by 32")
    enc1, enc2, enc3, enc4, enc5 = encoder
    d1, d2, d3, d4, d5 = DECODER_CHANNELS

    def dims(f):
        return height // f, width // f

    layers = [LayerShape("upconv5", *dims(32), enc5, d5, 3, False, 4)]
    h, w = dims(16)
    layers += [
        LayerShape("iconv4", h, w, d5 + enc4, d4, 3, True, 3),
        LayerShape("disp4(1)", h, w, d4, d4 // 4, 1, True, 3),
        LayerShape("disp4(2)", h, w, d4 // 4, 1, 3, True, 3),
        *_wave_head_layers(4, h, w, d4, 3),
        LayerShape("upconv4", h, w, d4, d3, 3, True, 3),
    ]
    h, w = dims(8)
    layers += [
        LayerShape("iconv3", h, w, d3 + enc3, d3, 3, True, 2),
        *_wave_head_layers(3, h, w, d3, 2),
        LayerShape("upconv3", h, w, d3, d2, 3, True, 2),
    ]
    h, w = dims(4)
    layers += [
        LayerShape("iconv2", h, w, d2 + enc2, d2, 3, True, 1),
        *_wave_head_layers(2, h, w, d2, 1),
        LayerShape("upconv2", h, w, d2, d1, 3, True, 1),
    ]
    h, w = dims(2)
    layers += [
        LayerShape("iconv1", h, w, d1 + enc1, d1, 3, True, 0),
        *_wave_head_layers(1, h, w, d1, 0),
    ]
    return layers


def load_arch(path) -> list[LayerShape]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(raw, dict):
        raw = raw.get("layers")
    if not isinstance(raw, list) or not raw:
        raise FormatError(f"{path}: expected a non-empty list of layers")
    layers = []
    for i, entry in enumerate(raw):
        try:
            layer = LayerShape(
                name=str(entry["name"]), h=int(entry["h"]), w=int(entry["w"]),
                c_in=int(entry["c_in"]), c_out=int(entry["c_out"]),
                k=int(entry.get("k", 3)), maskable=bool(entry.get("maskable", True)),
                scale=int(entry.get("scale", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: layer {i} malformed: {exc!r}") from None
        if min(layer.h, layer.w, layer.c_in, layer.c_out, layer.k) < 0:
            raise FormatError(f"{path}: layer {i} has negative dimensions")
        layers.append(layer)
    return layers


def save_arch(layers: Iterable[LayerShape], path) -> None:
    Path(path).write_text(json.dumps([asdict(l) for l in layers], indent=2) + "\n")


def arch_report(layers: Iterable[LayerShape], psi: Mapping[int, object] | object = 1,
                ) -> MacReport:
    """Cost of every layer given a sparsity level per scale.

    ``psi`` is either one value for all maskable layers or a mapping from
    scale to a value.  A value may be a sparsity level (number, string or
    Fraction) or a boolean mask whose shape matches the layer, in which case
    its exact active count is used.  Non-maskable layers and scales missing
    from the mapping are dense.
    """
    report = MacReport()
    for layer in layers:
        value = psi.get(layer.scale, 1) if isinstance(psi, Mapping) else psi
        if not layer.maskable:
            value = 1
        dense = mac_dense(layer, layer.h, layer.w)
        active = None
        if isinstance(value, np.ndarray):
            if value.shape != (layer.h, layer.w):
                raise ValueError(
                    f"mask {value.shape} does not match layer {layer.name} ({layer.h}x{layer.w})"
                )
            active = int(np.count_nonzero(value))
            p = Fraction(active, layer.h * layer.w)
            sparse = Fraction(mac_sparse(layer, layer.h, layer.w, active=active))
        else:
            p = as_fraction(value)
            _check_psi(p)
            sparse = p * dense
        report.add(LayerCost(layer.name, layer.h, layer.w, layer.c_in, layer.c_out, layer.k,
                             p, dense, sparse, layer.maskable, layer.scale, active))
    return report
