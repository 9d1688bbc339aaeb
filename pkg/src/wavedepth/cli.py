"""Command-line entry point: ``wavedepth <command> ...``.

Commands
    scene       write a seeded synthetic depth scene (and a perturbed prediction)
    analyze     threshold-sweep a depth map in the Haar domain -> CSV
    decode      run the sparse wavelet decoder -> directory of PFM/PGM/CSV
    flops       dense vs sparse multiply-add report for an architecture
    eval        depth metrics of a prediction against ground truth -> CSV
    init-stack  write a decoder weight manifest (random or oracle)
    arch        write the default decoder architecture config

Outputs are staged in a temporary location and moved into place only after
the command succeeds, so a failing command leaves no partial files behind.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .decoder import (
    SCALES,
    FeaturePyramid,
    default_stack,
    load_stack,
    oracle_stack,
    run_decoder,
    save_stack,
    scene_features,
    synth_features,
)
from .errors import FormatError, WavedepthError
from .flops import (
    RESNET18_CHANNELS,
    RESNET50_CHANNELS,
    arch_report,
    default_arch,
    load_arch,
    save_arch,
)
from .haar import dwt_pyramid, idwt_pyramid
from .metrics import PRESETS, EvalConfig, depth_metrics, metrics_csv, relative_change
from .scenes import error_field, piecewise_scene
from .sparsity import (
    KeepTopFraction,
    dropped_energy,
    emulate_masks,
    keep_count,
    level_support,
    threshold_pyramid,
)
from .tensor import crop_to_dyadic, read_mask, read_pfm, write_pfm

ENCODERS = {"resnet50": RESNET50_CHANNELS, "resnet18": RESNET18_CHANNELS}
REFERENCE_NOTE = "reference: about 3x fewer decoder FLOPs reported at 320x1024 with eta=0.05"


def thread_count() -> int:
    raw = os.environ.get("WAVEDEPTH_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise WavedepthError(f"WAVEDEPTH_THREADS must be an integer, got {raw!r}") from None


@contextlib.contextmanager
def staged_file(target):
    """Yield a temporary path that replaces ``target`` only on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@contextlib.contextmanager
def staged_dir(target):
    """Yield a temporary directory whose files are moved into ``target`` on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield tmp
        target.mkdir(exist_ok=True)
        for item in sorted(tmp.iterdir()):
            os.replace(item, target / item.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_text(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with staged_file(out) as tmp:
        tmp.write_text(text)


# --------------------------------------------------------------------------
# scene


def cmd_scene(args) -> None:
    scene = piecewise_scene(args.seed, args.height, args.width, n_rects=args.rects,
                            ramp=not args.flat, align=args.align)
    with contextlib.ExitStack() as stack:
        if args.gt_out:
            pred = scene.depth.astype(np.float64) * error_field(args.seed, args.height, args.width)
            gt_tmp = stack.enter_context(staged_file(args.gt_out))
            write_pfm(scene.depth, gt_tmp)
            depth = pred.astype(np.float32)
        else:
            depth = scene.depth
        out_tmp = stack.enter_context(staged_file(args.out))
        write_pfm(depth, out_tmp)


# --------------------------------------------------------------------------
# analyze


def _sweep_point(pyr, gt, cfg, baseline, mode: str, value: float, shape):
    if mode == "eta":
        analysis = emulate_masks(pyr, value)
        thr = analysis.pyramid
        masks = analysis.masks
    else:
        thr = threshold_pyramid(pyr, KeepTopFraction(value))
        masks = [level_support(lvl) for lvl in thr.levels]
    recon = idwt_pyramid(thr)
    m = depth_metrics(recon, gt, cfg)
    # against the input itself the baseline is reconstruction roundoff only
    rel = relative_change(m, baseline) if baseline else dict.fromkeys(m.as_dict())
    total = pyr.detail_count()
    kept = sum(int(np.count_nonzero(b)) for lvl in thr.levels for b in lvl.bands())
    mac_ratio = ""
    if pyr.depth == len(SCALES) and shape[0] % 32 == 0 and shape[1] % 32 == 0:
        by_scale = {pyr.depth - 1 - i: mk for i, mk in enumerate(masks)}
        mac_ratio = repr(float(arch_report(default_arch(*shape), by_scale).ratio))
    row = {
        "eta": repr(value) if mode == "eta" else "",
        "rho": repr(value) if mode == "rho" else "",
    }
    for i, mk in enumerate(masks):
        row[f"psi_s{pyr.depth - 1 - i}"] = repr(float(np.count_nonzero(mk)) / mk.size)
    row["kept_fraction"] = repr(kept / total if total else 1.0)
    row["dropped_energy"] = repr(dropped_energy(pyr, thr))
    for name, v in m.as_dict().items():
        row[name] = repr(v)
    for name, v in rel.items():
        row[f"rel_{name}"] = "nan" if v is None else repr(v)
    row["mac_ratio"] = mac_ratio
    return row


def analyze(depth, gt=None, levels: int = 4, etas=(), rhos=(), preset: str = "kitti",
            threads: int = 1) -> list[dict[str, str]]:
    """Sweep rows for every eta (mask emulation) then every rho (keep-top fraction).

    Relative changes are taken against the dense reconstruction; without a
    separate ground truth they are undefined and written as ``nan``.
    """
    pred = crop_to_dyadic(depth, levels)
    self_ref = gt is None
    gt = pred if self_ref else crop_to_dyadic(gt, levels)
    if gt.shape != pred.shape:
        raise FormatError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    cfg = PRESETS[preset]
    pyr = dwt_pyramid(pred, levels)
    baseline = None if self_ref else depth_metrics(idwt_pyramid(pyr), gt, cfg)
    points = [("eta", float(e)) for e in etas] + [("rho", float(r)) for r in rhos]
    for mode, v in points:
        if mode == "rho":
            KeepTopFraction(v)
        elif v < 0:
            raise ValueError(f"eta must be non-negative, got {v}")

    def work(point):
        return _sweep_point(pyr, gt, cfg, baseline, *point, pred.shape)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(work, points))


def rows_to_csv(rows: list[dict[str, str]]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def cmd_analyze(args) -> None:
    if not args.eta and not args.rho:
        raise WavedepthError("give at least one --eta or --rho")
    depth = read_pfm(args.depth)
    gt = read_pfm(args.gt) if args.gt else None
    rows = analyze(depth, gt, args.levels, args.eta, args.rho, args.preset, thread_count())
    _write_text(rows_to_csv(rows), args.out)


# --------------------------------------------------------------------------
# decode


def cmd_decode(args) -> None:
    stack = load_stack(args.weights)
    if args.features:
        features = FeaturePyramid.load(args.features)
    elif args.scene:
        features = scene_features(read_pfm(args.scene), stack.channels, args.seed or 0)
    else:
        features = synth_features(args.synth, (args.height, args.width), stack.channels)
    run = run_decoder(features, stack, args.eta)
    with staged_dir(args.out) as tmp:
        run.dump(tmp)
    report = run.arch_report()
    print(f"psi per scale (s=3..0): {' '.join(f'{p:.4f}' for p in run.psi)}")
    print(f"executed-layer MAC ratio {float(run.macs.ratio):.6f}")
    print(f"decoder MAC ratio {float(report.ratio):.6f}")


# --------------------------------------------------------------------------
# flops


def _psi_arg(values):
    fracs = [Fraction(v) for v in values]
    if len(fracs) == 1:
        return fracs[0]
    if len(fracs) == len(SCALES):
        return dict(zip(SCALES, fracs))
    raise WavedepthError(f"--psi takes 1 value or {len(SCALES)} values (scales 3..0)")


def load_run_masks(run_dir) -> dict[int, np.ndarray]:
    d = Path(run_dir)
    masks = {}
    for s in SCALES:
        path = d / f"mask_x{2 ** (s + 1)}.pgm"
        if not path.exists():
            raise FormatError(f"{d}: missing {path.name}")
        masks[s] = read_mask(path)
    return masks


def cmd_flops(args) -> None:
    layers = load_arch(args.arch)
    if args.run:
        psi = load_run_masks(args.run)
    elif args.psi:
        psi = _psi_arg(args.psi)
    else:
        psi = Fraction(1)
    report = arch_report(layers, psi)
    print(report.format_table())
    print(REFERENCE_NOTE)
    if args.out:
        _write_text(report.to_csv(), args.out)


# --------------------------------------------------------------------------
# eval


def cmd_eval(args) -> None:
    pred, gt = read_pfm(args.pred), read_pfm(args.gt)
    base = PRESETS[args.preset]
    cfg = EvalConfig(
        args.min_depth if args.min_depth is not None else base.min_depth,
        args.max_depth if args.max_depth is not None else base.max_depth,
        tuple(args.crop) if args.crop else None,
        args.median_scaling,
    )
    _write_text(metrics_csv(depth_metrics(pred, gt, cfg), args.preset), args.out)


# --------------------------------------------------------------------------
# helpers


def cmd_init_stack(args) -> None:
    channels = tuple(int(c) for c in args.channels.split(","))
    stack = oracle_stack(channels) if args.oracle else default_stack(args.seed, channels)
    with staged_dir(args.out) as tmp:
        save_stack(stack, tmp)


def cmd_arch(args) -> None:
    layers = default_arch(args.height, args.width, ENCODERS[args.encoder])
    with staged_file(args.out) as tmp:
        save_arch(layers, tmp)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavedepth", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scene", help="write a synthetic depth scene")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--height", type=int, default=480)
    s.add_argument("--width", type=int, default=640)
    s.add_argument("--rects", type=int, default=6)
    s.add_argument("--align", type=int, default=1, help="snap rectangle corners to this grid")
    s.add_argument("--flat", action="store_true", help="constant background, no ramp")
    s.add_argument("--gt-out", help="also write the clean scene here; --out gets a perturbed copy")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scene)

    a = sub.add_parser("analyze", help="Haar-domain sparsification sweep")
    a.add_argument("depth")
    a.add_argument("--gt", help="ground truth PFM (default: the input itself)")
    a.add_argument("--levels", type=int, default=4)
    a.add_argument("--eta", type=float, action="append", default=[])
    a.add_argument("--rho", type=float, action="append", default=[])
    a.add_argument("--preset", choices=sorted(PRESETS), default="kitti")
    a.add_argument("--out", help="CSV path (default: stdout)")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("decode", help="run the sparse wavelet decoder")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", help="directory with F1..F4.wmdt")
    src.add_argument("--synth", type=int, metavar="SEED", help="pseudo-random features")
    src.add_argument("--scene", metavar="PFM", help="features encoding this depth map")
    d.add_argument("--weights", required=True, help="stack manifest (file or directory)")
    d.add_argument("--eta", type=float, default=0.05)
    d.add_argument("--seed", type=int, default=0, help="noise seed for --scene features")
    d.add_argument("--height", type=int, default=320)
    d.add_argument("--width", type=int, default=1024)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    f = sub.add_parser("flops", help="dense vs sparse multiply-add report")
    f.add_argument("arch", help="architecture JSON")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--psi", action="append", help="uniform value, or 4 values for scales 3..0")
    g.add_argument("--run", help="decode output directory; uses its masks")
    f.add_argument("--out", help="CSV path")
    f.set_defaults(func=cmd_flops)

    e = sub.add_parser("eval", help="depth metrics")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--preset", choices=sorted(PRESETS), default="kitti")
    e.add_argument("--min-depth", type=float)
    e.add_argument("--max-depth", type=float)
    e.add_argument("--crop", type=int, nargs=4, metavar=("TOP", "BOTTOM", "LEFT", "RIGHT"))
    e.add_argument("--median-scaling", action="store_true")
    e.add_argument("--out", help="CSV path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("init-stack", help="write a decoder weight manifest")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--channels", default="256,128,64,32", help="F4,F3,F2,F1 channel counts")
    i.add_argument("--oracle", action="store_true", help="linear pass-through stack for --scene")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_init_stack)

    r = sub.add_parser("arch", help="write the default decoder architecture")
    r.add_argument("--height", type=int, default=320)
    r.add_argument("--width", type=int, default=1024)
    r.add_argument("--encoder", choices=sorted(ENCODERS), default="resnet50")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_arch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (WavedepthError, ValueError, OSError) as exc:
        print(f"wavedepth {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
