"""``cytoseg`` command line: edf, segment, eval, synth and overlay subcommands."""

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from . import __version__
from . import io
from .core import EIGHT_CONNECTED
from .edf import FocusParams, fuse_edf
from .errors import CytosegError, InvalidInputError
from .metrics import match_and_score
from .pipeline import PipelineConfig, run_specimen, segment_edf
from .synthetic import SynthSpec, generate_specimen

PALETTE = [
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212), (0, 128, 128),
]
CLUMP_COLOR = (255, 225, 25)
NUCLEUS_COLOR = (40, 60, 255)


# ---------------------------------------------------------------------------
# argument types

def _odd(text):
    v = int(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"expected an odd positive integer, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _non_negative(text):
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {text}")
    return v


def _open_unit(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


def _grid(text):
    parts = text.lower().replace(",", "x").split("x")
    try:
        rows, cols = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text}") from None
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError(f"tile grid must be at least 1x1, got {text}")
    return rows, cols


def _parse_value(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "auto", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if "x" in low and all(p.strip().isdigit() for p in low.split("x")):
        return tuple(int(p) for p in low.split("x"))
    return text.strip()


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{n}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_").replace(".", "_")] = _parse_value(value)
    return values


def resolve_jobs(jobs):
    if jobs is not None:
        return jobs
    env = os.environ.get("CYTOSEG_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError(f"CYTOSEG_JOBS must be an integer, got {env!r}") from None
    return 1


# flag dest -> flat config key
_SEGMENT_FLAGS = {
    "alpha": "prior_alpha",
    "h": "h_maxima_h",
    "min_clump_area": "min_clump_area",
    "min_nucleus_area": "min_nucleus_area",
    "median_window": "median_window",
    "clahe_tiles": "clahe_tiles",
    "clahe_clip": "clahe_clip",
    "disc_radius": "nucleus_disc_radius",
    "threshold": "threshold_method",
    "polarity": "polarity",
    "focus_window": "focus_window",
    "smooth_window": "focus_smooth_window",
    "drlse_iters": "drlse_iterations",
    "drlse_mu": "drlse_mu",
    "drlse_lambda": "drlse_lam",
    "drlse_balloon": "drlse_balloon",
    "drlse_epsilon": "drlse_epsilon",
    "drlse_dt": "drlse_dt",
    "drlse_sigma": "drlse_sigma",
}


def resolve_config(args):
    """Defaults < config file < command-line flags."""
    values = read_config_file(args.config) if args.config else {}
    for dest, key in _SEGMENT_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[key] = v
    return PipelineConfig.from_flat(values)


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir, config, inputs, timings):
    _write_json(Path(out_dir) / "manifest.json", {
        "tool": "cytoseg",
        "version": __version__,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "timings_s": timings,
    })


def find_cell_masks(directory):
    """Per-cell mask files: ``<dir>/cells/cell_*.png`` or ``<dir>/cell_*.png``."""
    directory = Path(directory)
    sub = directory / "cells"
    base = sub if sub.is_dir() else directory
    return sorted(base.glob("cell_*.png"))


# ---------------------------------------------------------------------------
# commands

def cmd_edf(args):
    planes = io.read_stack(args.specimen_dir)
    edf = fuse_edf(planes, FocusParams(args.focus_window, args.smooth_window))
    io.write_gray(args.output, edf)
    print(f"wrote {args.output} ({len(planes)} planes, {edf.shape[1]}x{edf.shape[0]})")
    return 0


def write_result(out_dir, result, config):
    out_dir = Path(out_dir)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    for stale in cells_dir.glob("cell_*.png"):
        stale.unlink()
    io.write_gray(out_dir / "edf.png", result.edf)
    io.write_labels16(out_dir / "clumps.png", result.clump_labels.labels)
    io.write_mask(out_dir / "nuclei.png", result.nucleus_mask)
    for clump in result.clumps:
        for k, mask in enumerate(clump.cell_masks):
            io.write_mask(cells_dir / f"cell_{clump.clump_id}_{k}.png", mask)
    summary = result.summary()
    summary["parameters"] = config
    _write_json(out_dir / "result.json", summary)
    return summary


def cmd_segment(args):
    cfg = resolve_config(args)
    jobs = resolve_jobs(args.jobs)
    source = Path(args.input)
    timings = {}
    t0 = time.perf_counter()
    if source.is_dir():
        planes = io.read_stack(source)
        timings["read"] = time.perf_counter() - t0
        result = run_specimen(planes, cfg, jobs, timings)
    else:
        edf = io.read_gray(source)
        timings["read"] = time.perf_counter() - t0
        result = segment_edf(edf, cfg, jobs, timings)
    t1 = time.perf_counter()
    summary = write_result(args.output, result, cfg.to_dict())
    timings["write"] = time.perf_counter() - t1
    write_manifest(args.output, cfg.to_dict(), [source], timings)
    print(f"{summary['n_clumps']} clumps, {summary['n_nuclei']} nuclei, {summary['n_cells']} cells -> {args.output}")
    return 0


def cmd_eval(args):
    gt_files = find_cell_masks(args.gt_dir)
    if not gt_files:
        raise InvalidInputError(f"no ground-truth cell masks (cell_*.png) under {args.gt_dir}")
    pred_files = find_cell_masks(args.pred_dir)
    report = match_and_score([io.read_mask(f) for f in pred_files], [io.read_mask(f) for f in gt_files])
    out = report.to_dict()
    out["pred_files"] = [str(f) for f in pred_files]
    out["gt_files"] = [str(f) for f in gt_files]
    if args.output:
        _write_json(args.output, out)
    for line in report.table_lines():
        print(line)
    print(f"matched {report.n_matched}, unmatched pred {report.unmatched_pred}, unmatched gt {report.unmatched_gt}")
    return 0


def cmd_synth(args):
    spec = SynthSpec(seed=args.seed, image_size=args.size, cell_count=args.cells,
                     overlap_fraction=args.overlap, plane_count=args.planes)
    t0 = time.perf_counter()
    specimen = generate_specimen(spec)
    out = Path(args.output)
    io.write_stack(out, specimen.stack)
    gt = out / "gt"
    for k, mask in enumerate(specimen.cells):
        io.write_mask(gt / "cells" / f"cell_{k:03d}.png", mask)
    for k, mask in enumerate(specimen.nuclei):
        io.write_mask(gt / "nuclei" / f"nucleus_{k:03d}.png", mask)
    io.write_gray(gt / "reference.png", specimen.reference)
    spec_dict = {"seed": spec.seed, "image_size": spec.image_size, "cell_count": spec.cell_count,
                 "overlap_fraction": spec.overlap_fraction, "plane_count": spec.plane_count,
                 "cell_planes": specimen.cell_planes}
    _write_json(gt / "spec.json", spec_dict)
    write_manifest(out, spec_dict, [], {"generate": time.perf_counter() - t0})
    print(f"wrote {spec.plane_count} planes and {spec.cell_count} ground-truth cells to {out}")
    return 0


def _boundary(mask):
    return mask & ~ndi.binary_erosion(mask, structure=EIGHT_CONNECTED, border_value=0)


def render_overlay(edf, clump_labels, nuclei, cells):
    rgb = np.repeat(np.asarray(edf, dtype=np.uint8)[:, :, None], 3, axis=2)
    if not cells:
        # nothing was segmented into cells: show the EDF untouched
        return rgb
    if nuclei.any():
        blend = (0.5 * rgb[nuclei] + 0.5 * np.array(NUCLEUS_COLOR)).round()
        rgb[nuclei] = blend.astype(np.uint8)
    edges = np.zeros(clump_labels.shape, dtype=bool)
    for k in range(1, int(clump_labels.max(initial=0)) + 1):
        edges |= _boundary(clump_labels == k)
    rgb[edges] = CLUMP_COLOR
    for k, cell in enumerate(cells):
        rgb[_boundary(cell)] = PALETTE[k % len(PALETTE)]
    return rgb


def cmd_overlay(args):
    from PIL import Image

    result_dir = Path(args.result_dir)
    edf = io.read_gray(args.edf)
    clumps_path, nuclei_path = result_dir / "clumps.png", result_dir / "nuclei.png"
    for p in (clumps_path, nuclei_path):
        if not p.exists():
            raise InvalidInputError(f"missing {p}")
    labels = io.read_labels16(clumps_path)
    nuclei = io.read_mask(nuclei_path)
    cells = [io.read_mask(f) for f in find_cell_masks(result_dir)]
    for arr, name in ((labels, clumps_path), (nuclei, nuclei_path), *((c, "cell mask") for c in cells)):
        if arr.shape != edf.shape:
            raise InvalidInputError(f"{name}: shape {arr.shape} does not match EDF {edf.shape}")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(render_overlay(edf, labels, nuclei, cells), mode="RGB").save(out)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="cytoseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cytoseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edf", help="fuse a focal stack into one all-in-focus image")
    p.add_argument("specimen_dir")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--focus-window", type=_odd, default=9)
    p.add_argument("--smooth-window", type=_odd, default=9)
    p.set_defaults(func=cmd_edf)

    p = sub.add_parser("segment", help="segment clumps, nuclei and cells of one specimen")
    p.add_argument("input", help="specimen directory of plane images, or a single EDF image")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--jobs", type=_positive_int, help="worker threads (default: $CYTOSEG_JOBS or 1)")
    p.add_argument("--alpha", type=_open_unit, help="prior probability of the dark (nucleus) class")
    p.add_argument("--h", type=_positive_int, help="H-maxima height")
    p.add_argument("--min-clump-area", type=_non_negative)
    p.add_argument("--min-nucleus-area", type=_non_negative)
    p.add_argument("--median-window", type=_odd)
    p.add_argument("--clahe-tiles", type=_grid, help="ROWSxCOLS")
    p.add_argument("--clahe-clip", type=_open_unit)
    p.add_argument("--disc-radius", type=float)
    p.add_argument("--threshold", choices=["modified", "otsu"])
    p.add_argument("--polarity", choices=["bright_field", "dark_field"])
    p.add_argument("--focus-window", type=_odd)
    p.add_argument("--smooth-window", type=_odd)
    p.add_argument("--drlse-iters", type=int)
    p.add_argument("--drlse-mu", type=float)
    p.add_argument("--drlse-lambda", type=float)
    p.add_argument("--drlse-balloon", type=float)
    p.add_argument("--drlse-epsilon", type=float)
    p.add_argument("--drlse-dt", type=float)
    p.add_argument("--drlse-sigma", type=float)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score predicted cell masks against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("-o", "--output", help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic specimen with ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cells", type=int, default=3)
    p.add_argument("--overlap", type=float, default=0.3)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--planes", type=_positive_int, default=20)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("overlay", help="draw clumps, nuclei and cell contours over the EDF")
    p.add_argument("edf")
    p.add_argument("result_dir")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "segment":
        # configuration problems are usage errors, reported before any processing
        try:
            resolve_config(args)
        except (CytosegError, OSError, TypeError) as exc:
            parser.error(str(exc))
    try:
        return args.func(args)
    except (CytosegError, OSError) as exc:
        print(f"cytoseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
