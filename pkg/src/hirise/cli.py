"""Command-line entry point: simulate, cost, sweep and validate.

Exit codes: 0 ok, 1 I/O error, 2 configuration error, 3 model divergence.
"""

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from hirise import cost
from hirise.boxes import RoiBox
from hirise.errors import ConfigError, HiriseError
from hirise.protocol import (
    ledger_mismatches, oracle_detector, run_baseline, run_two_stage, session_costs,
)
from hirise.sensor import CircuitParams, ColorMode, PixelArray, SensorConfig, read_ppm
from hirise.workload import (
    AnnotatedFrame, load_annotations, load_band, load_sweep_spec, place_boxes, reports_to_json,
    run_sweep, synth_scene, write_long_csv, write_sweep_csv,
)

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3

log = logging.getLogger("hirise")


class Divergence(Exception):
    pass


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("HIRISE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"HIRISE_SEED must be an integer, got {env!r}") from None


def _box_spec(text):
    """'0', '16x112x112' (count x W x H) or '112x112' (one box)."""
    parts = text.lower().split("x")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad box spec {text!r}") from None
    if nums == [0]:
        return 0, 0, 0
    if len(nums) == 2:
        return 1, nums[0], nums[1]
    if len(nums) == 3:
        return tuple(nums)
    raise argparse.ArgumentTypeError(f"bad box spec {text!r}; use JxWxH")


def _xywh(text):
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad box {text!r}; use x,y,W,H") from None
    return x, y, w, h


def _add_sensor_flags(p):
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--pool-k", type=int, default=1)
    p.add_argument("--color", choices=[c.value for c in ColorMode], default="rgb",
                   help="stage-1 color mode")
    p.add_argument("--adc-bits", type=int, default=8)
    p.add_argument("--word-bits", type=int, default=16)
    p.add_argument("--seed", type=int, default=None, help="falls back to $HIRISE_SEED, then 0")


def _add_energy_flags(p):
    p.add_argument("--e-adc", type=float, default=None, help="joules per conversion")
    p.add_argument("--e-pool", type=float, default=0.0, help="pooling joules per frame")
    p.add_argument("--e-transfer-bit", type=float, default=0.0)


def _energy_params(args):
    return cost.EnergyParams(
        cost.DEFAULT_E_ADC if args.e_adc is None else args.e_adc,
        args.e_pool,
        args.e_transfer_bit,
    )


def _output(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def _sensor_config(args):
    return SensorConfig(args.width, args.height, args.pool_k, ColorMode(args.color),
                        args.adc_bits, vdd=args.vdd, word_bits=args.word_bits,
                        circuit=CircuitParams(mismatch_sigma=args.mismatch_sigma,
                                              rng_seed=_seed(args)))


def _simulate_frames(args):
    seed = _seed(args)
    if args.synthetic:
        j, w, h = args.boxes
        src, frame = synth_scene(args.width, args.height, j, w or 1, h or 1, seed, args.vdd)
        yield frame, src
    if args.ppm:
        src = read_ppm(args.ppm, args.vdd)
        boxes = [RoiBox(*b) for b in args.box]
        yield AnnotatedFrame(Path(args.ppm).stem, src.width, src.height, boxes, args.ppm), src
    if args.annotations:
        loaded = load_annotations(args.annotations)
        for lineno, msg in loaded.errors:
            log.warning("%s:%d: %s", args.annotations, lineno, msg)
        base = Path(args.annotations).parent
        for frame in sorted(loaded.frames, key=lambda f: f.frame_id):
            if frame.image:
                src = read_ppm(base / frame.image, args.vdd)
            else:
                src = PixelArray(np.zeros((frame.height, frame.width, 3)), args.vdd)
            yield frame, src


def cmd_simulate(args):
    if not (args.synthetic or args.ppm or args.annotations):
        raise ConfigError("give --synthetic, --ppm or --annotations")
    out_frames = []
    for frame, src in _simulate_frames(args):
        if (src.width, src.height) != (args.width, args.height):
            args.width, args.height = src.width, src.height
        cfg = _sensor_config(args)
        trace = run_two_stage(src, cfg, oracle_detector(frame.boxes, cfg.k))
        base = run_baseline(src, cfg)
        sp, ps = trace.ledger.bytes_s_to_p, trace.ledger.bytes_p_to_s
        base_bytes = base.ledger.bytes_s_to_p
        print(f"{frame.frame_id}: hirise s->p={sp} B p->s={ps} B "
              f"conversions={trace.ledger.total_conversions}; baseline {base_bytes} B "
              f"conversions={base.ledger.total_conversions}; "
              f"data reduction {base_bytes / (sp + ps):.2f}x")
        out_frames.append({"id": frame.frame_id, "hirise": trace.to_dict(),
                           "baseline": base.to_dict()})
    doc = {"config": {"width": args.width, "height": args.height, "pool_k": args.pool_k,
                      "color": args.color, "adc_bits": args.adc_bits,
                      "word_bits": args.word_bits, "seed": _seed(args)},
           "frames": out_frames}
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_cost(args):
    rois = []
    if args.load_s:
        rois += load_band(args.width, args.height, args.load_s)
    if args.boxes and args.boxes[0]:
        j, w, h = args.boxes
        rois += place_boxes(args.width, args.height, j, w, h, _seed(args))
    channels = args.stage1_channels or ColorMode(args.color).channels
    inputs = cost.CostInputs(args.width, args.height, args.pool_k, args.adc_bits,
                             args.word_bits, channels, tuple(rois), args.memory_mode,
                             args.dedup_union)
    rep = cost.analytical_costs(inputs)
    en = cost.energy(rep, _energy_params(args))
    with _output(args.output) as fh:
        if args.format == "csv":
            writer = csv.DictWriter(fh, fieldnames=cost.CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerow(cost.csv_row(rep, en))
        else:
            doc = {"costs": rep.to_dict(), "energy": en.to_dict()}
            if rep.d_new:
                red = cost.reduction_factors(rep)
                frac = cost.stage_fractions(rep)
                doc["reductions"] = {"data": float(red.data), "memory": float(red.memory),
                                     "conversion": float(red.conversion)}
                doc["stage_fractions"] = {"stage1": frac.stage1, "stage2": frac.stage2,
                                          "request": frac.request}
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _resolve_spec(path):
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("hirise.fixtures").joinpath(p.name)
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"sweep spec not found: {path}")


def cmd_sweep(args):
    spec = load_sweep_spec(_resolve_spec(args.spec))
    frames = []
    if args.annotations:
        loaded = load_annotations(args.annotations)
        frames = loaded.frames
        for lineno, msg in loaded.errors:
            log.warning("%s:%d: %s", args.annotations, lineno, msg)
    energy = _energy_params(args) if args.e_adc is not None else None
    if energy is not None:
        spec.energy = energy
    reports = run_sweep(spec, frames, energy, workers=args.workers)
    for rep in reports:
        if rep.error:
            log.warning("%s: %s", rep.config.label, rep.error)
    with _output(args.output) as fh:
        if args.format == "json":
            json.dump(reports_to_json(reports), fh, indent=2)
            fh.write("\n")
        else:
            write_sweep_csv(reports, fh)
    if args.long:
        write_long_csv(reports, args.long)
    return EXIT_OK


def random_config(rng):
    """A small random sensor configuration plus annotation boxes for validation."""
    k = int(rng.integers(1, 9))
    n = k * int(rng.integers(1, 64 // k + 1))
    m = k * int(rng.integers(1, 64 // k + 1))
    cfg = SensorConfig(n, m, k,
                       ColorMode.GRAY if rng.random() < 0.5 else ColorMode.RGB,
                       adc_bits=int(rng.integers(1, 17)),
                       word_bits=int(rng.choice([8, 16, 32])))
    boxes = []
    for _ in range(int(rng.integers(0, 9))):
        w = int(rng.integers(1, n + 1))
        h = int(rng.integers(1, m + 1))
        boxes.append(RoiBox(int(rng.integers(0, n - w + 1)), int(rng.integers(0, m - h + 1)), w, h))
    return cfg, boxes


def validate_trial(rng):
    cfg, boxes = random_config(rng)
    src = PixelArray(rng.uniform(0.0, 1.0, size=(cfg.m, cfg.n, 3)))
    memory_mode = cost.STREAMED if rng.random() < 0.5 else cost.BATCHED
    trace = run_two_stage(src, cfg, oracle_detector(boxes, cfg.k))
    ledger = session_costs(trace, run_baseline(src, cfg))
    inputs = cost.CostInputs(cfg.n, cfg.m, cfg.k, cfg.adc_bits, cfg.word_bits,
                             cfg.stage1_channels, tuple(trace.roi_boxes), memory_mode)
    return cfg, ledger_mismatches(ledger, cost.analytical_costs(inputs), memory_mode)


def cmd_validate(args):
    if args.trials == 0:
        print("warning: 0 trials requested, nothing validated", file=sys.stderr)
        return EXIT_OK
    rng = np.random.default_rng(_seed(args))
    for trial in range(args.trials):
        cfg, diffs = validate_trial(rng)
        if diffs:
            dump = "; ".join(f"{name}: ledger={got} formula={want}" for name, got, want in diffs)
            raise Divergence(f"trial {trial} ({cfg.n}x{cfg.m} k={cfg.k} "
                             f"{cfg.color_mode.value} P={cfg.adc_bits}): {dump}")
    print(f"{args.trials} trials: ledger matches formulas on every field")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hirise", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", allow_abbrev=False, help="run the two-stage protocol and the baseline")
    _add_sensor_flags(p)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--ppm")
    p.add_argument("--annotations")
    p.add_argument("--boxes", type=_box_spec, default=(0, 0, 0),
                   help="synthetic ROIs as JxWxH, or 0")
    p.add_argument("--box", type=_xywh, action="append", default=[],
                   help="x,y,W,H annotation for --ppm (repeatable)")
    p.add_argument("--vdd", type=float, default=1.0)
    p.add_argument("--mismatch-sigma", type=float, default=0.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cost", allow_abbrev=False, help="evaluate the closed-form model for one config")
    _add_sensor_flags(p)
    _add_energy_flags(p)
    p.add_argument("--stage1-channels", type=int, choices=[1, 3], default=None)
    p.add_argument("--load-s", type=float, default=0.0,
                   help="ROI pixels as a fraction of the array")
    p.add_argument("--boxes", type=_box_spec, default=(0, 0, 0))
    p.add_argument("--memory-mode", choices=[cost.STREAMED, cost.BATCHED], default=cost.STREAMED)
    p.add_argument("--dedup-union", action="store_true")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("sweep", allow_abbrev=False, help="run a sweep spec and write one row per config")
    _add_energy_flags(p)
    p.add_argument("--spec", required=True)
    p.add_argument("--annotations")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--long", help="also write (config, metric, value) CSV here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", allow_abbrev=False, help="check ledger totals against the formulas")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_validate)
    return parser


def _fail(code, exc):
    print(f"error[{code}]: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Divergence as exc:
        return _fail(EXIT_DIVERGENCE, exc)
    except (HiriseError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
