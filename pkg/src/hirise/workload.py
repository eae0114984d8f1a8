"""Annotation ingestion, synthetic scenes and design-space sweeps."""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from hirise import cost
from hirise.boxes import RoiBox, clamp_box
from hirise.errors import ConfigError, GeometryError, HiriseError
from hirise.protocol import (
    ledger_mismatches, oracle_detector, run_baseline, run_two_stage, session_costs,
)
from hirise.sensor import ColorMode, PixelArray, SensorConfig

log = logging.getLogger(__name__)


@dataclass
class AnnotatedFrame:
    frame_id: str
    width: int
    height: int
    boxes: list = field(default_factory=list)
    image: Optional[str] = None

    def to_json(self):
        out = {"id": self.frame_id, "w": self.width, "h": self.height,
               "boxes": [b.as_list() + ([b.class_id] if b.class_id else []) for b in self.boxes]}
        if self.image:
            out["image"] = self.image
        return out


class AnnotationLoad(NamedTuple):
    frames: list
    errors: list  # (line number, message)
    warnings: int


def _parse_frame(obj):
    frame_id = str(obj["id"])
    w, h = int(obj["w"]), int(obj["h"])
    if w <= 0 or h <= 0:
        raise ValueError(f"frame size must be positive, got {w}x{h}")
    boxes, warnings = [], 0
    for raw in obj.get("boxes", ()):
        x, y, bw, bh = (int(v) for v in raw[:4])
        cls = int(raw[4]) if len(raw) > 4 else 0
        box = clamp_box(x, y, bw, bh, w, h, cls)
        if box is None:
            log.warning("%s: box %s lies outside %dx%d, dropped", frame_id, raw, w, h)
            warnings += 1
            continue
        if (box.x, box.y, box.w, box.h) != (x, y, bw, bh):
            log.warning("%s: box %s clamped to %s", frame_id, raw, box.as_list())
            warnings += 1
        boxes.append(box)
    return AnnotatedFrame(frame_id, w, h, boxes, obj.get("image")), warnings


def load_annotations(path):
    """Read JSON-lines annotations: {"id", "w", "h", "boxes": [[x, y, W, H], ...]}.

    Malformed lines are collected in ``errors`` instead of aborting the load.
    Boxes that spill over the frame edge are clamped, fully outside ones are
    dropped; both count as warnings.
    """
    frames, errors, warnings = [], [], 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                frame, warned = _parse_frame(json.loads(line))
            except (ValueError, KeyError, TypeError, IndexError, GeometryError) as exc:
                errors.append((lineno, f"{type(exc).__name__}: {exc}"))
                continue
            frames.append(frame)
            warnings += warned
    return AnnotationLoad(frames, errors, warnings)


def dump_annotations(frames, path):
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(json.dumps(frame.to_json()) + "\n")


def place_boxes(n, m, j, box_w, box_h, seed):
    if box_w > n or box_h > m:
        raise GeometryError(f"{box_w}x{box_h} box does not fit a {n}x{m} frame")
    if j < 0:
        raise ConfigError(f"box count must be >= 0, got {j}")
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, n - box_w + 1, size=j)
    ys = rng.integers(0, m - box_h + 1, size=j)
    return [RoiBox(int(x), int(y), box_w, box_h) for x, y in zip(xs, ys)]


def synth_scene(n, m, j, box_w, box_h, seed, vdd=1.0):
    """Seeded textured background with ``j`` bright rectangles and their boxes."""
    boxes = place_boxes(n, m, j, box_w, box_h, seed)
    rng = np.random.default_rng([seed, 1])
    data = rng.uniform(0.1, 0.4, size=(m, n, 3)) * vdd
    for b in boxes:
        tint = rng.uniform(0.75, 1.0, size=3) * vdd
        data[b.y:b.y + b.h, b.x:b.x + b.w, :] = tint
    frame = AnnotatedFrame(f"synth-{seed}", n, m, boxes)
    return PixelArray(data, vdd), frame


def rescale_box(box, src_w, src_h, n, m):
    """Map a box annotated on a src_w x src_h image onto an n x m array."""
    x0 = box.x * n // src_w
    y0 = box.y * m // src_h
    x1 = -(-(box.x + box.w) * n // src_w)
    y1 = -(-(box.y + box.h) * m // src_h)
    return clamp_box(x0, y0, max(x1 - x0, 1), max(y1 - y0, 1), n, m, box.class_id)


# ROI models
FROM_ANNOTATIONS = "annotations"
FIXED_BOX = "fixed"
SCALED_LOAD = "load"


@dataclass(frozen=True)
class RoiModel:
    kind: str = FROM_ANNOTATIONS
    w: int = 0
    h: int = 0
    count: int = 0
    scale_with_k: bool = False
    load: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", FROM_ANNOTATIONS)
        if kind not in (FROM_ANNOTATIONS, FIXED_BOX, SCALED_LOAD):
            raise ConfigError(f"unknown ROI model {kind!r}")
        return cls(kind, int(d.get("w", 0)), int(d.get("h", 0)), int(d.get("count", 0)),
                   bool(d.get("scale_with_k", False)), float(d.get("s", 0.0)),
                   int(d.get("seed", 0)))

    def label(self):
        if self.kind == FIXED_BOX:
            return f"fixed:{self.count}x{self.w}x{self.h}" + ("*k" if self.scale_with_k else "")
        if self.kind == SCALED_LOAD:
            return f"load:{self.load:g}"
        return "annotations"


def load_band(n, m, s):
    """One full-width box covering a fraction ``s`` of the array (rounded to rows)."""
    rows = round(s * m)
    if rows <= 0:
        return []
    return [RoiBox(0, 0, n, min(rows, m))]


@dataclass(frozen=True)
class SweepConfig:
    n: int
    m: int
    k: int
    color_mode: ColorMode
    roi: RoiModel

    @property
    def label(self):
        return f"{self.n}x{self.m}/k{self.k}/{self.color_mode.value}/{self.roi.label()}"


@dataclass
class SweepSpec:
    sizes: list = field(default_factory=list)
    ks: list = field(default_factory=list)
    stage1_resolution: Optional[tuple] = None
    color_modes: list = field(default_factory=lambda: [ColorMode.RGB])
    roi: RoiModel = field(default_factory=RoiModel)
    adc_bits: int = 8
    word_bits: int = 16
    memory_mode: str = cost.STREAMED
    dedup_union: bool = False
    energy: Optional[cost.EnergyParams] = None
    models: list = field(default_factory=list)  # stage-2 memory profiles, peak keyed by "nxm"
    stage1_model: Optional[dict] = None
    simulate: bool = False

    @classmethod
    def from_dict(cls, d):
        res = d.get("stage1_resolution")
        energy = d.get("energy")
        spec = cls(
            sizes=[tuple(int(v) for v in s) for s in d.get("sizes", ())],
            ks=[int(k) for k in d.get("ks", ())],
            stage1_resolution=tuple(res) if res else None,
            color_modes=[ColorMode(c) for c in d.get("color_modes", ["rgb"])],
            roi=RoiModel.from_dict(d.get("roi", {})),
            adc_bits=int(d.get("adc_bits", 8)),
            word_bits=int(d.get("word_bits", 16)),
            memory_mode=d.get("memory_mode", cost.STREAMED),
            dedup_union=bool(d.get("dedup_union", False)),
            energy=cost.EnergyParams(**energy) if energy else None,
            models=list(d.get("models", ())),
            stage1_model=d.get("stage1_model"),
            simulate=bool(d.get("simulate", False)),
        )
        if spec.ks and spec.stage1_resolution:
            raise ConfigError("give either ks or stage1_resolution, not both")
        return spec

    def configs(self):
        out = []
        for n, m in self.sizes:
            if self.stage1_resolution:
                rw, rh = self.stage1_resolution
                ks = [n // rw if n % rw == 0 and n // rw == m // rh and m % rh == 0 else None]
            else:
                ks = self.ks or [1]
            for k in ks:
                for mode in self.color_modes:
                    out.append((n, m, k, mode))
        return out


def load_sweep_spec(path):
    with open(path, encoding="utf-8") as fh:
        return SweepSpec.from_dict(json.load(fh))


def lower_median(values):
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def percentile95(values):
    ordered = sorted(values)
    return ordered[max(math.ceil(0.95 * len(ordered)) - 1, 0)]


STATS = ("median", "mean", "p95")
_STAT_FUNCS = {"median": lower_median, "mean": lambda v: sum(v) / len(v), "p95": percentile95}


@dataclass
class FrameResult:
    frame_id: str
    costs: cost.CostReport
    energy: cost.EnergyReport
    validated: Optional[bool] = None


@dataclass
class AggregateReport:
    config: SweepConfig
    frames: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)  # stat -> column -> value
    sram: dict = field(default_factory=dict)
    error: Optional[str] = None

    def reductions(self, stat="median"):
        s = self.stats.get(stat)
        if not s or not s["d_new"] or not s["e_total"]:
            return None, None
        return s["d_old"] / s["d_new"], s["e_baseline"] / s["e_total"]

    def row(self, stat="median"):
        out = {"config": self.config.label, "n": self.config.n, "m": self.config.m,
               "k": self.config.k, "color": self.config.color_mode.value,
               "roi": self.config.roi.label(), "frames": len(self.frames)}
        values = self.stats.get(stat, {})
        for col in cost.CSV_COLUMNS:
            out[col] = values.get(col, "")
        data_ratio, energy_ratio = self.reductions(stat)
        out["data_ratio"] = "" if data_ratio is None else data_ratio
        out["energy_ratio"] = "" if energy_ratio is None else energy_ratio
        out.update(self.sram)
        out["error"] = self.error or ""
        return out


def _frame_rois(cfg, frame):
    roi = cfg.roi
    if roi.kind == FIXED_BOX:
        scale = cfg.k if roi.scale_with_k else 1
        return place_boxes(cfg.n, cfg.m, roi.count, roi.w * scale, roi.h * scale, roi.seed)
    if roi.kind == SCALED_LOAD:
        return load_band(cfg.n, cfg.m, roi.load)
    if (frame.width, frame.height) == (cfg.n, cfg.m):
        return list(frame.boxes)
    scaled = (rescale_box(b, frame.width, frame.height, cfg.n, cfg.m) for b in frame.boxes)
    return [b for b in scaled if b is not None]


def _simulate_matches(cfg, spec, rois):
    if spec.dedup_union:
        return None  # the wire protocol always ships overlapping ROIs twice
    sensor_cfg = SensorConfig(cfg.n, cfg.m, cfg.k, cfg.color_mode, spec.adc_bits,
                              word_bits=spec.word_bits)
    src = PixelArray(np.random.default_rng(0).uniform(0, 1, size=(cfg.m, cfg.n, 3)))
    trace = run_two_stage(src, sensor_cfg, oracle_detector(rois, cfg.k))
    # compare against the boxes actually delivered after the pooled round trip
    expected = cost.analytical_costs(_cost_inputs(cfg, spec, trace.roi_boxes))
    ledger = session_costs(trace, run_baseline(src, sensor_cfg))
    return not ledger_mismatches(ledger, expected, spec.memory_mode)


def _cost_inputs(cfg, spec, rois):
    return cost.CostInputs(cfg.n, cfg.m, cfg.k, spec.adc_bits, spec.word_bits,
                           cfg.color_mode.channels, tuple(rois), spec.memory_mode,
                           spec.dedup_union)


def _sram_columns(spec, cfg, report):
    key = f"{cfg.n}x{cfg.m}"
    out = {}
    stage1 = None
    if spec.stage1_model:
        stage1 = cost.MemoryProfile(spec.stage1_model["name"],
                                    _peak_for(spec.stage1_model, key),
                                    int(spec.stage1_model.get("weight_flash", 0)))
    for model in spec.models:
        peak = _peak_for(model, key)
        if peak is None:
            continue
        prof = cost.MemoryProfile(model["name"], peak, int(model.get("weight_flash", 0)))
        for mode in (cost.BASELINE, cost.HIRISE):
            total, _ = cost.peak_sram(stage1, prof, report, mode)
            out[f"sram_{mode}_{model['name']}"] = total
    return out


def _peak_for(model, key):
    peak = model.get("peak_activation_sram", 0)
    if isinstance(peak, dict):
        peak = peak.get(key)
    return None if peak is None else int(peak)


def _run_config(cfg, spec, frames, energy_params):
    report = AggregateReport(cfg)
    try:
        if cfg.k is None:
            raise GeometryError(f"{cfg.n}x{cfg.m} has no integer pooling onto "
                                f"{spec.stage1_resolution[0]}x{spec.stage1_resolution[1]}")
        cost.CostInputs(cfg.n, cfg.m, cfg.k)  # geometry check even with no frames
        if cfg.roi.kind == FROM_ANNOTATIONS:
            pool = sorted(frames, key=lambda f: f.frame_id)
        else:
            pool = [AnnotatedFrame(cfg.label, cfg.n, cfg.m)]
        for frame in pool:
            rois = _frame_rois(cfg, frame)
            rep = cost.analytical_costs(_cost_inputs(cfg, spec, rois))
            result = FrameResult(frame.frame_id, rep, cost.energy(rep, energy_params))
            if spec.simulate:
                result.validated = _simulate_matches(cfg, spec, rois)
            report.frames.append(result)
    except HiriseError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        report.frames.clear()
        return report

    if report.frames:
        rows = [cost.csv_row(f.costs, f.energy) for f in report.frames]
        for stat in STATS:
            report.stats[stat] = {col: _STAT_FUNCS[stat]([r[col] for r in rows])
                                  for col in cost.CSV_COLUMNS}
        median_frame = _median_frame(report.frames)
        report.sram = _sram_columns(spec, cfg, median_frame.costs)
    return report


def _median_frame(frames):
    ordered = sorted(frames, key=lambda f: (f.costs.d_new, f.frame_id))
    return ordered[(len(ordered) - 1) // 2]


def run_sweep(spec, frames=(), energy=None, workers=1):
    """Evaluate every configuration of ``spec`` and aggregate per configuration.

    Errors in one configuration are recorded on its report and do not stop
    the sweep. Output order follows the spec regardless of ``workers``.
    """
    energy_params = spec.energy or energy or cost.EnergyParams()
    frames = list(frames)
    configs = [SweepConfig(n, m, k, mode, spec.roi) for n, m, k, mode in spec.configs()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda c: _run_config(c, spec, frames, energy_params), configs))
    return [_run_config(c, spec, frames, energy_params) for c in configs]


BASE_COLUMNS = ["config", "n", "m", "k", "color", "roi", "frames", *cost.CSV_COLUMNS,
                "data_ratio", "energy_ratio"]


def sweep_columns(reports):
    extra = []
    for rep in reports:
        for key in rep.sram:
            if key not in extra:
                extra.append(key)
    return BASE_COLUMNS + extra + ["error"]


def write_sweep_csv(reports, path_or_file, stat="median"):
    columns = sweep_columns(reports)
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row(stat))
    finally:
        if own:
            fh.close()


def write_long_csv(reports, path):
    """Plot-ready (config, metric, value) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["config", "metric", "value"])
        for rep in reports:
            for stat in STATS:
                for col, value in rep.stats.get(stat, {}).items():
                    writer.writerow([rep.config.label, f"{col}.{stat}", value])
            for col, value in rep.sram.items():
                writer.writerow([rep.config.label, col, value])


def read_sweep_csv(path):
    """Parse a sweep CSV back into dicts with numeric fields converted."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, value in row.items():
                parsed[key] = _number(value) if key not in ("config", "color", "roi", "error") else value
            out.append(parsed)
    return out


def _number(text):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def reports_to_json(reports):
    return [
        {"config": rep.config.label, "stats": rep.stats, "sram": rep.sram, "error": rep.error,
         "frames": [{"id": f.frame_id, "costs": f.costs.to_dict(), "energy": f.energy.to_dict(),
                     "validated": f.validated} for f in rep.frames]}
        for rep in reports
    ]
