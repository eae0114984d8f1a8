"""Two-stage sensor/processor exchange with an append-only transfer ledger.

Stage 1 ships a pooled (and optionally grayscale) frame to the processor,
which answers with ROI boxes in pooled coordinates. Stage 2 upscales those
boxes on the sensor side, converts only the ROI pixels and ships them back.
"""

import logging
import math
from dataclasses import dataclass, field

from hirise.boxes import RoiBox
from hirise.cost import packed_bytes
from hirise.errors import GeometryError
from hirise.sensor import adc_convert, extract_roi, pool_frame

log = logging.getLogger(__name__)

SENSOR_TO_PROCESSOR = "sensor_to_processor"
PROCESSOR_TO_SENSOR = "processor_to_sensor"

COMPRESSED_FRAME = "compressed_frame"
ROI_REQUEST = "roi_request"
ROI_PAYLOAD = "roi_payload"
FULL_FRAME = "full_frame"


@dataclass(frozen=True)
class Message:
    kind: str
    direction: str
    nbytes: int
    conversions: int
    stage: int
    boxes: tuple = ()
    part_bytes: tuple = ()  # per-ROI sizes inside a payload
    frames: tuple = field(default=(), compare=False, repr=False)

    def to_dict(self):
        out = {
            "kind": self.kind,
            "direction": self.direction,
            "stage": self.stage,
            "bytes": self.nbytes,
            "conversions": self.conversions,
        }
        if self.boxes:
            out["boxes"] = [b.as_list() for b in self.boxes]
        if self.part_bytes:
            out["part_bytes"] = list(self.part_bytes)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            direction=d["direction"],
            nbytes=d["bytes"],
            conversions=d["conversions"],
            stage=d.get("stage", 1),
            boxes=tuple(RoiBox(*b) for b in d.get("boxes", ())),
            part_bytes=tuple(d.get("part_bytes", ())),
        )


class TransferLedger:
    """Append-only record of every message crossing the sensor boundary."""

    def __init__(self):
        self._messages = []
        self.notes = []

    def record(self, msg):
        self._messages.append(msg)
        return msg

    def note(self, text):
        log.info(text)
        self.notes.append(text)

    @property
    def messages(self):
        return tuple(self._messages)

    def _sum(self, attr, **match):
        return sum(
            getattr(msg, attr)
            for msg in self._messages
            if all(getattr(msg, k) == v for k, v in match.items())
        )

    @property
    def bytes_s_to_p(self):
        return self._sum("nbytes", direction=SENSOR_TO_PROCESSOR)

    @property
    def bytes_p_to_s(self):
        return self._sum("nbytes", direction=PROCESSOR_TO_SENSOR)

    @property
    def total_conversions(self):
        return self._sum("conversions")

    def stage_totals(self, stage):
        return {
            "bytes": self._sum("nbytes", stage=stage),
            "conversions": self._sum("conversions", stage=stage),
        }

    def costs(self):
        """Ledger totals under the same field names as CostReport."""
        out = {
            "d1_sp": self._sum("nbytes", kind=COMPRESSED_FRAME),
            "d1_ps": self._sum("nbytes", kind=ROI_REQUEST),
            "d2_sp": self._sum("nbytes", kind=ROI_PAYLOAD),
            "c1_sp": self._sum("conversions", kind=COMPRESSED_FRAME),
            "c2_sp": self._sum("conversions", kind=ROI_PAYLOAD),
            "m1_ps": self._sum("nbytes", kind=ROI_REQUEST),
            "m2_streamed": max(
                (p for msg in self._messages if msg.kind == ROI_PAYLOAD for p in msg.part_bytes),
                default=0,
            ),
        }
        out["m1_sp"] = out["d1_sp"]
        out["m2_batched"] = out["d2_sp"]
        out["d_new"] = out["d1_sp"] + out["d1_ps"] + out["d2_sp"]
        out["c_new"] = out["c1_sp"] + out["c2_sp"]
        return out

    def baseline_costs(self):
        """d_old / mem_old / c_old from full-frame messages."""
        full = [msg for msg in self._messages if msg.kind == FULL_FRAME]
        d_old = sum(msg.nbytes for msg in full)
        return {"d_old": d_old, "mem_old": d_old, "c_old": sum(msg.conversions for msg in full)}

    def totals(self):
        return {
            "bytes_s_to_p": self.bytes_s_to_p,
            "bytes_p_to_s": self.bytes_p_to_s,
            "bytes": self.bytes_s_to_p + self.bytes_p_to_s,
            "conversions": self.total_conversions,
            "stage1": self.stage_totals(1),
            "stage2": self.stage_totals(2),
        }


class OracleDetector:
    """Stage-1 stand-in that reports known annotations, scaled to the pooled frame.

    Origins are floored and extents rounded up, with a 1x1 minimum. The frame
    content is ignored.
    """

    def __init__(self, annotations, k):
        self.annotations = list(annotations)
        self.k = k

    def detect(self, frame):
        k = self.k
        return [
            RoiBox(b.x // k, b.y // k, max(1, math.ceil(b.w / k)), max(1, math.ceil(b.h / k)),
                   b.class_id)
            for b in self.annotations
        ]


def oracle_detector(annotations, k):
    return OracleDetector(annotations, k)


def upscale_and_clamp(box, k, n, m):
    """Map a pooled-coordinate box back onto the full array; None if empty."""
    x, y = box.x * k, box.y * k
    w = min(box.w * k, n - x)
    h = min(box.h * k, m - y)
    if w < 1 or h < 1:
        return None
    return RoiBox(x, y, w, h, box.class_id)


@dataclass
class SessionTrace:
    ledger: TransferLedger
    stage1_boxes: list = field(default_factory=list)
    roi_boxes: list = field(default_factory=list)
    payload: list = field(default_factory=list)

    def to_dict(self):
        return {
            "messages": [msg.to_dict() for msg in self.ledger.messages],
            "totals": self.ledger.totals(),
            "stage1_boxes": [b.as_list() for b in self.stage1_boxes],
            "boxes": [b.as_list() for b in self.roi_boxes],
            "notes": list(self.ledger.notes),
        }

    @classmethod
    def from_dict(cls, d):
        ledger = TransferLedger()
        for msg in d["messages"]:
            ledger.record(Message.from_dict(msg))
        ledger.notes.extend(d.get("notes", ()))
        return cls(
            ledger,
            [RoiBox(*b) for b in d.get("stage1_boxes", ())],
            [RoiBox(*b) for b in d.get("boxes", ())],
        )


def run_two_stage(src, cfg, det):
    ledger = TransferLedger()
    k, bits = cfg.k, cfg.adc_bits

    compressed = adc_convert(pool_frame(src, cfg), cfg)
    ledger.record(Message(COMPRESSED_FRAME, SENSOR_TO_PROCESSOR, compressed.nbytes,
                          compressed.conversion_count, stage=1, frames=(compressed,)))

    pooled_boxes = list(det.detect(compressed))
    for b in pooled_boxes:
        if b.x < 0 or b.y < 0 or b.x + b.w > compressed.width or b.y + b.h > compressed.height:
            raise GeometryError(f"detector box {b} outside pooled frame "
                                f"{compressed.width}x{compressed.height}")
    trace = SessionTrace(ledger, stage1_boxes=pooled_boxes)
    if not pooled_boxes:
        return trace

    ledger.record(Message(ROI_REQUEST, PROCESSOR_TO_SENSOR,
                          len(pooled_boxes) * 4 * cfg.word_bits // 8, 0, stage=1,
                          boxes=tuple(pooled_boxes)))

    for b in pooled_boxes:
        full = upscale_and_clamp(b, k, cfg.n, cfg.m)
        if full is None:
            ledger.note(f"dropped zero-area ROI {b.as_list()} after clamping")
            continue
        trace.roi_boxes.append(full)
        trace.payload.append(adc_convert(extract_roi(src, full), cfg))

    if trace.payload:
        conversions = sum(f.conversion_count for f in trace.payload)
        ledger.record(Message(ROI_PAYLOAD, SENSOR_TO_PROCESSOR, packed_bytes(conversions, bits),
                              conversions, stage=2, boxes=tuple(trace.roi_boxes),
                              part_bytes=tuple(f.nbytes for f in trace.payload),
                              frames=tuple(trace.payload)))
    return trace


def run_baseline(src, cfg):
    """Single-stage reference: convert and ship every pixel of the full array."""
    ledger = TransferLedger()
    whole = RoiBox(0, 0, src.width, src.height)
    frame = adc_convert(extract_roi(src, whole), cfg)
    ledger.record(Message(FULL_FRAME, SENSOR_TO_PROCESSOR, frame.nbytes,
                          frame.conversion_count, stage=1, frames=(frame,)))
    return SessionTrace(ledger, roi_boxes=[whole], payload=[frame])


def session_costs(trace, baseline=None):
    """Ledger totals of a two-stage session, plus the baseline session's if given."""
    out = trace.ledger.costs()
    if baseline is not None:
        out.update(baseline.ledger.baseline_costs())
    return out


def ledger_mismatches(ledger_costs, report, memory_mode="streamed"):
    """(field, ledger value, formula value) for every disagreeing field.

    ``ledger_costs`` comes from :func:`session_costs`; fields it lacks are
    not compared.
    """
    observed = dict(ledger_costs)
    streamed = observed.pop("m2_streamed")
    batched = observed.pop("m2_batched")
    observed["m2_sp"] = streamed if memory_mode == "streamed" else batched
    observed["mem_new"] = max(observed["m1_sp"], observed["m2_sp"])
    expected = report.to_dict()
    return [(name, value, expected[name]) for name, value in sorted(observed.items())
            if expected[name] != value]
