"""Bounding boxes in pixel coordinates and the geometry shared across stages."""

from dataclasses import dataclass

from hirise.errors import GeometryError


@dataclass(frozen=True, order=True)
class RoiBox:
    x: int
    y: int
    w: int
    h: int
    class_id: int = 0

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise GeometryError(f"box must be at least 1x1, got {self.w}x{self.h}")

    @property
    def area(self):
        return self.w * self.h

    def as_list(self):
        return [self.x, self.y, self.w, self.h]


def clamp_box(x, y, w, h, width, height, class_id=0):
    """Clip a box to [0, width) x [0, height); None when nothing is left."""
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, width), min(y + h, height)
    if x1 <= x0 or y1 <= y0:
        return None
    return RoiBox(x0, y0, x1 - x0, y1 - y0, class_id)


def union_area(boxes):
    """Pixel count covered by at least one box.

    Coordinate-compression sweep: x edges split the plane into slabs, and
    inside each slab the covered y intervals are merged.
    """
    boxes = list(boxes)
    if not boxes:
        return 0
    xs = sorted({b.x for b in boxes} | {b.x + b.w for b in boxes})
    total = 0
    for left, right in zip(xs, xs[1:]):
        spans = sorted((b.y, b.y + b.h) for b in boxes if b.x <= left and b.x + b.w >= right)
        covered = 0
        cur_lo = cur_hi = None
        for lo, hi in spans:
            if cur_hi is None or lo > cur_hi:
                if cur_hi is not None:
                    covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        total += covered * (right - left)
    return total
