"""Axis-aligned boxes, crop geometry, and box overlap measures."""

from dataclasses import dataclass


@dataclass
class BBox:
    """Top-left anchored pixel box with a detection confidence."""

    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box extents w={self.w}, h={self.h}")

    @property
    def cx(self):
        return self.x + self.w / 2.0

    @property
    def cy(self):
        return self.y + self.h / 2.0

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    def center(self):
        return (self.cx, self.cy)

    @staticmethod
    def from_center(cx, cy, w, h, confidence=1.0):
        return BBox(cx - w / 2.0, cy - h / 2.0, w, h, confidence)


@dataclass
class CropGeometry:
    """Invertible mapping between a square resampled crop and frame pixels.

    Coordinates are continuous corner-origin pixel units: index i spans
    [i, i+1), so a pixel center sits at i + 0.5 and a BBox.x is a corner.
    """

    frame_w: int
    frame_h: int
    center_x: float
    center_y: float
    side: float
    out_size: int

    @property
    def scale(self):
        """Frame pixels per crop pixel."""
        return self.side / self.out_size

    def crop_to_frame(self, u, v):
        x0 = self.center_x - self.side / 2.0
        y0 = self.center_y - self.side / 2.0
        return (x0 + u * self.scale, y0 + v * self.scale)

    def frame_to_crop(self, x, y):
        x0 = self.center_x - self.side / 2.0
        y0 = self.center_y - self.side / 2.0
        return ((x - x0) / self.scale, (y - y0) / self.scale)

    def box_to_frame(self, box):
        cx, cy = self.crop_to_frame(box.cx, box.cy)
        return BBox.from_center(cx, cy, box.w * self.scale,
                                box.h * self.scale, box.confidence)

    def box_to_crop(self, box):
        cx, cy = self.frame_to_crop(box.cx, box.cy)
        return BBox.from_center(cx, cy, box.w / self.scale,
                                box.h / self.scale, box.confidence)

    @staticmethod
    def identity(size):
        return CropGeometry(size, size, size / 2.0, size / 2.0,
                            float(size), size)


def _intersection(a, b):
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def _corner_area(box):
    # areas from the same corner differences as the intersection, so that
    # identical boxes give exactly iou = 1 in float arithmetic
    return (box.x2 - box.x) * (box.y2 - box.y)


def iou(a, b):
    inter = _intersection(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    return inter / union


def giou(a, b):
    """IoU minus the enclosing-box slack; in (-1, 1]."""
    inter = _intersection(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    enc_w = max(a.x2, b.x2) - min(a.x, b.x)
    enc_h = max(a.y2, b.y2) - min(a.y, b.y)
    enclosing = enc_w * enc_h
    return inter / union - (enclosing - union) / enclosing


def cle(a, b):
    """Center location error in pixels."""
    dx = a.cx - b.cx
    dy = a.cy - b.cy
    return (dx * dx + dy * dy) ** 0.5
