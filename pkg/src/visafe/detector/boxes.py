"""Bounding boxes, per-frame detections, IoU and NMS."""
import json
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import InputError


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InputError(f"degenerate box {self}")
        if not 0.0 <= self.score <= 1.0:
            raise InputError(f"score {self.score} outside [0, 1]")

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def xyxy(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def to_dict(self):
        return {"x1": self.x1, "y1": self.y1, "x2": self.x2, "y2": self.y2, "score": self.score}


@dataclass
class Detections:
    t: int
    boxes: list = field(default_factory=list)

    @property
    def n(self):
        """N_t, the number of boxes in this frame."""
        return len(self.boxes)

    def array(self):
        if not self.boxes:
            return np.zeros((0, 4))
        return np.array([b.xyxy() for b in self.boxes], dtype=np.float64)

    def scores(self):
        return np.array([b.score for b in self.boxes], dtype=np.float64)

    def to_dict(self):
        return {"t": self.t, "boxes": [b.to_dict() for b in self.boxes]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["t"]), [BoundingBox(**b) for b in d["boxes"]])

    @classmethod
    def from_arrays(cls, t, xyxy, scores=None):
        xyxy = np.asarray(xyxy, dtype=np.float64).reshape(-1, 4)
        scores = np.ones(len(xyxy)) if scores is None else np.asarray(scores, dtype=np.float64)
        return cls(t, [BoundingBox(*map(float, b), score=float(s)) for b, s in zip(xyxy, scores)])


def iou(a, b):
    return float(kernels.iou_matrix([a.xyxy()], [b.xyxy()])[0, 0])


def nms(boxes, iou_thr):
    """Greedy NMS over :class:`BoundingBox` objects; output sorted by descending score."""
    if not boxes:
        return []
    xyxy = np.array([b.xyxy() for b in boxes])
    keep = kernels.nms(xyxy, np.array([b.score for b in boxes]), float(iou_thr))
    return [boxes[i] for i in keep]


def write_predictions(path, dets):
    with open(path, "w") as fh:
        json.dump([d.to_dict() for d in dets], fh, indent=1)


def read_predictions(path):
    with open(path) as fh:
        return [Detections.from_dict(d) for d in json.load(fh)]
