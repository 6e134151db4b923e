"""Detect people, crop the region they occupy, classify the clip over time."""
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .detector.boxes import BoundingBox
from .detector.model import check_frame, detect_batch
from .errors import ConfigError, InputError, NoEvidenceError
from .tsn import SegmentIndices, classify, consensus, encode_snippet, resize_crop, sample_segments

FULL_FRAME = "full-frame"
POLICIES = {"multi_person_policy": ("union", "largest"), "no_detection_policy": ("full_frame", "skip")}


@dataclass(frozen=True)
class PipelineConfig:
    pad_ratio: float = 0.1
    crop_size: int = 224
    multi_person_policy: str = "union"
    no_detection_policy: str = "full_frame"
    decision_threshold: float = 0.5
    min_score: float = 0.4          # boxes scoring lower do not shape the crop
    detect_all_frames: bool = False
    sample_mode: str = "test"

    def __post_init__(self):
        if self.pad_ratio < 0:
            raise ConfigError("pad_ratio must be >= 0")
        if self.crop_size < 32:
            raise ConfigError(f"crop_size must be >= 32, got {self.crop_size}")
        if not 0.0 <= self.decision_threshold <= 1.0 or not 0.0 <= self.min_score <= 1.0:
            raise ConfigError("decision_threshold and min_score must lie in [0, 1]")
        for key, allowed in POLICIES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.sample_mode not in ("train", "test"):
            raise ConfigError("sample_mode must be 'train' or 'test'")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown pipeline config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class RoiFrame:
    t: int
    crop: np.ndarray            # crop_size x crop_size x 3, or None when skipped
    source_box: object          # BoundingBox, FULL_FRAME, or None when skipped

    @property
    def absent(self):
        return self.source_box is None


@dataclass
class Verdict:
    probability: float
    label: str
    per_segment_indices: SegmentIndices
    boxes_used: list = field(default_factory=list)

    def to_dict(self):
        frames = []
        for t, b in zip(self.per_segment_indices, self.boxes_used):
            frames.append({"t": int(t), "box": list(b.xyxy()) if isinstance(b, BoundingBox) else None})
        return {"probability": self.probability, "label": self.label, "frames": frames}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


def crop_region(box, width, height, pad_ratio):
    """Integer pixel region ``(x1, y1, x2, y2)`` of ``box`` padded on each side and clipped."""
    x1, y1, x2, y2 = box
    px, py = pad_ratio * (x2 - x1), pad_ratio * (y2 - y1)
    x1, y1 = max(0, math.floor(x1 - px)), max(0, math.floor(y1 - py))
    x2, y2 = min(width, math.ceil(x2 + px)), min(height, math.ceil(y2 + py))
    if x2 <= x1 or y2 <= y1:
        raise InputError(f"box {box} lies outside the {width}x{height} frame")
    return x1, y1, x2, y2


def select_box(dets, policy="union"):
    """Hull of every box (``union``) or the largest one; None for no boxes."""
    boxes = dets.boxes if hasattr(dets, "boxes") else list(dets)
    if not boxes:
        return None
    if policy == "largest":
        # area ties go to the box that sorts first, so list order never matters
        return min(boxes, key=lambda b: (-b.area, b.xyxy()))
    return BoundingBox(min(b.x1 for b in boxes), min(b.y1 for b in boxes),
                       max(b.x2 for b in boxes), max(b.y2 for b in boxes),
                       score=max(b.score for b in boxes))


def crop_rois(frame, dets, cfg, t=None):
    frame = check_frame(frame)
    h, w = frame.shape[:2]
    if t is None:
        t = getattr(dets, "t", 0)
    boxes = dets.boxes if hasattr(dets, "boxes") else list(dets)
    box = select_box([b for b in boxes if b.score >= cfg.min_score], cfg.multi_person_policy)
    if box is None:
        if cfg.no_detection_policy == "skip":
            return RoiFrame(t, None, None)
        return RoiFrame(t, resize_crop(frame, cfg.crop_size), FULL_FRAME)
    x1, y1, x2, y2 = crop_region(box.xyxy(), w, h, cfg.pad_ratio)
    # rows are y, columns are x
    return RoiFrame(t, resize_crop(frame[y1:y2, x1:x2], cfg.crop_size), box)


def _clip_frames(clip):
    frames = clip.frames if hasattr(clip, "frames") else clip
    if len(frames) == 0:
        raise InputError("clip has no frames")
    shapes = {np.asarray(f).shape for f in frames}
    if len(shapes) != 1:
        raise InputError(f"clip frames have different shapes {sorted(shapes)}")
    return frames


@dataclass(frozen=True)
class ViSafe:
    """Immutable pairing of a trained detector and temporal classifier."""

    detector: object
    tsn: object
    cfg: PipelineConfig = PipelineConfig()

    def __post_init__(self):
        if self.cfg.crop_size != self.tsn.cfg.input_size:
            raise ConfigError(f"crop_size {self.cfg.crop_size} differs from the TSN input size "
                              f"{self.tsn.cfg.input_size}")

    def rois(self, clip, seed=0):
        frames = _clip_frames(clip)
        idx = sample_segments(len(frames), self.tsn.cfg.segments, self.cfg.sample_mode, seed)
        if self.cfg.detect_all_frames:
            dets = detect_batch(list(frames), self.detector)
            dets = [dets[t] for t in idx]
        else:
            dets = detect_batch([frames[t] for t in idx], self.detector)
        return idx, [crop_rois(frames[t], d, self.cfg, t=t) for t, d in zip(idx, dets)]

    def run(self, clip, seed=0):
        idx, rois = self.rois(clip, seed)
        present = [r for r in rois if not r.absent]
        if not present:
            raise NoEvidenceError("no person detected in any sampled frame")
        G = consensus([encode_snippet(r.crop, self.tsn) for r in present])
        p = classify(G, self.tsn.classifier_head())
        label = "violent" if p >= self.cfg.decision_threshold else "non-violent"
        return Verdict(p, label, idx, [r.source_box for r in rois])


def run_pipeline(clip, detector, tsn, cfg=None, seed=0):
    return ViSafe(detector, tsn, cfg or PipelineConfig(crop_size=tsn.cfg.input_size)).run(clip, seed)
