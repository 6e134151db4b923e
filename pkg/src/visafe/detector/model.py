"""Single-class anchor-free detector assembled from the graph blocks.

Backbone: strided conv/GhostConv stages with C3/C3Ghost blocks down to
stride 16, optional attention on the last stage, a top-down neck back to
stride 8, and decoupled box/score heads. Every stride-8 cell predicts an
objectness logit and four side distances (in stride units).
"""
import math
from dataclasses import asdict, dataclass, fields

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ConfigError, InputError
from ..nn.blocks import C3Config, GhostConvConfig, GraphBuilder, c3, conv_bn_act, ghost_conv
from ..nn.graph import GraphModule
from .boxes import Detections, nms

STRIDE = 8
BASE_WIDTHS = (16, 32, 64, 128)


@dataclass
class DetectorConfig:
    backbone: str = "ghost"
    attention: str = "ema"
    width: float = 1.0
    depth: float = 1.0
    conf: float = 0.25
    nms_iou: float = 0.45
    input_size: int = 256
    ema_groups: int = 8
    max_det: int = 100

    def __post_init__(self):
        if not (0.0 <= self.conf <= 1.0 and 0.0 <= self.nms_iou <= 1.0):
            raise ConfigError("conf and nms_iou must lie in [0, 1]")
        if self.input_size < 32 or self.input_size % 32:
            raise ConfigError(f"input_size must be a positive multiple of 32, got {self.input_size}")
        if self.width <= 0 or self.depth <= 0:
            raise ConfigError("width and depth multipliers must be positive")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}; known: {sorted(BACKBONES)}")
        if self.attention not in ATTENTIONS:
            raise ConfigError(f"unknown attention {self.attention!r}; known: {sorted(ATTENTIONS)}")

    @property
    def variant(self):
        return self.backbone if self.attention == "none" else f"{self.backbone}+{self.attention}"

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names - {"variant"}
        if unknown:
            raise ConfigError(f"unknown detector config keys {sorted(unknown)}")
        d = dict(d)
        if "variant" in d:
            d.update(parse_variant(d.pop("variant")))
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def _standard_down(b, x, c2, name):
    return conv_bn_act(b, x, c2, 3, 2, name=name)


def _ghost_down(b, x, c2, name):
    return ghost_conv(b, x, GhostConvConfig(b.channels(x), c2, 3, 2), name)


def _standard_pw(b, x, c2, name, kernel=1):
    return conv_bn_act(b, x, c2, kernel, name=name)


def _ghost_pw(b, x, c2, name, kernel=1):
    return ghost_conv(b, x, GhostConvConfig(b.channels(x), c2, kernel), name)


# name -> (downsample, pointwise/head conv, ghost C3 flag)
BACKBONES = {
    "standard": (_standard_down, _standard_pw, False),
    "ghost": (_ghost_down, _ghost_pw, True),
}


def _ema(b, x, cfg, name):
    return b.ema(x, cfg.ema_groups, name)


# name -> builder(b, x, cfg, name) or None; other attention modules register here
ATTENTIONS = {"none": None, "ema": _ema}


def register_attention(name, builder):
    ATTENTIONS[name] = builder


def parse_variant(variant):
    """``"ghost+ema"`` -> ``{"backbone": "ghost", "attention": "ema"}``."""
    parts = variant.split("+")
    if len(parts) > 2 or parts[0] not in BACKBONES:
        raise ConfigError(f"unknown detector variant {variant!r}")
    att = parts[1] if len(parts) == 2 else "none"
    if att not in ATTENTIONS:
        raise ConfigError(f"unknown attention {att!r} in variant {variant!r}")
    return {"backbone": parts[0], "attention": att}


def _width(c, w):
    return max(8, int(round(c * w / 8)) * 8)


def build_detector_graph(cfg):
    down, pw, ghost = BACKBONES[cfg.backbone]
    c0, c1, c2, c3w = (_width(c, cfg.width) for c in BASE_WIDTHS)
    n = max(1, round(cfg.depth))
    # head channels stay unpruned, as is usual when compressing YOLO-style detectors
    b = GraphBuilder(meta={"kind": "detector", "stride": STRIDE, "detector": cfg.to_dict(), "prune_ignore": ["head."]})
    x = b.input("image", 3)
    y = conv_bn_act(b, x, c0, 3, 2, name="stem")
    y = down(b, y, c1, "down1")
    y = c3(b, y, C3Config(c1, c1, n, ghost=ghost), "stage1")
    y = down(b, y, c2, "down2")
    p3 = c3(b, y, C3Config(c2, c2, n, ghost=ghost), "stage2")
    y = down(b, p3, c3w, "down3")
    y = c3(b, y, C3Config(c3w, c3w, n, ghost=ghost), "stage3")
    att = ATTENTIONS[cfg.attention]
    if att is not None:
        y = att(b, y, cfg, "attn")
    y = pw(b, y, c2, "lateral")
    y = b.upsample(y, "up")
    y = b.concat([y, p3], "fuse")
    y = c3(b, y, C3Config(2 * c2, c2, n, ghost=ghost), "neck")
    box = pw(b, y, c2, "head.box_feat", kernel=3)
    box = b.conv(box, 4, 1, bias=True, name="head.box")
    cls = pw(b, y, c2, "head.cls_feat", kernel=3)
    cls = b.conv(cls, 1, 1, bias=True, name="head.cls")
    return b.build([box, cls])


def grid_centers(size, stride=STRIDE, device=None, dtype=torch.float32):
    g = size // stride
    r = (torch.arange(g, device=device, dtype=dtype) + 0.5) * stride
    cy, cx = torch.meshgrid(r, r, indexing="ij")
    return cx.reshape(-1), cy.reshape(-1)


def decode(box_raw, cls_raw, stride=STRIDE):
    """Raw head maps -> (boxes (B, G*G, 4) xyxy in input pixels, scores (B, G*G))."""
    bsz, _, gh, gw = box_raw.shape
    cx, cy = grid_centers(gh * stride, stride, box_raw.device, box_raw.dtype)
    d = F.softplus(box_raw).reshape(bsz, 4, -1) * stride
    boxes = torch.stack([cx - d[:, 0], cy - d[:, 1], cx + d[:, 2], cy + d[:, 3]], dim=-1)
    return boxes, torch.sigmoid(cls_raw.reshape(bsz, -1))


class Detector:
    """A detector graph module bundled with its inference settings."""

    def __init__(self, module, cfg):
        self.module = module
        self.cfg = cfg

    @classmethod
    def create(cls, cfg, seed=0, prior=0.01):
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            module = GraphModule(build_detector_graph(cfg))
        with torch.no_grad():
            module.mods["head__cls"].bias.fill_(-math.log((1 - prior) / prior))
        return cls(module, cfg)

    @classmethod
    def from_graph(cls, graph, cfg=None):
        if cfg is None:
            cfg = DetectorConfig.from_dict(graph.meta.get("detector", {}))
        return cls(GraphModule(graph), cfg)

    def to_graph(self):
        g = self.module.to_graph()
        g.meta["detector"] = self.cfg.to_dict()
        return g


def module_device(module):
    return next(module.parameters()).device


def preprocess(frames, size):
    """uint8/float HxWx3 frames -> float tensor (N, 3, size, size) in [0, 1]."""
    batch = []
    for f in frames:
        f = check_frame(f)
        if f.shape[:2] != (size, size):
            f = cv2.resize(f, (size, size), interpolation=cv2.INTER_AREA if f.shape[0] > size else cv2.INTER_LINEAR)
        batch.append(f.astype(np.float32) / 255.0 if f.dtype == np.uint8 else f)
    arr = np.stack(batch).astype(np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def check_frame(frame):
    f = np.asarray(frame)
    if f.ndim != 3 or f.shape[2] != 3 or f.shape[0] < 32 or f.shape[1] < 32:
        raise InputError(f"expected an HxWx3 image with H, W >= 32, got shape {f.shape}")
    if not np.issubdtype(f.dtype, np.number) or not np.all(np.isfinite(f)):
        raise InputError("image must be numeric and finite")
    if f.dtype != np.uint8:
        f = f.astype(np.float32)
    return f


@torch.no_grad()
def detect_batch(frames, model, cfg=None, t0=0):
    cfg = cfg or model.cfg
    frames = [check_frame(f) for f in frames]
    if not frames:
        return []
    x = preprocess(frames, cfg.input_size).to(module_device(model.module))
    was_training = model.module.training
    model.module.eval()
    try:
        box_raw, cls_raw = model.module(x)
    finally:
        model.module.train(was_training)
    boxes, scores = decode(box_raw.cpu(), cls_raw.cpu())
    out = []
    for i, f in enumerate(frames):
        h, w = f.shape[:2]
        sx, sy = w / cfg.input_size, h / cfg.input_size
        keep = scores[i] >= cfg.conf
        bx = boxes[i][keep].double().numpy()
        sc = scores[i][keep].double().numpy()
        bx[:, [0, 2]] = np.clip(bx[:, [0, 2]] * sx, 0, w)
        bx[:, [1, 3]] = np.clip(bx[:, [1, 3]] * sy, 0, h)
        valid = (bx[:, 2] > bx[:, 0]) & (bx[:, 3] > bx[:, 1])
        dets = Detections.from_arrays(t0 + i, bx[valid], np.clip(sc[valid], 0.0, 1.0))
        dets.boxes = nms(dets.boxes, cfg.nms_iou)[: cfg.max_det]
        out.append(dets)
    return out


def detect(frame, model, cfg=None, t=0):
    """Detect people in one frame. Boxes are in frame pixels, sorted by descending score."""
    return detect_batch([frame], model, cfg, t0=t)[0]
