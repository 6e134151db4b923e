"""Training and evaluation loops for the detector and the temporal classifier."""
import logging
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
import torch
import torch.nn.functional as F

from ..detector.boxes import Detections
from ..detector.loss import detection_loss
from ..detector.metrics import eval_detection
from ..detector.model import Detector, DetectorConfig, detect_batch, preprocess
from ..errors import ConfigError, InputError
from ..pipeline import FULL_FRAME, PipelineConfig, crop_rois
from ..tsn import TSNConfig, TSNModel, resize_crop, sample_segments, to_tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 2e-3
    weight_decay: float = 5e-4
    warmup_epochs: float = 1.0
    flip: bool = True
    augment: bool = True        # detector only: random shifts and brightness/contrast
    max_shift: float = 0.125    # fraction of the input size
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError(f"invalid training settings {self}")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown training config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    losses: list            # mean loss per finished epoch
    stopped_early: bool = False


def set_determinism(seed):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def _lr_at(step, total, warmup, base):
    if step < warmup:
        return base * (step + 1) / warmup
    if total <= warmup:
        return base
    return base * 0.5 * (1 + math.cos(math.pi * (step - warmup) / (total - warmup))) + base * 0.01


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _fit(module, n_items, make_batch, loss_fn, cfg, tag):
    """Shared epoch loop: AdamW, warmup + cosine, stop on a non-finite loss."""
    set_determinism(cfg.seed)
    device = torch.device(cfg.device)
    module.to(device)
    opt = torch.optim.AdamW(module.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(n_items / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    warmup = int(round(cfg.warmup_epochs * steps_per_epoch))
    losses, step = [], 0
    module.train()
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 7, epoch])
        acc = []
        for idx in _batches(n_items, cfg.batch_size, rng):
            for g in opt.param_groups:
                g["lr"] = _lr_at(step, total, warmup, cfg.lr)
            x, y = make_batch(idx, rng, epoch)
            loss = loss_fn(x.to(device), y.to(device) if torch.is_tensor(y) else y)
            if not torch.isfinite(loss):
                log.warning("%s: non-finite loss at epoch %d, stopping", tag, epoch)
                module.eval()
                return losses, True
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(module.parameters(), 10.0)
            opt.step()
            acc.append(loss.item())
            step += 1
        losses.append(float(np.mean(acc)))
        log.info("%s epoch %d/%d loss %.4f", tag, epoch + 1, cfg.epochs, losses[-1])
    module.eval()
    return losses, False


# -- detector ---------------------------------------------------------------

def _scaled_boxes(sample, size):
    h, w = sample.image.shape[:2]
    b = np.asarray(sample.boxes, dtype=np.float64).reshape(-1, 4).copy()
    b[:, [0, 2]] *= size / w
    b[:, [1, 3]] *= size / h
    return b


def augment_detection(img, boxes, rng, max_shift=0.125, min_visible=0.4):
    """Random translation (uncovered area filled with the image mean) and brightness/contrast jitter.

    Boxes are shifted and clipped; boxes left with under ``min_visible`` of
    their area inside the image are dropped.
    """
    _, h, w = img.shape
    s = int(round(max_shift * min(h, w)))
    dx, dy = (int(v) for v in rng.integers(-s, s + 1, size=2)) if s > 0 else (0, 0)
    out = torch.empty_like(img)
    out[:] = img.mean(dim=(1, 2), keepdim=True)
    src_x, dst_x = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    src_y, dst_y = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    out[:, dst_y, dst_x] = img[:, src_y, src_x]
    out = (out * rng.uniform(0.75, 1.25) + rng.uniform(-0.08, 0.08)).clamp(0.0, 1.0)
    b = boxes + np.array([dx, dy, dx, dy], dtype=np.float64)
    area = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    b[:, [0, 2]] = b[:, [0, 2]].clip(0, w)
    b[:, [1, 3]] = b[:, [1, 3]].clip(0, h)
    vis = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return out, b[vis >= min_visible * area]


def _detector_fit(detector, samples, cfg):
    if not samples:
        raise InputError("detector training needs at least one sample")
    size = detector.cfg.input_size
    images = preprocess([s.image for s in samples], size)
    targets = [_scaled_boxes(s, size) for s in samples]

    def make_batch(idx, rng, epoch):
        x = images[idx].clone()
        tg = [targets[i] for i in idx]
        for j in range(len(idx)):
            if cfg.flip and rng.random() < 0.5:
                x[j] = x[j].flip(-1)
                b = tg[j].copy()
                b[:, [0, 2]] = size - tg[j][:, [2, 0]]
                tg[j] = b
            if cfg.augment:
                x[j], tg[j] = augment_detection(x[j], tg[j], rng, cfg.max_shift)
        return x, tg

    def loss_fn(x, tg):
        box_raw, cls_raw = detector.module(x)
        return detection_loss(box_raw, cls_raw, tg, size)[0]

    return _fit(detector.module, len(samples), make_batch, loss_fn, cfg, "detector")


def train_detector(samples, det_cfg=None, cfg=None):
    """Train a fresh detector on :class:`DetectionSample` items."""
    det_cfg = det_cfg or DetectorConfig()
    cfg = cfg or TrainConfig()
    detector = Detector.create(det_cfg, seed=cfg.seed)
    if cfg.epochs == 0:
        return TrainResult(detector, [])
    losses, stopped = _detector_fit(detector, samples, cfg)
    return TrainResult(detector, losses, stopped)


def finetune_detector(graph, dataset, epochs=5, lr=4e-3, batch_size=16, seed=0, det_cfg=None, device="cpu",
                      warmup_epochs=1.0):
    """Continue training a (pruned) detector graph; returns the updated graph.

    The default rate is above the training rate on purpose: the pruned
    network has to re-balance its surviving channels within a few epochs.
    """
    detector = Detector.from_graph(graph, det_cfg)
    if epochs == 0:
        return detector.to_graph()
    _detector_fit(detector, dataset, TrainConfig(epochs, batch_size, lr, warmup_epochs=warmup_epochs, seed=seed,
                                                 device=device))
    return detector.to_graph()


def evaluate_detector(detector, samples, iou_thr=0.5, conf=0.001):
    """mAP@iou_thr ranking every candidate above ``conf``; recall at the detector's own threshold."""
    cfg = replace(detector.cfg, conf=min(conf, detector.cfg.conf))
    preds = []
    for i in range(0, len(samples), 32):
        chunk = samples[i:i + 32]
        preds.extend(detect_batch([s.image for s in chunk], detector, cfg, t0=i))
    gts = [Detections.from_arrays(i, s.boxes) for i, s in enumerate(samples)]
    full = eval_detection(preds, gts, iou_thr)
    kept = [Detections(d.t, [b for b in d.boxes if b.score >= detector.cfg.conf]) for d in preds]
    op = eval_detection(kept, gts, iou_thr)
    return replace(full, recall=op.recall)


# -- temporal classifier ------------------------------------------------------

def clip_crops(clip, tsn_cfg, detector=None, pipe_cfg=None):
    """Resized input crops for every frame of a clip.

    With a detector the crops follow the pipeline's ROI policy, otherwise
    they are the full frames. Frames the skip policy drops are replaced by
    the full frame so every segment still has an input.
    """
    size = tsn_cfg.input_size
    frames = clip.frames
    if detector is None:
        return np.stack([resize_crop(f, size) for f in frames])
    pipe_cfg = pipe_cfg or PipelineConfig(crop_size=size)
    dets = detect_batch(list(frames), detector)
    out = []
    for t, (f, d) in enumerate(zip(frames, dets)):
        roi = crop_rois(f, d, pipe_cfg, t=t)
        out.append(roi.crop if not roi.absent else resize_crop(f, size))
    return np.stack(out)


def train_tsn(clips, tsn_cfg=None, cfg=None, detector=None, pipe_cfg=None, full_frame=False):
    """Train the temporal classifier on ROI crops (or on full frames with ``full_frame``)."""
    tsn_cfg = tsn_cfg or TSNConfig()
    cfg = cfg or TrainConfig(epochs=20, lr=2e-3)
    if not clips:
        raise InputError("temporal training needs at least one clip")
    if detector is None and not full_frame:
        raise ConfigError("ROI training needs a detector; pass full_frame=True to train on whole frames")
    model = TSNModel.create(tsn_cfg, seed=cfg.seed)
    if cfg.epochs == 0:
        return TrainResult(model, [])
    crops = [clip_crops(c, tsn_cfg, None if full_frame else detector, pipe_cfg) for c in clips]
    labels = torch.tensor([float(c.label) for c in clips])
    K = tsn_cfg.segments

    def make_batch(idx, rng, epoch):
        x = []
        for i in idx:
            sel = sample_segments(len(crops[i]), K, "train", seed=[cfg.seed, epoch, int(i)])
            snip = crops[i][list(sel)]
            if cfg.flip and rng.random() < 0.5:
                snip = snip[:, :, ::-1]
            x.append(to_tensor(snip))
        return torch.stack(x), labels[idx]

    def loss_fn(x, y):
        return F.binary_cross_entropy_with_logits(model(x), y)

    losses, stopped = _fit(model, len(clips), make_batch, loss_fn, cfg, "tsn")
    return TrainResult(model, losses, stopped)


class FullFrameTSN:
    """TSN-only baseline: classify sampled full frames without detection."""

    def __init__(self, tsn, threshold=0.5):
        self.tsn = tsn
        self.threshold = threshold

    def run(self, clip, seed=0):
        from ..pipeline import Verdict
        from ..tsn import predict_crops

        idx = sample_segments(len(clip.frames), self.tsn.cfg.segments, "test", seed)
        p = predict_crops([resize_crop(clip.frames[t], self.tsn.cfg.input_size) for t in idx], self.tsn)
        return Verdict(p, "violent" if p >= self.threshold else "non-violent", idx, [FULL_FRAME] * len(idx))


def predict_label(model, clip, seed=0):
    if hasattr(model, "run"):
        return 1 if model.run(clip, seed).label == "violent" else 0
    return int(model(clip))


def eval_acc(model, clips, seed=0):
    """Fraction of clips whose predicted label equals the ground truth."""
    if not clips:
        raise InputError("cannot compute accuracy on an empty set")
    correct = sum(predict_label(model, c, seed) == int(c.label) for c in clips)
    return correct / len(clips)
