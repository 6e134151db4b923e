"""Segment-based temporal classifier.

A clip of ``n`` frames is cut into ``K`` equal segments, one frame is drawn
from each, a small 2D CNN embeds every frame, the embeddings are averaged,
and a logistic head turns the average into a violence probability.
"""
import math
from dataclasses import asdict, dataclass, fields

import cv2
import numpy as np
import torch
from torch import nn

from .errors import ConfigError, InputError, NumericError
from .nn.blocks import C3Config, GhostConvConfig, GraphBuilder, c3, conv_bn_act, ghost_conv
from .nn.graph import GraphModule, load_checkpoint, save_checkpoint


@dataclass
class TSNConfig:
    segments: int = 3
    input_size: int = 64
    feature_dim: int = 128
    width: float = 1.0

    def __post_init__(self):
        if self.segments < 1:
            raise ConfigError(f"segments must be >= 1, got {self.segments}")
        if self.input_size < 32 or self.input_size % 16:
            raise ConfigError(f"input_size must be a multiple of 16 and >= 32, got {self.input_size}")
        if self.feature_dim < 8 or self.feature_dim % 8:
            raise ConfigError(f"feature_dim must be a positive multiple of 8, got {self.feature_dim}")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown tsn config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SegmentIndices:
    K: int
    indices: tuple

    def __post_init__(self):
        if len(self.indices) != self.K:
            raise ConfigError(f"{len(self.indices)} indices for K={self.K}")

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return self.K

    def to_list(self):
        return list(self.indices)


def segment_bounds(n, K):
    return [(s * n // K, (s + 1) * n // K) for s in range(K)]


def sample_segments(num_frames, K, mode="test", seed=0):
    """One frame index per segment; segment ``s`` covers ``[s*n//K, (s+1)*n//K)``.

    ``test`` takes the segment centre, ``train`` a seeded uniform draw inside
    the segment. Empty segments (``n < K``) clamp to the nearest frame.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if num_frames < 1:
        raise InputError("clip has no frames")
    if mode not in ("train", "test"):
        raise ConfigError(f"mode must be 'train' or 'test', got {mode!r}")
    rng = np.random.default_rng(seed) if mode == "train" else None
    out = []
    for lo, hi in segment_bounds(num_frames, K):
        if hi <= lo:
            out.append(min(lo, num_frames - 1))
        elif mode == "test":
            out.append((lo + hi - 1) // 2)
        else:
            out.append(int(rng.integers(lo, hi)))
    return SegmentIndices(K, tuple(out))


@dataclass
class ClassifierHead:
    W: np.ndarray
    b: float

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64).reshape(-1)
        self.b = float(self.b)


def consensus(features):
    """Elementwise mean of the per-segment feature vectors."""
    feats = [np.asarray(f, dtype=np.float64).reshape(-1) for f in features]
    if not feats:
        raise InputError("consensus needs at least one feature vector")
    dims = {f.shape[0] for f in feats}
    if len(dims) != 1:
        raise InputError(f"segment features have different dimensions {sorted(dims)}")
    # math.fsum per coordinate keeps the mean independent of reduction order
    stacked = np.stack(feats)
    return np.array([math.fsum(col) for col in stacked.T]) / len(feats)


def classify(G, head):
    G = np.asarray(G, dtype=np.float64).reshape(-1)
    if G.shape != head.W.shape:
        raise InputError(f"feature dimension {G.shape[0]} does not match head dimension {head.W.shape[0]}")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(head.W)) and math.isfinite(head.b)):
        raise NumericError("non-finite feature or head parameters")
    z = float(head.W @ G + head.b)
    # numerically stable logistic
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _width(c, w):
    return max(8, int(round(c * w / 8)) * 8)


def build_encoder_graph(cfg):
    """Ghost-block CNN, stride 16, global average pooled to ``feature_dim``."""
    c0, c1, c2 = (_width(c, cfg.width) for c in (16, 32, 64))
    d = cfg.feature_dim
    b = GraphBuilder(meta={"kind": "tsn-encoder", "tsn": cfg.to_dict()})
    x = b.input("image", 3)
    y = conv_bn_act(b, x, c0, 3, 2, name="stem")
    y = ghost_conv(b, y, GhostConvConfig(c0, c1, 3, 2), "down1")
    y = c3(b, y, C3Config(c1, c1), "stage1")
    y = ghost_conv(b, y, GhostConvConfig(c1, c2, 3, 2), "down2")
    y = c3(b, y, C3Config(c2, c2), "stage2")
    y = ghost_conv(b, y, GhostConvConfig(c2, d, 3, 2), "down3")
    y = b.gap(y, "pool")
    return b.build([y])


class TSNModel(nn.Module):
    """Encoder plus linear head, batched over clips and segments."""

    def __init__(self, cfg, encoder=None):
        super().__init__()
        self.cfg = cfg
        self.encoder = encoder if encoder is not None else GraphModule(build_encoder_graph(cfg))
        self.head = nn.Linear(cfg.feature_dim, 1)

    @classmethod
    def create(cls, cfg, seed=0):
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            return cls(cfg)

    def features(self, x):
        """(N, 3, S, S) -> (N, D)."""
        return self.encoder(x)

    def forward(self, x):
        """(B, K, 3, S, S) -> logits (B,)."""
        bsz, k = x.shape[:2]
        f = self.features(x.reshape(bsz * k, *x.shape[2:])).reshape(bsz, k, -1)
        return self.head(f.mean(dim=1)).squeeze(-1)

    def classifier_head(self):
        return ClassifierHead(self.head.weight.detach().cpu().double().numpy()[0], self.head.bias.item())

    def save(self, path):
        head = self.classifier_head()
        g = self.encoder.to_graph()
        g.meta["tsn"] = self.cfg.to_dict()
        save_checkpoint(path, g, {"head_W": head.W, "head_b": np.array([head.b])})

    @classmethod
    def load(cls, path):
        g, extras = load_checkpoint(path)
        if "head_W" not in extras:
            raise InputError(f"{path} is not a TSN checkpoint (no head weights)")
        cfg = TSNConfig.from_dict(g.meta.get("tsn", {}))
        m = cls(cfg, GraphModule(g))
        with torch.no_grad():
            m.head.weight.copy_(torch.from_numpy(np.asarray(extras["head_W"], dtype=np.float32)).reshape(1, -1))
            m.head.bias.fill_(float(np.asarray(extras["head_b"]).reshape(-1)[0]))
        return m


def resize_crop(img, size):
    img = np.asarray(img)
    if img.shape[:2] == (size, size):
        return img
    interp = cv2.INTER_AREA if min(img.shape[:2]) > size else cv2.INTER_LINEAR
    return cv2.resize(np.ascontiguousarray(img), (size, size), interpolation=interp)


def to_tensor(crops):
    """uint8 (N, S, S, 3) -> float (N, 3, S, S) in [0, 1]."""
    arr = np.asarray(crops)
    arr = arr.astype(np.float32) / 255.0 if arr.dtype == np.uint8 else arr.astype(np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


@torch.no_grad()
def encode_snippet(crop, model):
    """Embed one resized crop (S x S x 3). Returns a float64 vector of length D."""
    crop = np.asarray(crop)
    s = model.cfg.input_size
    if crop.ndim != 3 or crop.shape != (s, s, 3):
        raise InputError(f"crop must be {s}x{s}x3, got {crop.shape}")
    was = model.training
    model.eval()
    try:
        f = model.features(to_tensor(crop[None]).to(model.head.weight.device))[0].cpu()
    finally:
        model.train(was)
    return f.double().numpy()


def predict_crops(crops, model):
    """Violence probability for one clip given its K resized crops."""
    feats = [encode_snippet(c, model) for c in crops]
    return classify(consensus(feats), model.classifier_head())
