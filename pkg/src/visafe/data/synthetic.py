"""Synthetic stand-ins for the pedestrian and fight datasets.

Actors are "person" glyphs: a skin-toned disc head on top of a
rectangular body in a warm clothing colour. Clutter blobs are headless rectangles and
discs, a third of them in actor colours, plus headless actor-sized
"decoy" bodies. The detector has to learn to ignore all of them.

Video clips hold two actors that either walk side by side on parallel
tracks (non-violent) or repeatedly lunge into each other around a meeting
point (violent). Each clip also holds a decoy pair whose motion law is
drawn independently of the label, and clutter that moves the same way in
both classes, so only the people carry label information.
"""
from dataclasses import dataclass

import cv2
import numpy as np

from ..errors import ConfigError

MOTIONS = ("linear", "colliding-oscillation")
VIOLENT, NON_VIOLENT = 1, 0


@dataclass(frozen=True)
class SyntheticSceneConfig:
    canvas: int = 128
    actor_count: int = 2
    motion: str = None          # None: alternate classes clip by clip
    noise: float = 0.04
    frames: int = 16
    seed: int = 0
    clutter: int = 4            # maximum clutter blobs per scene
    decoys: int = 2             # headless actor-sized bodies (a pair per clip when >= 2)
    actor_height: tuple = (18, 30)
    segments: int = 3

    def __post_init__(self):
        if self.actor_count < 1:
            raise ConfigError("actor_count must be >= 1")
        if self.frames < self.segments:
            raise ConfigError(f"clip length {self.frames} shorter than segment count {self.segments}")
        if self.motion is not None and self.motion not in MOTIONS:
            raise ConfigError(f"unknown motion law {self.motion!r}")
        if self.canvas < 32:
            raise ConfigError("canvas must be at least 32 px")


@dataclass
class DetectionSample:
    image: np.ndarray       # HxWx3 uint8
    boxes: np.ndarray       # (N, 4) xyxy pixel-edge coordinates
    name: str = ""


@dataclass
class VideoSample:
    frames: np.ndarray      # (T, H, W, 3) uint8
    label: int              # 1 violent, 0 non-violent
    name: str = ""
    fps: float = 25.0
    tracks: np.ndarray = None   # (T, actors, 4) ground-truth boxes


@dataclass(frozen=True)
class Glyph:
    w: int
    h: int
    color: tuple
    head_color: tuple = (225, 185, 150)

    @property
    def head_radius(self):
        return max(2, int(round(self.w * 0.3)))

    def area(self):
        """Analytic area: body rectangle plus head disc."""
        r = self.head_radius
        return self.w * (self.h - (2 * r + 1)) + np.pi * r * r


def person_parts(glyph, shape, x, y):
    """Boolean (head, body) masks of a glyph whose bounding box starts at integer (x, y)."""
    head = np.zeros(shape, dtype=np.uint8)
    body = np.zeros(shape, dtype=np.uint8)
    r = glyph.head_radius
    cv2.circle(head, (x + glyph.w // 2, y + r), r, 1, -1)
    cv2.rectangle(body, (x, y + 2 * r + 1), (x + glyph.w - 1, y + glyph.h - 1), 1, -1)
    return head.astype(bool), body.astype(bool)


def person_mask(glyph, shape, x, y):
    head, body = person_parts(glyph, shape, x, y)
    return head | body


def _draw_person(img, glyph, x, y):
    head, body = person_parts(glyph, img.shape[:2], x, y)
    _draw(img, body, glyph.color)
    _draw(img, head, glyph.head_color)


def mask_box(mask):
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None
    return np.array([xs.min(), ys.min(), xs.max() + 1, ys.max() + 1], dtype=np.float64)


def _background(rng, size, noise):
    base = rng.uniform(70, 150)
    img = np.full((size, size, 3), base, dtype=np.float32)
    img += rng.normal(0, 6, size=3).astype(np.float32)
    # low-frequency blotches
    coarse = rng.normal(0, 18, size=(6, 6, 3)).astype(np.float32)
    img += cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC)
    return img


def _finish(img, rng, noise):
    img = img + rng.normal(0, noise * 255, size=img.shape).astype(np.float32)
    return np.clip(img, 0, 255).astype(np.uint8)


def _actor_color(rng):
    return (rng.uniform(200, 255), rng.uniform(60, 150), rng.uniform(20, 70))


def _clutter_color(rng):
    u = rng.random()
    if u < 0.33:
        return _actor_color(rng)
    if u < 0.66:
        g = rng.uniform(170, 240)
        return (g, g, g)
    return (rng.uniform(30, 90), rng.uniform(120, 200), rng.uniform(190, 255))


def _glyph(rng, cfg):
    h = int(rng.integers(cfg.actor_height[0], cfg.actor_height[1] + 1))
    w = max(6, int(round(h * rng.uniform(0.38, 0.5))))
    skin = rng.uniform(0.75, 1.0)
    return Glyph(w, h, _actor_color(rng), (235 * skin, 195 * skin, 160 * skin))


def _decoy_mask(glyph, shape, x, y):
    m = np.zeros(shape, dtype=np.uint8)
    cv2.rectangle(m, (x, y), (x + glyph.w - 1, y + glyph.h - 1), 1, -1)
    return m.astype(bool)


def _draw(img, mask, color):
    img[mask] = np.asarray(color, dtype=np.float32)


def _clutter_shape(rng, size):
    kind = "disc" if rng.random() < 0.5 else "rect"
    s = int(rng.integers(6, 16))
    return kind, s, int(rng.integers(4, 10)) if kind == "rect" else s


def _clutter_mask(shape, kind, a, b, x, y):
    m = np.zeros(shape, dtype=np.uint8)
    if kind == "disc":
        cv2.circle(m, (int(x), int(y)), max(2, a // 2), 1, -1)
    else:
        cv2.rectangle(m, (int(x), int(y)), (int(x) + b - 1, int(y) + a - 1), 1, -1)
    return m.astype(bool)


def _place_pair(rng, size, glyphs):
    """Top-left corners for glyphs standing side by side at fighting distance."""
    wmax = max(g.w for g in glyphs)
    hmax = max(g.h for g in glyphs)
    cx = rng.uniform(wmax * 1.5, size - wmax * 1.5)
    cy = rng.uniform(hmax / 2, size - hmax / 2)
    out = []
    for k, g in enumerate(glyphs):
        dx = (k - (len(glyphs) - 1) / 2) * rng.uniform(0.5, 1.8) * wmax
        dy = rng.normal(0, 2.0)
        x = int(np.clip(round(cx + dx - g.w / 2), 0, size - g.w - 1))
        y = int(np.clip(round(cy + dy - g.h / 2), 0, size - g.h - 1))
        out.append((x, y))
    return out


def _place_spread(rng, size, glyphs):
    boxes, out = [], []
    for g in glyphs:
        for _attempt in range(20):
            x = int(rng.integers(0, size - g.w))
            y = int(rng.integers(0, size - g.h))
            cand = np.array([x, y, x + g.w, y + g.h], dtype=np.float64)
            if all(_overlap(cand, b) < 0.3 for b in boxes):
                break
        boxes.append(cand)
        out.append((x, y))
    return out


def _place(rng, size, glyphs):
    # half of the scenes put the figures close together, as in a scuffle
    if len(glyphs) >= 2 and rng.random() < 0.5:
        return _place_pair(rng, size, glyphs)
    return _place_spread(rng, size, glyphs)


def render_detection_scene(rng, cfg, name=""):
    size = cfg.canvas
    img = _background(rng, size, cfg.noise)
    for _ in range(int(rng.integers(0, cfg.clutter + 1))):
        kind, a, b = _clutter_shape(rng, size)
        _draw(img, _clutter_mask((size, size), kind, a, b, rng.integers(0, size - 8), rng.integers(0, size - 8)),
              _clutter_color(rng))
    decoys = [_glyph(rng, cfg) for _ in range(int(rng.integers(0, cfg.decoys + 1)))]
    for g, (x, y) in zip(decoys, _place(rng, size, decoys)):
        _draw(img, _decoy_mask(g, (size, size), x, y), g.color)
    glyphs = [_glyph(rng, cfg) for _ in range(cfg.actor_count)]
    boxes = []
    for g, (x, y) in zip(glyphs, _place(rng, size, glyphs)):
        _draw_person(img, g, x, y)
        boxes.append([x, y, x + g.w, y + g.h])
    return DetectionSample(_finish(img, rng, cfg.noise), np.array(boxes, dtype=np.float64).reshape(-1, 4), name)


def _overlap(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def gen_detection_scenes(n, cfg):
    """``n`` labelled images; sample ``i`` depends only on ``(cfg.seed, i)``."""
    return [render_detection_scene(np.random.default_rng([cfg.seed, 0, i]), cfg, f"scene_{i:05d}")
            for i in range(n)]


def _actor_paths(rng, cfg, glyphs, motion):
    """Top-left positions (T, actors, 2) for each actor."""
    T, size = cfg.frames, cfg.canvas
    n = len(glyphs)
    wmax = max(g.w for g in glyphs)
    hmax = max(g.h for g in glyphs)
    t = np.arange(T, dtype=np.float64)
    if motion == "linear":
        ang = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.cos(ang), np.sin(ang)])
        perp = np.array([-direction[1], direction[0]])
        gap = rng.uniform(2.8, 4.0) * wmax + wmax
        offsets = np.array([(k - (n - 1) / 2) * gap * perp for k in range(n)])
        margin = np.array([wmax, hmax]) / 2 + 2
        speed = rng.uniform(1.0, 2.5)
        while True:
            rel = offsets[None] + (t[:, None] * speed * direction)[:, None]
            lo = margin - rel.reshape(-1, 2).min(axis=0)
            hi = size - margin - rel.reshape(-1, 2).max(axis=0)
            if np.all(lo <= hi) or speed < 0.05:
                break
            speed *= 0.8
        start = rng.uniform(np.minimum(lo, hi), np.maximum(lo, hi))
        paths = start + rel
    else:
        ang = rng.uniform(0, np.pi)
        u = np.array([np.cos(ang), np.sin(ang) * 0.5])
        u /= np.linalg.norm(u)
        period = rng.uniform(4.0, 7.0)
        phase = rng.uniform(0, np.pi)
        d_min, d_max = 0.5 * wmax, 1.8 * wmax
        d = d_min + (d_max - d_min) * np.abs(np.sin(np.pi * t / period + phase))
        margin = np.array([2 * wmax + 4, hmax + 4])
        centre = rng.uniform(margin, np.array([size, size]) - margin)
        drift = rng.normal(0, 0.3, size=2)
        mid = centre + t[:, None] * drift
        jitter = rng.normal(0, 1.0, size=(T, n, 2))
        paths = np.stack([mid + ((k - (n - 1) / 2) * d)[:, None] * u for k in range(n)], axis=1) + jitter
    sizes = np.array([[g.w, g.h] for g in glyphs], dtype=np.float64)
    paths = paths - sizes[None] / 2      # centres -> top-left corners
    return np.clip(paths, 0, np.array([size, size]) - sizes[None] - 1)


def _path_boxes(paths, glyphs):
    sizes = np.array([[g.w, g.h] for g in glyphs], dtype=np.float64)
    return np.concatenate([paths, paths + sizes[None]], axis=-1)


def _paths_apart(paths_a, glyphs_a, paths_b, glyphs_b, margin=3):
    """True when no box of one group comes within ``margin`` px of the other group in any frame."""
    a = _path_boxes(paths_a, glyphs_a)[:, :, None]
    b = _path_boxes(paths_b, glyphs_b)[:, None]
    gap_x = np.maximum(a[..., 0] - b[..., 2], b[..., 0] - a[..., 2])
    gap_y = np.maximum(a[..., 1] - b[..., 3], b[..., 1] - a[..., 3])
    return bool(np.all(np.maximum(gap_x, gap_y) >= margin))


def render_video_scene(rng, cfg, label, name=""):
    size, T = cfg.canvas, cfg.frames
    motion = "colliding-oscillation" if label == VIOLENT else "linear"
    glyphs = [_glyph(rng, cfg) for _ in range(cfg.actor_count)]
    paths = _actor_paths(rng, cfg, glyphs, motion)
    bg = _background(rng, size, cfg.noise)
    clutter = []
    for _ in range(int(rng.integers(1, cfg.clutter + 1))):
        kind, a, b = _clutter_shape(rng, size)
        p0 = rng.uniform(8, size - 16, size=2)
        v = rng.normal(0, 1.2, size=2)
        osc = rng.uniform(0, 6) if rng.random() < 0.5 else 0.0
        clutter.append((kind, a, b, p0, v, osc, rng.uniform(3, 7), _clutter_color(rng)))
    decoys, decoy_paths = [], None
    if cfg.decoys >= 2:
        decoys = [_glyph(rng, cfg) for _ in range(2)]
        decoy_motion = MOTIONS[int(rng.integers(0, 2))]
        # a decoy walking through a person makes that person's extent ambiguous
        for _attempt in range(30):
            decoy_paths = _actor_paths(rng, cfg, decoys, decoy_motion)
            if _paths_apart(paths, glyphs, decoy_paths, decoys):
                break
    frames = np.empty((T, size, size, 3), dtype=np.uint8)
    tracks = np.zeros((T, len(glyphs), 4))
    for ti in range(T):
        img = bg.copy()
        for kind, a, b, p0, v, osc, per, col in clutter:
            p = p0 + v * ti + osc * np.sin(2 * np.pi * ti / per)
            p = np.mod(p, size - 10)
            _draw(img, _clutter_mask((size, size), kind, a, b, p[0], p[1]), col)
        for k, g in enumerate(decoys):
            x, y = np.round(decoy_paths[ti, k]).astype(int)
            _draw(img, _decoy_mask(g, (size, size), x, y), g.color)
        order = rng.permutation(len(glyphs))
        for k in order:
            x, y = np.round(paths[ti, k]).astype(int)
            _draw_person(img, glyphs[k], x, y)
            tracks[ti, k] = [x, y, x + glyphs[k].w, y + glyphs[k].h]
        frames[ti] = _finish(img, rng, cfg.noise)
    return VideoSample(frames, label, name, tracks=tracks)


def gen_video_scenes(n, cfg):
    """``n`` clips alternating violent / non-violent (or all of ``cfg.motion``)."""
    out = []
    for i in range(n):
        if cfg.motion is None:
            label = VIOLENT if i % 2 == 0 else NON_VIOLENT
        else:
            label = VIOLENT if cfg.motion == "colliding-oscillation" else NON_VIOLENT
        tag = "violent" if label == VIOLENT else "non_violent"
        out.append(render_video_scene(np.random.default_rng([cfg.seed, 1, i]), cfg, label, f"{tag}_{i:05d}"))
    return out


def inter_actor_distance(tracks):
    """Per-frame distance between the centres of the first two actors."""
    c = (tracks[..., :2] + tracks[..., 2:]) / 2
    return np.linalg.norm(c[:, 0] - c[:, 1], axis=-1)
