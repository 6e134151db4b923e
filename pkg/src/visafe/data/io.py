"""On-disk dataset layouts.

Detection sets: ``images/<name>.png`` with YOLO labels ``labels/<name>.txt``
(``class cx cy w h`` normalised to [0, 1]). Video sets: one directory per
class (``violent/``, ``non_violent/``) holding clips, each a frame folder
of zero-padded numeric PNG/JPG names or a single decodable container file.
"""
import json
import os

import cv2
import numpy as np

from ..errors import InputError
from .synthetic import NON_VIOLENT, VIOLENT, DetectionSample, VideoSample

CLASS_DIRS = {"violent": VIOLENT, "non_violent": NON_VIOLENT, "fight": VIOLENT, "nonfight": NON_VIOLENT,
              "NonFight": NON_VIOLENT, "Fight": VIOLENT}
IMAGE_EXT = (".png", ".jpg", ".jpeg", ".bmp")
VIDEO_EXT = (".avi", ".mp4", ".mkv", ".mov")


def boxes_to_yolo(boxes, width, height, cls=0):
    lines = []
    for x1, y1, x2, y2 in np.asarray(boxes).reshape(-1, 4):
        cx, cy = (x1 + x2) / 2 / width, (y1 + y2) / 2 / height
        lines.append(f"{cls} {cx:.6f} {cy:.6f} {(x2 - x1) / width:.6f} {(y2 - y1) / height:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")


def yolo_to_boxes(text, width, height):
    rows = []
    for ln, line in enumerate(text.splitlines()):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise InputError(f"label line {ln + 1}: expected 'class cx cy w h', got {line!r}")
        _, cx, cy, w, h = map(float, parts)
        if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            raise InputError(f"label line {ln + 1}: values must be normalised to [0, 1]")
        rows.append([(cx - w / 2) * width, (cy - h / 2) * height, (cx + w / 2) * width, (cy + h / 2) * height])
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def read_image(path):
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise InputError(f"cannot read image {path}")
    return np.ascontiguousarray(img[:, :, ::-1])


def write_image(path, img):
    cv2.imwrite(str(path), np.ascontiguousarray(np.asarray(img)[:, :, ::-1]))


def write_detection_set(root, samples):
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "labels"), exist_ok=True)
    for s in samples:
        h, w = s.image.shape[:2]
        write_image(os.path.join(root, "images", f"{s.name}.png"), s.image)
        with open(os.path.join(root, "labels", f"{s.name}.txt"), "w") as fh:
            fh.write(boxes_to_yolo(s.boxes, w, h))


def list_detection_items(root):
    """``(image path, label path)`` pairs, sorted by name."""
    img_dir = os.path.join(root, "images")
    if not os.path.isdir(img_dir):
        raise InputError(f"{root} has no images/ directory")
    items = []
    for fn in sorted(os.listdir(img_dir)):
        stem, ext = os.path.splitext(fn)
        if ext.lower() in IMAGE_EXT:
            items.append((os.path.join(img_dir, fn), os.path.join(root, "labels", stem + ".txt")))
    return items


def load_detection_item(item):
    img_path, lbl_path = item
    img = read_image(img_path)
    text = open(lbl_path).read() if os.path.exists(lbl_path) else ""
    return DetectionSample(img, yolo_to_boxes(text, img.shape[1], img.shape[0]),
                           os.path.splitext(os.path.basename(img_path))[0])


def write_video_set(root, clips):
    for c in clips:
        d = os.path.join(root, "violent" if c.label == VIOLENT else "non_violent", c.name)
        os.makedirs(d, exist_ok=True)
        for t, f in enumerate(c.frames):
            write_image(os.path.join(d, f"{t:06d}.png"), f)


def list_video_items(root):
    """``(clip path, label)`` pairs across the class directories, sorted by path."""
    items = []
    for cls_dir in sorted(os.listdir(root)):
        full = os.path.join(root, cls_dir)
        if cls_dir not in CLASS_DIRS or not os.path.isdir(full):
            continue
        for name in sorted(os.listdir(full)):
            p = os.path.join(full, name)
            if os.path.isdir(p) or os.path.splitext(name)[1].lower() in VIDEO_EXT:
                items.append((p, CLASS_DIRS[cls_dir]))
    if not items:
        raise InputError(f"no clips found under {root}")
    return items


def read_clip(path, max_frames=None):
    """Frames (T, H, W, 3) uint8 RGB from a frame folder or a video container."""
    frames = []
    if os.path.isdir(path):
        names = [n for n in os.listdir(path) if os.path.splitext(n)[1].lower() in IMAGE_EXT]
        names.sort(key=lambda n: int(os.path.splitext(n)[0]) if os.path.splitext(n)[0].isdigit() else n)
        for n in names[:max_frames]:
            frames.append(read_image(os.path.join(path, n)))
    else:
        cap = cv2.VideoCapture(str(path))
        while cap.isOpened() and (max_frames is None or len(frames) < max_frames):
            ok, f = cap.read()
            if not ok:
                break
            frames.append(f[:, :, ::-1])
        cap.release()
    if not frames:
        raise InputError(f"clip {path} has no decodable frames")
    if len({f.shape for f in frames}) != 1:
        raise InputError(f"clip {path} has frames of different sizes")
    return np.stack(frames)


def load_video_item(item, max_frames=None):
    path, label = item
    return VideoSample(read_clip(path, max_frames), label, os.path.basename(path.rstrip("/")))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
