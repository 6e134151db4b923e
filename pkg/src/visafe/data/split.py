"""Seeded 8:2 train/test partition and manifests."""
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

TRAIN_FRACTION = 0.8


def split_dataset(items, seed=0):
    """Shuffle with ``seed`` and cut 80/20. Returns ``(train, test)`` lists."""
    items = list(items)
    if len(items) < 5:
        raise InputError(f"need at least 5 items to split, got {len(items)}")
    order = np.random.default_rng(seed).permutation(len(items))
    n_train = int(round(TRAIN_FRACTION * len(items)))
    return [items[i] for i in order[:n_train]], [items[i] for i in order[n_train:]]


@dataclass
class DatasetManifest:
    root: str
    kind: str                       # "detection" or "video"
    seed: int
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def items(self, split):
        if split not in ("train", "test"):
            raise InputError(f"unknown split {split!r}")
        return self.train if split == "train" else self.test

    def to_dict(self):
        return {"root": self.root, "kind": self.kind, "seed": self.seed, "train": self.train, "test": self.test}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["root"], d["kind"], d["seed"], [list(x) for x in d["train"]], [list(x) for x in d["test"]])


def make_manifest(root, kind, seed=0):
    from .io import list_detection_items, list_video_items

    items = list_detection_items(root) if kind == "detection" else list_video_items(root)
    # store paths relative to root so a dataset directory can be moved
    rel = [[os.path.relpath(a, root), b if kind == "video" else os.path.relpath(b, root)] for a, b in items]
    train, test = split_dataset(rel, seed)
    return DatasetManifest(os.path.abspath(root), kind, seed, train, test)


def resolve(manifest, split):
    """Absolute ``(path, label-or-annotation)`` pairs for one split."""
    out = []
    for a, b in manifest.items(split):
        if manifest.kind == "video":
            out.append((os.path.join(manifest.root, a), b))
        else:
            out.append((os.path.join(manifest.root, a), os.path.join(manifest.root, b)))
    return out
