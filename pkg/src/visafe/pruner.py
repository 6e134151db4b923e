"""Structured channel pruning by per-channel L2 weight norm.

Every output channel of a full convolution or linear layer is an *atom*.
Channel-preserving layers (norm, activation, depthwise conv, upsample,
attention) pass atoms through, concat stacks them, and residual adds tie
the atoms they combine into one class. A class is a channel that
must be kept or removed as a whole. Producers whose classes touch form a
dependency group; each group is pruned to ``ceil((1 - ratio) * C)`` of its
``C`` classes, keeping the highest summed L2 norms.

Atoms reaching graph inputs, graph outputs, attention layers or layers
whose names start with a prefix in ``graph.meta["prune_ignore"]`` are
frozen, along with every group that contains them.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GraphError, InputError, PlanError


def channel_importance(weights):
    """L2 norm of one channel's weight slice: sqrt of the sum of squared elements."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise InputError("empty weight slice")
    return float(np.sqrt(np.sum(w * w)))


@dataclass(frozen=True)
class ChannelImportance:
    layer_id: str
    channel_index: int
    score: float
    n: int


@dataclass
class DependencyGroup:
    producers: list
    members: list          # (layer, param, axis)
    channels: int
    frozen: bool = False

    def to_dict(self):
        return {"producers": self.producers, "members": [list(m) for m in self.members],
                "channels": self.channels, "frozen": self.frozen}


@dataclass
class PruningPlan:
    ratio: float
    keep_masks: dict = field(default_factory=dict)   # producer layer -> list[bool]

    def kept(self, layer):
        return int(sum(self.keep_masks[layer]))

    def to_dict(self):
        return {"ratio": self.ratio, "masks": {k: [int(v) for v in m] for k, m in sorted(self.keep_masks.items())}}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["ratio"]), {k: [bool(v) for v in m] for k, m in d.get("masks", {}).items()})


class _UnionFind:
    def __init__(self):
        self.parent = []

    def make(self, n):
        start = len(self.parent)
        self.parent.extend(range(start, start + n))
        return np.arange(start, start + n)

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


class ChannelAnalysis:
    """Channel layouts, classes and dependency groups of one graph."""

    def __init__(self, graph):
        graph.validate()
        self.graph = graph
        uf = _UnionFind()
        layouts = {}
        owner = []            # atom -> (producer, index)
        frozen = set()
        members = {}          # layer -> list of (param, axis, layout)

        def new_atoms(name, n):
            a = uf.make(n)
            owner.extend((name, i) for i in range(n))
            return a

        for l in graph.layers:
            cfg = l.config
            t = l.type
            ins = [layouts[s] for s in l.inbound]
            if t == "input":
                layouts[l.name] = new_atoms(l.name, cfg["channels"])
                frozen.update(layouts[l.name].tolist())
            elif t == "conv":
                x = ins[0]
                if len(x) != cfg["in_channels"]:
                    raise GraphError(f"{l.name}: expects {cfg['in_channels']} channels, gets {len(x)}")
                groups = cfg.get("groups", 1)
                if groups == 1:
                    out = new_atoms(l.name, cfg["out_channels"])
                    members[l.name] = [("weight", 0, out), ("weight", 1, x)]
                elif groups == cfg["in_channels"]:
                    out = np.repeat(x, cfg["out_channels"] // groups)
                    members[l.name] = [("weight", 0, out)]
                else:
                    out = new_atoms(l.name, cfg["out_channels"])
                    frozen.update(x.tolist())
                    frozen.update(out.tolist())
                    members[l.name] = [("weight", 0, out)]
                if cfg.get("bias", False):
                    members[l.name].append(("bias", 0, out))
                layouts[l.name] = out
            elif t == "linear":
                x = ins[0]
                out = new_atoms(l.name, cfg["out_features"])
                members[l.name] = [("weight", 0, out), ("weight", 1, x)]
                if cfg.get("bias", True):
                    members[l.name].append(("bias", 0, out))
                layouts[l.name] = out
            elif t == "bn":
                x = ins[0]
                members[l.name] = [(p, 0, x) for p in ("weight", "bias", "running_mean", "running_var")]
                layouts[l.name] = x
            elif t in ("act", "upsample", "gap"):
                layouts[l.name] = ins[0]
            elif t == "ema":
                layouts[l.name] = ins[0]
                frozen.update(ins[0].tolist())
            elif t == "add":
                for other in ins[1:]:
                    if len(other) != len(ins[0]):
                        raise GraphError(f"{l.name}: cannot add {len(ins[0])} and {len(other)} channels")
                    for a, b in zip(ins[0], other):
                        uf.union(int(a), int(b))
                layouts[l.name] = ins[0]
            elif t == "concat":
                layouts[l.name] = np.concatenate(ins)
            else:
                raise GraphError(f"{l.name}: unknown layer type {t!r}")
        for o in graph.outputs:
            frozen.update(layouts[o].tolist())
        ignore = tuple(graph.meta.get("prune_ignore", ()))
        if ignore:
            for name, lay in layouts.items():
                if name.startswith(ignore):
                    frozen.update(lay.tolist())

        n_atoms = len(owner)
        self.layouts = layouts
        self.owner = owner
        self.members = members
        self.atom_class = np.array([uf.find(a) for a in range(n_atoms)], dtype=np.int64)
        frozen_classes = {int(self.atom_class[a]) for a in frozen}

        # producers sharing any class form one dependency group
        puf = _UnionFind()
        producers = [l.name for l in graph.layers if self._is_producer(l)]
        pidx = {p: i for i, p in enumerate(producers)}
        puf.make(len(producers))
        first_owner = {}
        for a in range(n_atoms):
            c = int(self.atom_class[a])
            p = pidx[owner[a][0]]
            if c in first_owner:
                puf.union(first_owner[c], p)
            else:
                first_owner[c] = p
        comp = {}
        for p in producers:
            comp.setdefault(puf.find(pidx[p]), []).append(p)

        self.groups = []
        self.group_classes = []   # per group: ordered class ids (channel index order)
        self.class_group = {}
        for root in sorted(comp):
            prods = comp[root]
            classes = []
            seen = set()
            for a in range(n_atoms):
                if owner[a][0] in prods:
                    c = int(self.atom_class[a])
                    if c not in seen:
                        seen.add(c)
                        classes.append(c)
            gi = len(self.groups)
            for c in classes:
                self.class_group[c] = gi
            self.groups.append(DependencyGroup(prods, [], len(classes), any(c in frozen_classes for c in classes)))
            self.group_classes.append(classes)
        for lname, ms in members.items():
            for param, axis, layout in ms:
                gs = {self.class_group[int(self.atom_class[a])] for a in layout}
                for gi in gs:
                    self.groups[gi].members.append((lname, param, axis))

    @staticmethod
    def _is_producer(layer):
        if layer.type in ("input", "linear"):
            return True
        if layer.type != "conv":
            return False
        groups = layer.config.get("groups", 1)
        return groups == 1 or groups != layer.config["in_channels"]

    def producers(self):
        return [l.name for l in self.graph.layers if self._is_producer(l)]


def analyze(graph):
    return ChannelAnalysis(graph)


def dependency_groups(graph):
    return ChannelAnalysis(graph).groups


def _require_weights(graph):
    if graph.weights is None:
        raise GraphError("graph has no weights; initialise or load a checkpoint first")


def channel_scores(graph):
    """Per-layer, per-output-channel L2 importance of every conv and linear weight."""
    _require_weights(graph)
    out = []
    for l in graph.layers:
        if l.type not in ("conv", "linear"):
            continue
        w = np.asarray(graph.weights[l.name]["weight"])
        for c in range(w.shape[0]):
            out.append(ChannelImportance(l.name, c, channel_importance(w[c]), int(w[c].size)))
    return out


def class_scores(analysis):
    """Summed L2 norm of every weight slice (producer rows and consumer columns) per channel class."""
    graph = analysis.graph
    _require_weights(graph)
    scores = np.zeros(len(analysis.owner), dtype=np.float64)   # indexed by class id (= root atom)
    for lname, ms in analysis.members.items():
        for param, axis, layout in ms:
            if param != "weight":
                continue
            w = np.asarray(graph.weights[lname][param], dtype=np.float64)
            sq = np.moveaxis(w * w, axis, 0).reshape(w.shape[axis], -1).sum(axis=1)
            np.add.at(scores, analysis.atom_class[layout], np.sqrt(sq))
    return scores


def kept_count(channels, ratio):
    # tolerance guards against (1 - 0.4) * 10 == 6.000000000000001
    return max(1, math.ceil((1.0 - ratio) * channels - 1e-9))


def build_plan(graph, ratio):
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"pruning ratio must lie in [0, 1), got {ratio}")
    an = ChannelAnalysis(graph)
    scores = class_scores(an)
    keep_class = {}
    for grp, classes in zip(an.groups, an.group_classes):
        if grp.frozen:
            for c in classes:
                keep_class[c] = True
            continue
        k = kept_count(len(classes), ratio)
        # highest score first; equal scores keep the lower channel index
        ranked = sorted(range(len(classes)), key=lambda i: (-scores[classes[i]], i))
        top = set(ranked[:k])
        for i, c in enumerate(classes):
            keep_class[c] = i in top
    masks = {}
    for grp in an.groups:
        if grp.frozen:
            continue
        for p in grp.producers:
            layout = an.layouts[p]
            masks[p] = [keep_class[int(an.atom_class[a])] for a in layout]
    return PruningPlan(float(ratio), masks)


def apply_plan(graph, plan):
    """Return a new graph with pruned channels sliced out of every coupled tensor.

    Masks whose length already equals the kept count are treated as
    applied, so re-applying a plan to its own output is the identity.
    """
    an = ChannelAnalysis(graph)
    keep_atom = np.ones(len(an.owner), dtype=bool)
    producers = set(an.producers())
    for name, mask in plan.keep_masks.items():
        if name not in producers:
            raise PlanError(f"plan names {name!r}, which is not a prunable producer of this graph")
        layout = an.layouts[name]
        mask = np.asarray(mask, dtype=bool)
        if len(mask) == len(layout):
            keep_atom[layout] = mask
        elif int(mask.sum()) != len(layout):
            raise PlanError(f"{name}: mask of length {len(mask)} does not fit {len(layout)} channels")
    for c in np.unique(an.atom_class):
        vals = keep_atom[an.atom_class == c]
        if vals.any() != vals.all():
            raise PlanError("inconsistent masks: coupled channels disagree")
    for grp, classes in zip(an.groups, an.group_classes):
        kept = [keep_atom[an.atom_class == c].all() for c in classes]
        if grp.frozen and not all(kept):
            raise PlanError(f"plan prunes frozen group {grp.producers}")
        if not any(kept):
            raise PlanError(f"plan removes every channel of group {grp.producers}")

    out = graph.copy()
    keep_idx = {name: np.nonzero(keep_atom[lay])[0] for name, lay in an.layouts.items()}
    for l in out.layers:
        cfg = l.config
        ins = [keep_idx[s] for s in l.inbound]
        if l.type == "conv":
            cfg["in_channels"] = len(ins[0])
            cfg["out_channels"] = len(keep_idx[l.name])
            if graph.layer(l.name).config.get("groups", 1) != 1:
                cfg["groups"] = len(ins[0])
        elif l.type == "linear":
            cfg["in_features"] = len(ins[0])
            cfg["out_features"] = len(keep_idx[l.name])
        elif l.type == "bn":
            cfg["channels"] = len(ins[0])
    if graph.weights is not None:
        weights = {}
        for lname, params in graph.weights.items():
            weights[lname] = {p: np.array(a, copy=True) for p, a in params.items()}
        for lname, ms in an.members.items():
            for param, axis, layout in ms:
                idx = np.nonzero(keep_atom[layout])[0]
                if len(idx) != len(layout):
                    weights[lname][param] = np.take(weights[lname][param], idx, axis=axis)
        out.weights = weights
    return out.validate()


def prune(graph, ratio):
    """Build and apply a plan in one step. Returns ``(pruned graph, plan)``."""
    plan = build_plan(graph, ratio)
    return apply_plan(graph, plan), plan


def finetune(graph, dataset, epochs=5, lr=4e-3, **kw):
    """Fine-tune a pruned detector graph on labelled detection samples; returns the updated graph."""
    from .harness.training import finetune_detector

    if len(dataset) == 0:
        raise InputError("fine-tuning needs a non-empty dataset")
    return finetune_detector(graph, dataset, epochs=epochs, lr=lr, **kw)
