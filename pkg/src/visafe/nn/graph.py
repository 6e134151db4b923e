"""Model graphs: an ordered list of primitive layer records plus optional weights.

A graph is the single description of a network. It is executed by
:class:`GraphModule`, costed by :mod:`visafe.nn.accounting`, and rewritten
by the pruner. Layers are stored in topological order; every inbound name
must refer to an earlier layer.
"""
import copy
import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ..errors import ConfigError, GraphError
from .layers import make_module

FORMAT = "visafe-graph/1"
WEIGHTS_FILE = "weights.npz"
GRAPH_FILE = "graph.json"


@dataclass
class Layer:
    name: str
    type: str
    config: dict = field(default_factory=dict)
    inbound: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "type": self.type, "config": dict(self.config), "inbound": list(self.inbound)}


@dataclass
class ModelGraph:
    layers: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # layer name -> {param or buffer name -> array}; None means "not initialised"
    weights: dict = None

    @property
    def inputs(self):
        return [l.name for l in self.layers if l.type == "input"]

    def layer(self, name):
        for l in self.layers:
            if l.name == name:
                return l
        raise GraphError(f"no layer named {name!r}")

    def consumers(self, name):
        return [l for l in self.layers if name in l.inbound]

    def validate(self):
        seen = set()
        for l in self.layers:
            if l.name in seen:
                raise GraphError(f"duplicate layer name {l.name!r}")
            for src in l.inbound:
                if src not in seen:
                    raise GraphError(f"{l.name}: inbound {src!r} is not an earlier layer")
            if l.type == "input" and l.inbound:
                raise GraphError(f"input layer {l.name!r} cannot have inbound layers")
            seen.add(l.name)
        for o in self.outputs:
            if o not in seen:
                raise GraphError(f"output {o!r} is not a layer")
        return self

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {
            "format": FORMAT,
            "layers": [l.to_dict() for l in self.layers],
            "outputs": list(self.outputs),
            "meta": copy.deepcopy(self.meta),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format", FORMAT) != FORMAT:
            raise GraphError(f"unsupported graph format {d.get('format')!r}")
        layers = [Layer(r["name"], r["type"], dict(r.get("config", {})), list(r.get("inbound", []))) for r in d["layers"]]
        return cls(layers, list(d.get("outputs", [])), dict(d.get("meta", {}))).validate()

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _key(name):
    return name.replace(".", "__")


class GraphModule(nn.Module):
    """Executes a :class:`ModelGraph` with trainable torch parameters."""

    def __init__(self, graph):
        super().__init__()
        graph.validate()
        self.graph = ModelGraph(copy.deepcopy(graph.layers), list(graph.outputs), copy.deepcopy(graph.meta))
        self.mods = nn.ModuleDict()
        for l in self.graph.layers:
            if l.type != "input":
                self.mods[_key(l.name)] = make_module(l)
        if graph.weights is not None:
            self.load_weights(graph.weights)

    def forward(self, *xs):
        inputs = self.graph.inputs
        if len(xs) != len(inputs):
            raise GraphError(f"expected {len(inputs)} inputs, got {len(xs)}")
        env = {}
        for name, x in zip(inputs, xs):
            want = self.graph.layer(name).config.get("channels")
            if x.dim() != 4 or (want is not None and x.shape[1] != want):
                raise ConfigError(f"input {name!r} expects (B,{want},H,W), got {tuple(x.shape)}")
            env[name] = x
        for l in self.graph.layers:
            if l.type == "input":
                continue
            env[l.name] = self.mods[_key(l.name)](*[env[s] for s in l.inbound])
        outs = [env[o] for o in self.graph.outputs]
        return outs[0] if len(outs) == 1 else tuple(outs)

    def load_weights(self, weights):
        for l in self.graph.layers:
            if l.type == "input":
                continue
            mod = self.mods[_key(l.name)]
            state = mod.state_dict()
            given = weights.get(l.name, {})
            for pname, cur in state.items():
                if pname.endswith("num_batches_tracked"):
                    continue
                if pname not in given:
                    raise GraphError(f"{l.name}: missing weight {pname!r}")
                arr = torch.as_tensor(np.asarray(given[pname]))
                if tuple(arr.shape) != tuple(cur.shape):
                    raise GraphError(f"{l.name}.{pname}: shape {tuple(arr.shape)} != {tuple(cur.shape)}")
                state[pname] = arr.to(cur.dtype)
            mod.load_state_dict(state)

    def export_weights(self):
        out = {}
        for l in self.graph.layers:
            if l.type == "input":
                continue
            state = self.mods[_key(l.name)].state_dict()
            entry = {k: v.detach().cpu().numpy().copy() for k, v in state.items() if not k.endswith("num_batches_tracked")}
            if entry:
                out[l.name] = entry
        return out

    def to_graph(self):
        g = self.graph.copy()
        g.weights = self.export_weights()
        return g


def initialise(graph, seed=0):
    """Return a copy of ``graph`` with freshly initialised weights."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        g = graph.copy()
        g.weights = None
        return GraphModule(g).to_graph()


def save_checkpoint(path, graph, extras=None):
    """Write ``path/graph.json`` and ``path/weights.npz``.

    Weight entries are keyed ``"<layer>::<param>"``; ``extras`` are stored
    under ``"extra::<name>"``.
    """
    os.makedirs(path, exist_ok=True)
    blob = {}
    for lname, params in (graph.weights or {}).items():
        for pname, arr in params.items():
            blob[f"{lname}::{pname}"] = np.asarray(arr)
    for name, arr in (extras or {}).items():
        blob[f"extra::{name}"] = np.asarray(arr)
    doc = graph.to_dict()
    doc["weights"] = WEIGHTS_FILE
    with open(os.path.join(path, GRAPH_FILE), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    np.savez(os.path.join(path, WEIGHTS_FILE), **blob)


def load_checkpoint(path):
    """Load a checkpoint directory, or a bare ``graph.json`` with an optional sibling blob.

    Returns ``(graph, extras)``.
    """
    if os.path.isdir(path):
        gpath = os.path.join(path, GRAPH_FILE)
    else:
        gpath = path
    with open(gpath) as fh:
        doc = json.load(fh)
    graph = ModelGraph.from_dict(doc)
    extras = {}
    wname = doc.get("weights")
    if wname:
        wpath = os.path.join(os.path.dirname(os.path.abspath(gpath)), wname)
        weights = {}
        with np.load(wpath) as blob:
            for key in blob.files:
                lname, pname = key.split("::", 1)
                if lname == "extra":
                    extras[pname] = blob[key]
                else:
                    weights.setdefault(lname, {})[pname] = blob[key]
        graph.weights = weights
    return graph, extras


def save_graph_json(path, graph, weights_name=None):
    """Write a graph as a standalone JSON file, with its weights next to it if present."""
    doc = graph.to_dict()
    if graph.weights is not None:
        stem = os.path.splitext(os.path.basename(path))[0]
        weights_name = weights_name or f"{stem}.npz"
        blob = {f"{l}::{p}": np.asarray(a) for l, ps in graph.weights.items() for p, a in ps.items()}
        np.savez(os.path.join(os.path.dirname(os.path.abspath(path)), weights_name), **blob)
        doc["weights"] = weights_name
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
