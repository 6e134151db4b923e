"""Analytic parameter and FLOP accounting for model graphs.

FLOPs follow the detector-table convention: 2 x multiply-accumulates of
conv, linear and attention matmul transforms. Normalisation, activations,
pooling, resampling and elementwise ops cost nothing.
"""
import json
from dataclasses import dataclass

from ..errors import GraphError


@dataclass(frozen=True)
class TensorSpec:
    batch: int = 1
    channels: int = 3
    height: int = 32
    width: int = 32

    def __post_init__(self):
        if min(self.batch, self.channels, self.height, self.width) < 1:
            raise GraphError(f"all TensorSpec fields must be >= 1, got {self}")


@dataclass(frozen=True)
class CostReport:
    params: int
    flops: int

    @property
    def gflops(self):
        return self.flops / 1e9

    def to_dict(self):
        return {"params": self.params, "flops": self.flops, "gflops": self.gflops}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self, name="model"):
        return (f"{'Model':<16}{'Params':>14}{'GFLOPs':>12}\n"
                f"{name:<16}{self.params / 1e6:>13.4f}M{self.gflops:>12.4f}")


def layer_params(layer):
    cfg = layer.config
    t = layer.type
    if t == "conv":
        n = cfg["out_channels"] * (cfg["in_channels"] // cfg.get("groups", 1)) * cfg["kernel"] ** 2
        return n + (cfg["out_channels"] if cfg.get("bias", False) else 0)
    if t == "bn":
        return 2 * cfg["channels"]
    if t == "linear":
        return cfg["in_features"] * cfg["out_features"] + (cfg["out_features"] if cfg.get("bias", True) else 0)
    if t == "ema":
        cg = cfg["channels"] // cfg["groups"]
        return (cg * cg + cg) + (cg * cg * 9 + cg) + 2 * cg
    return 0


def count_params(graph):
    """Exact count of learnable scalars."""
    return sum(layer_params(l) for l in graph.layers)


def _spec_map(graph, input):
    names = graph.inputs
    if isinstance(input, TensorSpec):
        if len(names) != 1:
            raise GraphError(f"graph has {len(names)} inputs; pass a mapping of TensorSpecs")
        return {names[0]: input}
    return dict(input)


def infer_shapes(graph, input):
    """Propagate shapes through the graph. Returns ``{layer name: shape tuple}``."""
    specs = _spec_map(graph, input)
    shapes = {}

    def need4(name, src):
        s = shapes[src]
        if len(s) != 4:
            raise GraphError(f"{name}: expects a 4-D feature map from {src!r}, got {s}")
        return s

    for l in graph.layers:
        cfg = l.config
        t = l.type
        if t == "input":
            if l.name not in specs:
                raise GraphError(f"no TensorSpec for input {l.name!r}")
            sp = specs[l.name]
            if cfg.get("channels", sp.channels) != sp.channels:
                raise GraphError(f"input {l.name!r} has {cfg['channels']} channels, spec says {sp.channels}")
            shapes[l.name] = (sp.batch, sp.channels, sp.height, sp.width)
            continue
        if any(src not in shapes for src in l.inbound) or not l.inbound:
            raise GraphError(f"{l.name}: unresolved inbound {l.inbound}")
        if t == "conv":
            b, c, h, w = need4(l.name, l.inbound[0])
            if c != cfg["in_channels"]:
                raise GraphError(f"{l.name}: expects {cfg['in_channels']} channels, gets {c}")
            k, s = cfg["kernel"], cfg.get("stride", 1)
            p = k // 2
            shapes[l.name] = (b, cfg["out_channels"], (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
        elif t in ("bn", "ema"):
            b, c, h, w = need4(l.name, l.inbound[0])
            if c != cfg["channels"]:
                raise GraphError(f"{l.name}: expects {cfg['channels']} channels, gets {c}")
            if t == "ema" and c % cfg["groups"]:
                raise GraphError(f"{l.name}: groups {cfg['groups']} do not divide {c}")
            shapes[l.name] = (b, c, h, w)
        elif t == "act":
            shapes[l.name] = shapes[l.inbound[0]]
        elif t == "add":
            ss = {shapes[s] for s in l.inbound}
            if len(ss) != 1:
                raise GraphError(f"{l.name}: cannot add shapes {sorted(ss)}")
            shapes[l.name] = ss.pop()
        elif t == "concat":
            ss = [need4(l.name, s) for s in l.inbound]
            if len({(s[0], s[2], s[3]) for s in ss}) != 1:
                raise GraphError(f"{l.name}: concat inputs disagree on batch/spatial dims {ss}")
            shapes[l.name] = (ss[0][0], sum(s[1] for s in ss), ss[0][2], ss[0][3])
        elif t == "upsample":
            b, c, h, w = need4(l.name, l.inbound[0])
            k = cfg.get("scale", 2)
            shapes[l.name] = (b, c, h * k, w * k)
        elif t == "gap":
            b, c, _, _ = need4(l.name, l.inbound[0])
            shapes[l.name] = (b, c)
        elif t == "linear":
            s = shapes[l.inbound[0]]
            if len(s) != 2 or s[1] != cfg["in_features"]:
                raise GraphError(f"{l.name}: expects (B,{cfg['in_features']}), gets {s}")
            shapes[l.name] = (s[0], cfg["out_features"])
        else:
            raise GraphError(f"{l.name}: unknown layer type {t!r}")
    return shapes


def layer_macs(layer, shapes):
    cfg = layer.config
    t = layer.type
    if t == "conv":
        b, co, h, w = shapes[layer.name]
        return b * co * (cfg["in_channels"] // cfg.get("groups", 1)) * cfg["kernel"] ** 2 * h * w
    if t == "linear":
        return shapes[layer.name][0] * cfg["in_features"] * cfg["out_features"]
    if t == "ema":
        b, c, h, w = shapes[layer.name]
        g = cfg["groups"]
        cg = c // g
        per_group = cg * cg * (h + w) + cg * cg * 9 * h * w + 2 * cg * h * w
        return b * g * per_group
    return 0


def layer_costs(graph, input):
    """Per-layer ``(name, params, flops)`` in graph order."""
    shapes = infer_shapes(graph, input)
    return [(l.name, layer_params(l), 2 * layer_macs(l, shapes)) for l in graph.layers]


def count_flops(graph, input):
    return sum(f for _, _, f in layer_costs(graph, input))


def cost_report(graph, input):
    return CostReport(count_params(graph), count_flops(graph, input))
