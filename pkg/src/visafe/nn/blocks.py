"""Graph builders for convolution blocks: Conv-BN-act, GhostConv, C3/C3Ghost and EMA."""
from dataclasses import dataclass

import torch

from ..errors import ConfigError
from .graph import GraphModule, Layer, ModelGraph


class GraphBuilder:
    """Appends primitive layers and tracks channel counts by layer name."""

    def __init__(self, meta=None):
        self.layers = []
        self.meta = dict(meta or {})
        self._channels = {}

    def channels(self, name):
        return self._channels[name]

    def add(self, name, type_, config, inbound, channels):
        if name in self._channels:
            raise ConfigError(f"duplicate layer name {name!r}")
        self.layers.append(Layer(name, type_, dict(config), list(inbound)))
        self._channels[name] = channels
        return name

    def input(self, name, channels):
        return self.add(name, "input", {"channels": channels}, [], channels)

    def conv(self, x, out_channels, kernel=1, stride=1, groups=1, bias=False, name=None, padding_mode="zeros"):
        cin = self.channels(x)
        if kernel % 2 == 0:
            raise ConfigError(f"{name}: kernel must be odd, got {kernel}")
        if cin % groups or out_channels % groups:
            raise ConfigError(f"{name}: groups={groups} must divide {cin} and {out_channels}")
        cfg = {"in_channels": cin, "out_channels": out_channels, "kernel": kernel, "stride": stride,
               "groups": groups, "bias": bias}
        if padding_mode != "zeros":
            cfg["padding_mode"] = padding_mode
        return self.add(name, "conv", cfg, [x], out_channels)

    def bn(self, x, name):
        c = self.channels(x)
        return self.add(name, "bn", {"channels": c}, [x], c)

    def act(self, x, fn, name):
        return self.add(name, "act", {"fn": fn}, [x], self.channels(x))

    def concat(self, xs, name):
        return self.add(name, "concat", {}, xs, sum(self.channels(x) for x in xs))

    def add_(self, xs, name):
        cs = {self.channels(x) for x in xs}
        if len(cs) != 1:
            raise ConfigError(f"{name}: cannot add tensors with channels {sorted(cs)}")
        return self.add(name, "add", {}, xs, cs.pop())

    def upsample(self, x, name, scale=2):
        return self.add(name, "upsample", {"scale": scale}, [x], self.channels(x))

    def ema(self, x, groups, name):
        c = self.channels(x)
        EMAConfig(c, groups)
        return self.add(name, "ema", {"channels": c, "groups": groups}, [x], c)

    def gap(self, x, name):
        return self.add(name, "gap", {}, [x], self.channels(x))

    def linear(self, x, out_features, name, bias=True):
        return self.add(name, "linear", {"in_features": self.channels(x), "out_features": out_features, "bias": bias},
                        [x], out_features)

    def build(self, outputs):
        return ModelGraph(list(self.layers), list(outputs), dict(self.meta)).validate()


@dataclass(frozen=True)
class GhostConvConfig:
    in_channels: int
    out_channels: int
    kernel: int = 1
    stride: int = 1
    ratio: int = 2
    cheap_kernel: int = 5
    norm: bool = True
    act: str = "silu"

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.stride, self.ratio) < 1:
            raise ConfigError(f"non-positive field in {self}")
        if self.out_channels % self.ratio:
            raise ConfigError(f"out_channels={self.out_channels} not divisible by ratio={self.ratio}")
        if self.kernel % 2 == 0 or self.cheap_kernel % 2 == 0:
            raise ConfigError("kernel and cheap_kernel must be odd")

    @property
    def primary_channels(self):
        return self.out_channels // self.ratio


@dataclass(frozen=True)
class C3Config:
    in_channels: int
    out_channels: int
    depth: int = 1
    expansion: float = 0.5
    ghost: bool = True
    residual: bool = True

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.depth) < 1:
            raise ConfigError(f"non-positive field in {self}")
        if self.hidden < 2 or (self.ghost and self.hidden % 4):
            raise ConfigError(f"hidden width {self.hidden} too small or not a multiple of 4 for ghost bottlenecks")

    @property
    def hidden(self):
        return int(self.out_channels * self.expansion)


@dataclass(frozen=True)
class EMAConfig:
    channels: int
    groups: int = 8

    def __post_init__(self):
        if self.groups < 1 or self.channels < 1 or self.channels % self.groups:
            raise ConfigError(f"groups={self.groups} must divide channels={self.channels}")


def conv_bn_act(b, x, out_channels, kernel=1, stride=1, groups=1, act="silu", norm=True, bias=None, name="conv"):
    bias = (not norm) if bias is None else bias
    y = b.conv(x, out_channels, kernel, stride, groups, bias=bias, name=f"{name}.conv")
    if norm:
        y = b.bn(y, f"{name}.bn")
    if act != "identity":
        y = b.act(y, act, f"{name}.act")
    return y


def ghost_conv(b, x, cfg, name="ghost"):
    """Primary conv to ``out/ratio`` channels, depthwise cheap conv for the rest, concatenated."""
    if b.channels(x) != cfg.in_channels:
        raise ConfigError(f"{name}: input has {b.channels(x)} channels, config expects {cfg.in_channels}")
    c_ = cfg.primary_channels
    y1 = conv_bn_act(b, x, c_, cfg.kernel, cfg.stride, act=cfg.act, norm=cfg.norm, bias=False,
                     name=f"{name}.primary")
    if cfg.ratio == 1:
        return y1
    y2 = conv_bn_act(b, y1, cfg.out_channels - c_, cfg.cheap_kernel, 1, groups=c_, act=cfg.act, norm=cfg.norm,
                     bias=False, name=f"{name}.cheap")
    return b.concat([y1, y2], f"{name}.cat")


def ghost_bottleneck(b, x, c2, name="gb"):
    c1 = b.channels(x)
    y = ghost_conv(b, x, GhostConvConfig(c1, c2 // 2, 1), f"{name}.cv1")
    y = ghost_conv(b, y, GhostConvConfig(c2 // 2, c2, 1, act="identity"), f"{name}.cv2")
    if c1 == c2:
        y = b.add_([x, y], f"{name}.add")
    return y


def bottleneck(b, x, c2, name="bneck"):
    c1 = b.channels(x)
    y = conv_bn_act(b, x, c2, 1, name=f"{name}.cv1")
    y = conv_bn_act(b, y, c2, 3, name=f"{name}.cv2")
    if c1 == c2:
        y = b.add_([x, y], f"{name}.add")
    return y


def c3(b, x, cfg, name="c3"):
    """CSP block: two 1x1 branches, a bottleneck stack on one, fused by a 1x1 conv.

    With ``cfg.residual`` and equal in/out widths the block input is added
    to the fused output.
    """
    if b.channels(x) != cfg.in_channels:
        raise ConfigError(f"{name}: input has {b.channels(x)} channels, config expects {cfg.in_channels}")
    c_ = cfg.hidden
    if cfg.ghost:
        pw = lambda inp, cout, n, act="silu": ghost_conv(b, inp, GhostConvConfig(b.channels(inp), cout, 1, act=act), n)
    else:
        pw = lambda inp, cout, n, act="silu": conv_bn_act(b, inp, cout, 1, act=act, name=n)
    a = pw(x, c_, f"{name}.cv1")
    for i in range(cfg.depth):
        if cfg.ghost:
            a = ghost_bottleneck(b, a, c_, f"{name}.m{i}")
        else:
            a = bottleneck(b, a, c_, f"{name}.m{i}")
    s = pw(x, c_, f"{name}.cv2")
    y = b.concat([a, s], f"{name}.cat")
    y = pw(y, cfg.out_channels, f"{name}.cv3")
    if cfg.residual and cfg.in_channels == cfg.out_channels:
        y = b.add_([x, y], f"{name}.res")
    return y


def ghost_conv_graph(cfg):
    b = GraphBuilder()
    x = b.input("x", cfg.in_channels)
    return b.build([ghost_conv(b, x, cfg, "ghost")])


def standard_conv_graph(in_channels, out_channels, kernel=3, stride=1, norm=True, act="silu", bias=False):
    b = GraphBuilder()
    x = b.input("x", in_channels)
    return b.build([conv_bn_act(b, x, out_channels, kernel, stride, act=act, norm=norm, bias=bias, name="conv")])


def c3_graph(cfg):
    b = GraphBuilder()
    x = b.input("x", cfg.in_channels)
    return b.build([c3(b, x, cfg, "c3")])


def ema_graph(cfg):
    b = GraphBuilder()
    x = b.input("x", cfg.channels)
    return b.build([b.ema(x, cfg.groups, "ema")])


class GhostConv(GraphModule):
    def __init__(self, cfg):
        super().__init__(ghost_conv_graph(cfg))
        self.cfg = cfg


class C3Ghost(GraphModule):
    def __init__(self, cfg):
        super().__init__(c3_graph(cfg))
        self.cfg = cfg


def _seeded(module_cls, cfg, seed):
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return module_cls(cfg)


def ghost_conv_forward(x, cfg, seed=0):
    """Run a freshly initialised GhostConv (seeded) on ``x``."""
    if x.shape[1] != cfg.in_channels:
        raise ConfigError(f"input has {x.shape[1]} channels, config expects {cfg.in_channels}")
    return _seeded(GhostConv, cfg, seed).to(x.dtype)(x)


def c3ghost_forward(x, cfg, seed=0):
    if x.shape[1] != cfg.in_channels:
        raise ConfigError(f"input has {x.shape[1]} channels, config expects {cfg.in_channels}")
    return _seeded(C3Ghost, cfg, seed).to(x.dtype)(x)


def ema_forward(x, cfg, seed=0):
    from .layers import EMA

    if x.shape[1] != cfg.channels:
        raise ConfigError(f"input has {x.shape[1]} channels, config expects {cfg.channels}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        mod = EMA(cfg.channels, cfg.groups)
    return mod.to(x.dtype)(x)
