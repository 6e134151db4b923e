"""Torch modules backing each primitive layer type of a :class:`ModelGraph`."""
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, GraphError

ACTIVATIONS = ("silu", "relu", "sigmoid", "identity")


class EMA(nn.Module):
    """Efficient multi-scale attention over channel groups.

    Each group of ``channels // groups`` channels is pooled along the height
    and width axes, the two descriptors are mixed by a shared 1x1 conv and
    turned into sigmoid gates. A parallel 3x3 branch sees the raw group. The
    two branches attend to each other through softmax-pooled channel
    descriptors, and the summed maps become a final sigmoid gate on the
    group input.

    The 3x3 branch uses replicate padding so a spatially constant input
    stays spatially constant.
    """

    def __init__(self, channels, groups=8):
        super().__init__()
        if groups < 1 or channels % groups:
            raise ConfigError(f"groups={groups} must divide channels={channels}")
        self.channels = channels
        self.groups = groups
        cg = channels // groups
        self.conv1x1 = nn.Conv2d(cg, cg, 1)
        self.conv3x3 = nn.Conv2d(cg, cg, 3, padding=1, padding_mode="replicate")
        self.gn = nn.GroupNorm(cg, cg)

    def forward(self, x):
        b, c, h, w = x.shape
        if c != self.channels:
            raise ConfigError(f"EMA expects {self.channels} channels, got {c}")
        g = self.groups
        gx = x.reshape(b * g, c // g, h, w)
        x_h = gx.mean(dim=3, keepdim=True)                  # (bg, cg, h, 1)
        x_w = gx.mean(dim=2, keepdim=True).permute(0, 1, 3, 2)  # (bg, cg, w, 1)
        hw = self.conv1x1(torch.cat([x_h, x_w], dim=2))
        x_h, x_w = torch.split(hw, [h, w], dim=2)
        x1 = self.gn(gx * x_h.sigmoid() * x_w.permute(0, 1, 3, 2).sigmoid())
        x2 = self.conv3x3(gx)
        a1 = F.softmax(x1.mean(dim=(2, 3)), dim=-1).unsqueeze(1)  # (bg, 1, cg)
        a2 = F.softmax(x2.mean(dim=(2, 3)), dim=-1).unsqueeze(1)
        y = a1 @ x2.reshape(b * g, c // g, h * w) + a2 @ x1.reshape(b * g, c // g, h * w)
        weights = y.reshape(b * g, 1, h, w).sigmoid()
        return (gx * weights).reshape(b, c, h, w)


class Activation(nn.Module):
    def __init__(self, fn):
        super().__init__()
        if fn not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x):
        if self.fn == "silu":
            return F.silu(x)
        if self.fn == "relu":
            return F.relu(x)
        if self.fn == "sigmoid":
            return torch.sigmoid(x)
        return x


class Add(nn.Module):
    def forward(self, *xs):
        out = xs[0]
        for x in xs[1:]:
            out = out + x
        return out


class Concat(nn.Module):
    def forward(self, *xs):
        return torch.cat(xs, dim=1)


class Upsample(nn.Module):
    def __init__(self, scale=2):
        super().__init__()
        self.scale = scale

    def forward(self, x):
        return F.interpolate(x, scale_factor=self.scale, mode="nearest")


class GlobalAvgPool(nn.Module):
    def forward(self, x):
        return x.mean(dim=(2, 3))


def make_module(layer):
    """Instantiate the torch module for one layer record."""
    cfg = layer.config
    t = layer.type
    if t == "conv":
        k = cfg["kernel"]
        if k % 2 == 0:
            raise ConfigError(f"{layer.name}: kernel must be odd, got {k}")
        return nn.Conv2d(
            cfg["in_channels"], cfg["out_channels"], k, stride=cfg.get("stride", 1),
            padding=k // 2, groups=cfg.get("groups", 1), bias=cfg.get("bias", False),
            padding_mode=cfg.get("padding_mode", "zeros"),
        )
    if t == "bn":
        return nn.BatchNorm2d(cfg["channels"], eps=cfg.get("eps", 1e-3), momentum=cfg.get("momentum", 0.03))
    if t == "act":
        return Activation(cfg["fn"])
    if t == "add":
        return Add()
    if t == "concat":
        return Concat()
    if t == "upsample":
        return Upsample(cfg.get("scale", 2))
    if t == "ema":
        return EMA(cfg["channels"], cfg["groups"])
    if t == "gap":
        return GlobalAvgPool()
    if t == "linear":
        return nn.Linear(cfg["in_features"], cfg["out_features"], bias=cfg.get("bias", True))
    raise GraphError(f"{layer.name}: unknown layer type {t!r}")
