from .accounting import CostReport, TensorSpec, count_flops, count_params, cost_report, infer_shapes, layer_costs
from .blocks import (C3Config, C3Ghost, EMAConfig, GhostConv, GhostConvConfig, GraphBuilder, c3, c3ghost_forward,
                     conv_bn_act, ema_forward, ghost_conv, ghost_conv_forward)
from .graph import GraphModule, Layer, ModelGraph, initialise, load_checkpoint, save_checkpoint
from .layers import EMA
