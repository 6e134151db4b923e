import pytest
import torch
from hypothesis import given, settings, strategies as st

from visafe.errors import ConfigError
from visafe.nn import (C3Config, C3Ghost, EMA, EMAConfig, GhostConv, GhostConvConfig, GraphModule, c3ghost_forward,
                       count_params, ema_forward, ghost_conv_forward)
from visafe.nn.blocks import c3_graph, ghost_conv_graph, standard_conv_graph

from .oracles import fd_gradient_error


def test_ghost_conv_shape():
    out = ghost_conv_forward(torch.randn(1, 16, 32, 32), GhostConvConfig(16, 32, 3))
    assert out.shape == (1, 32, 32, 32)


def test_ghost_conv_zero_input_zero_output():
    m = GhostConv(GhostConvConfig(16, 32, 3))
    m.eval()
    assert torch.count_nonzero(m(torch.zeros(2, 16, 8, 8))) == 0


def test_ghost_conv_channel_mismatch():
    with pytest.raises(ConfigError):
        ghost_conv_forward(torch.randn(1, 8, 16, 16), GhostConvConfig(16, 32, 3))
    with pytest.raises(ConfigError):
        GhostConv(GhostConvConfig(16, 32))(torch.randn(1, 8, 16, 16))


@pytest.mark.parametrize("kwargs", [dict(out_channels=33), dict(kernel=2), dict(cheap_kernel=4), dict(stride=0)])
def test_ghost_config_invariants(kwargs):
    base = dict(in_channels=16, out_channels=32)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        GhostConvConfig(**base)


def test_ghost_param_count_matches_enumeration():
    cfg = GhostConvConfig(16, 32, 3, cheap_kernel=5, norm=False)
    g = ghost_conv_graph(cfg)
    enumerated = sum(p.numel() for p in GraphModule(g).parameters())
    assert count_params(g) == enumerated == 16 * 16 * 9 + 16 * 25 == 2704
    std = standard_conv_graph(16, 32, 3, norm=False)
    assert count_params(std) == 4608
    assert count_params(g) / count_params(std) == pytest.approx(0.587, abs=1e-3)


def test_c3ghost_shape_and_identity_residual():
    cfg = C3Config(32, 32)
    x = torch.randn(1, 32, 16, 16)
    m = C3Ghost(cfg)
    assert m(x).shape == (1, 32, 16, 16)
    with torch.no_grad():
        for p in m.parameters():
            p.zero_()
    m.eval()
    assert torch.equal(m(x), x)


def test_c3ghost_functional_form():
    assert c3ghost_forward(torch.randn(2, 32, 8, 8), C3Config(32, 64)).shape == (2, 64, 8, 8)


def test_c3ghost_cheaper_than_c3():
    for c in (32, 64, 128):
        assert count_params(c3_graph(C3Config(c, c))) < count_params(c3_graph(C3Config(c, c, ghost=False)))


def test_ema_shape():
    assert ema_forward(torch.randn(2, 64, 16, 16), EMAConfig(64, 8)).shape == (2, 64, 16, 16)


def test_ema_uniform_input_gives_uniform_output():
    torch.manual_seed(1)
    x = torch.randn(2, 16, 1, 1).expand(2, 16, 8, 8).contiguous()
    m = EMA(16, 4)
    with torch.no_grad():
        for p in m.parameters():
            p.normal_()
    y = m(x)
    assert torch.allclose(y, y[..., :1, :1].expand_as(y), atol=1e-6)


def test_ema_group_count_matters():
    x = torch.randn(2, 16, 8, 8)
    a = ema_forward(x, EMAConfig(16, 1))
    b = ema_forward(x, EMAConfig(16, 16))
    assert torch.isfinite(a).all() and torch.isfinite(b).all()
    assert not torch.allclose(a, b)


def test_ema_bad_groups():
    with pytest.raises(ConfigError):
        EMAConfig(64, 6)
    with pytest.raises(ConfigError):
        EMA(64, 6)


@settings(max_examples=25, deadline=None)
@given(cin=st.integers(1, 12), half=st.integers(1, 8), k=st.sampled_from([1, 3, 5]), s=st.integers(1, 3),
       hw=st.integers(4, 17))
def test_ghost_shape_contract(cin, half, k, s, hw):
    cfg = GhostConvConfig(cin, 2 * half, k, s)
    out = GhostConv(cfg)(torch.randn(2, cin, hw, hw))
    expect = (hw + 2 * (k // 2) - k) // s + 1
    assert out.shape == (2, 2 * half, expect, expect)


@settings(max_examples=15, deadline=None)
@given(cin=st.sampled_from([8, 16, 24]), cout=st.sampled_from([8, 16, 32]), depth=st.integers(1, 2),
       hw=st.integers(3, 10))
def test_c3_shape_contract(cin, cout, depth, hw):
    for ghost in (True, False):
        out = GraphModule(c3_graph(C3Config(cin, cout, depth, ghost=ghost)))(torch.randn(2, cin, hw, hw))
        assert out.shape == (2, cout, hw, hw)


def test_gradients_match_finite_differences():
    torch.manual_seed(0)
    x = torch.randn(2, 4, 4, 4)
    blocks = [GhostConv(GhostConvConfig(4, 8, 3)).double(), C3Ghost(C3Config(8, 8)).double(), EMA(8, 2).double()]
    assert fd_gradient_error(blocks[0], x) <= 1e-3
    assert fd_gradient_error(blocks[1], torch.randn(2, 8, 4, 4)) <= 1e-3
    assert fd_gradient_error(blocks[2], torch.randn(2, 8, 4, 4)) <= 1e-3
