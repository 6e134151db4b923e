"""Acceptance criteria, each checked at its stated tolerance and time budget.

Every test prints one ``PASS``/``FAIL`` line, and the lines are repeated
together in the pytest terminal summary.
"""
import json
import time

import numpy as np
import pytest
import torch

from visafe.cli import main as cli_main
from visafe.data import SyntheticSceneConfig, gen_detection_scenes, gen_video_scenes, split_dataset
from visafe.detector import BoundingBox, Detections, Detector, DetectorConfig, eval_detection
from visafe.harness.training import (FullFrameTSN, TrainConfig, eval_acc, evaluate_detector, finetune_detector,
                                     train_detector, train_tsn)
from visafe.nn import (C3Config, C3Ghost, EMA, GhostConv, GhostConvConfig, GraphModule, TensorSpec, count_flops,
                       count_params)
from visafe.nn.blocks import ghost_conv_graph, standard_conv_graph
from visafe.pipeline import PipelineConfig, ViSafe
from visafe.pruner import apply_plan, channel_importance, prune
from visafe.tsn import TSNConfig, sample_segments

from .conftest import ACCEPTANCE_LINES
from .nets import toy_net, zero_out
from .oracles import brute_segments_test, fd_gradient_error, l2_norm_loop, segment_bounds

# desk-scale settings shared by criteria 8 and 9
CANVAS = 128
DET_CFG = DetectorConfig(backbone="ghost", attention="ema", input_size=CANVAS)
DET_TRAIN = TrainConfig(epochs=60, batch_size=16, lr=2e-3, seed=0)
TSN_CFG = TSNConfig(segments=3, input_size=64, feature_dim=128)
TSN_TRAIN = TrainConfig(epochs=20, batch_size=16, lr=2e-3, seed=0)
PIPE_CFG = PipelineConfig(crop_size=64)


def record(n, title, ok, detail, elapsed, budget):
    ok = ok and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail} ({elapsed:.1f}s, budget {budget}s)"
    ACCEPTANCE_LINES.append((n, line))
    print(line)
    assert ok, line


def test_01_importance_matches_oracle():
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        shape = tuple(rng.integers(1, 6, size=rng.integers(1, 4)))
        w = rng.normal(size=shape) * 10.0 ** rng.integers(-3, 3)
        worst = max(worst, abs(channel_importance(w) - l2_norm_loop(w)))
    record(1, "L2 importance vs loop oracle", worst <= 1e-6, f"max abs err {worst:.2e}",
           time.perf_counter() - t, 5)


def test_02_zeroed_channels_prune_losslessly():
    t = time.perf_counter()
    g, plan = zero_out(toy_net(seed=4), 0.4, seed=5)
    pruned = apply_plan(g, plan)
    a, b = GraphModule(g).eval(), GraphModule(pruned).eval()
    gen = torch.Generator().manual_seed(0)
    worst = 0.0
    with torch.no_grad():
        for _ in range(100):
            x = torch.randn(1, 3, 16, 16, generator=gen)
            worst = max(worst, (a(x) - b(x)).abs().max().item())
    shrunk = count_params(pruned) < count_params(g)
    record(2, "zero-channel equivalence", worst <= 1e-5 and shrunk, f"max abs diff {worst:.2e}",
           time.perf_counter() - t, 30)


def test_03_pruning_accounting():
    t = time.perf_counter()
    g = Detector.create(DET_CFG, seed=0).to_graph()
    spec = TensorSpec(1, 3, CANVAS, CANVAS)
    pg, _ = prune(g, 0.4)
    dp = 1 - count_params(pg) / count_params(g)
    df = 1 - count_flops(pg, spec) / count_flops(g, spec)
    record(3, "ratio 0.4 reductions", 0.35 <= dp <= 0.45 and 0.35 <= df <= 0.50,
           f"params -{100 * dp:.1f}%, FLOPs -{100 * df:.1f}%", time.perf_counter() - t, 10)


def test_04_ghost_efficiency():
    t = time.perf_counter()
    spec = TensorSpec(1, 64, 32, 32)
    ghost = ghost_conv_graph(GhostConvConfig(64, 64, 3))
    std = standard_conv_graph(64, 64, 3)
    rp = count_params(ghost) / count_params(std)
    rf = count_flops(ghost, spec) / count_flops(std, spec)
    record(4, "ghost/standard cost at C=64, k=3", rp < 0.6 and rf < 0.6, f"params {rp:.3f}, FLOPs {rf:.3f}",
           time.perf_counter() - t, 1)


def test_05_gradient_checks():
    t = time.perf_counter()
    torch.manual_seed(0)
    cases = {
        "GhostConv": (GhostConv(GhostConvConfig(4, 8, 3)).double(), torch.randn(2, 4, 4, 4)),
        "C3Ghost": (C3Ghost(C3Config(8, 8)).double(), torch.randn(2, 8, 4, 4)),
        "EMA": (EMA(8, 2).double(), torch.randn(2, 8, 4, 4)),
    }
    errs = {k: fd_gradient_error(m, x) for k, (m, x) in cases.items()}
    record(5, "finite-difference gradients", all(e <= 1e-3 for e in errs.values()),
           ", ".join(f"{k} {e:.1e}" for k, e in errs.items()), time.perf_counter() - t, 60)


def test_06_segment_sampler_oracle():
    t = time.perf_counter()
    bad = []
    for n in range(1, 51):
        for k in range(1, 11):
            if sample_segments(n, k, "test").to_list() != brute_segments_test(n, k):
                bad.append((n, k, "test"))
            for seed in range(3):
                idx = sample_segments(n, k, "train", seed=seed).to_list()
                for i, (lo, hi) in zip(idx, segment_bounds(n, k)):
                    if hi > lo and not lo <= i < hi:
                        bad.append((n, k, "train"))
    record(6, "segment sampler vs brute force", not bad, f"{len(bad)} mismatches over 500 (n, K) pairs",
           time.perf_counter() - t, 5)


def test_07_ap_hand_cases():
    t = time.perf_counter()
    gt = [Detections(0, [BoundingBox(0, 0, 10, 10)])]
    hit, miss = (0, 0, 10, 10), (50, 50, 60, 60)
    ap_a = eval_detection([Detections(0, [BoundingBox(*hit, 0.9), BoundingBox(*miss, 0.8)])], gt).map50
    ap_b = eval_detection([Detections(0, [BoundingBox(*miss, 0.9), BoundingBox(*hit, 0.8)])], gt).map50
    record(7, "hand-computed AP", ap_a == 1.0 and ap_b == 0.5, f"AP {ap_a} and {ap_b}", time.perf_counter() - t, 1)


@pytest.fixture(scope="module")
def toy_detector():
    """Train, evaluate, prune and fine-tune the desk detector once for criteria 8 and 9."""
    t = time.perf_counter()
    scenes = gen_detection_scenes(200, SyntheticSceneConfig(canvas=CANVAS, seed=0))
    train, test = split_dataset(scenes, seed=0)
    det = train_detector(train, DET_CFG, DET_TRAIN).model
    base = evaluate_detector(det, test)
    pg, _ = prune(det.to_graph(), 0.4)
    pg = finetune_detector(pg, train, epochs=5, lr=4e-3, det_cfg=DET_CFG)
    pruned = Detector.from_graph(pg, DET_CFG)
    after = evaluate_detector(pruned, test)
    return {"base": base, "pruned": after, "detector": pruned, "seconds": time.perf_counter() - t}


@pytest.mark.slow
def test_08_toy_detector(toy_detector):
    base, after = toy_detector["base"].map50, toy_detector["pruned"].map50
    ok = base >= 0.80 and abs(after - base) <= 0.05
    record(8, "toy detector mAP@0.5", ok, f"unpruned {base:.3f}, pruned+fine-tuned {after:.3f}",
           toy_detector["seconds"], 600)


@pytest.mark.slow
def test_09_pipeline_beats_full_frame(toy_detector):
    t = time.perf_counter()
    clips = gen_video_scenes(200, SyntheticSceneConfig(canvas=CANVAS, seed=1))
    train, test = split_dataset(clips, seed=0)
    assert sum(c.label for c in clips) == 100
    det = toy_detector["detector"]
    roi = train_tsn(train, TSN_CFG, TSN_TRAIN, detector=det, pipe_cfg=PIPE_CFG).model
    acc = eval_acc(ViSafe(det, roi, PIPE_CFG), test)
    full = train_tsn(train, TSN_CFG, TSN_TRAIN, full_frame=True).model
    acc_full = eval_acc(FullFrameTSN(full), test)
    elapsed = time.perf_counter() - t
    record(9, "pipeline ACC vs full-frame TSN", acc >= 0.90 and acc > acc_full,
           f"pipeline {acc:.3f}, full-frame {acc_full:.3f}; detector stage {toy_detector['seconds']:.0f}s extra",
           elapsed, 900)


ABLATE_CFG = {
    "data": {"canvas": 64, "num_scenes": 40, "actor_height": [14, 22]},
    "detector": {"input_size": 64, "train": {"epochs": 2, "batch_size": 8}},
    "pruning": {"finetune_epochs": 1,
                "ablation": {"backbone": ["standard", "ghost"], "attention": ["none", "ema"],
                             "prune_ratio": [0.0, 0.4], "prune_base": "ghost+ema"}},
}


@pytest.mark.slow
def test_10_ablate_is_byte_identical(tmp_path):
    t = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(ABLATE_CFG))
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert cli_main(["--seed", "0", "--config", str(cfg), "--out", str(out), "ablate", "--seeds", "0", "1"]) == 0
        outs.append((out / "ablation.json").read_bytes())
    rows = json.loads(outs[0])["rows"]
    record(10, "ablate determinism", outs[0] == outs[1] and len(rows) == 6,
           f"{len(outs[0])} bytes, {len(rows)} rows, identical={outs[0] == outs[1]}", time.perf_counter() - t, 1200)
