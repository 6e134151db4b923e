"""Backbone / attention / pruning ablation averaged over several seeds."""
import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..data.split import split_dataset
from ..data.synthetic import SyntheticSceneConfig, gen_detection_scenes
from ..detector.model import ATTENTIONS, BACKBONES, Detector, DetectorConfig, build_detector_graph
from ..errors import ConfigError
from ..nn.accounting import TensorSpec, cost_report
from ..pruner import prune
from .report import ExperimentReport
from .training import TrainConfig, evaluate_detector, finetune_detector, train_detector

log = logging.getLogger(__name__)


@dataclass
class AblationConfig:
    backbone: list = field(default_factory=lambda: ["standard", "ghost"])
    attention: list = field(default_factory=lambda: ["none", "ema"])
    prune_ratio: list = field(default_factory=lambda: [0.0, 0.4])
    prune_base: str = "ghost+ema"
    finetune_epochs: int = 5
    finetune_lr: float = 4e-3
    runs: int = 5
    seeds: list = None

    def __post_init__(self):
        for b in self.backbone:
            if b not in BACKBONES:
                raise ConfigError(f"unknown backbone {b!r}; known: {sorted(BACKBONES)}")
        for a in self.attention:
            if a not in ATTENTIONS:
                raise ConfigError(f"unknown attention {a!r}; known: {sorted(ATTENTIONS)}")
        for r in self.prune_ratio:
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"prune ratio {r} outside [0, 1)")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.seeds is not None and len(self.seeds) != self.runs:
            raise ConfigError(f"{len(self.seeds)} seeds given for {self.runs} runs")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown ablation axes/keys {sorted(unknown)}")
        return cls(**d)

    def seed_list(self, base=0):
        return list(self.seeds) if self.seeds is not None else [base + i for i in range(self.runs)]

    def variants(self):
        return [b if a == "none" else f"{b}+{a}" for b in self.backbone for a in self.attention]


def _mean_row(model, runs, cost):
    return {
        "model": model,
        "recall": float(np.mean([r["recall"] for r in runs])),
        "map50": float(np.mean([r["map50"] for r in runs])),
        "params": cost.params,
        "gflops": cost.gflops,
        "runs": runs,
    }


def run_ablation(axes=None, det_cfg=None, train_cfg=None, data_cfg=None, num_scenes=200, seed=0, splits=None):
    """Train and score every variant on one split; one row per cell, averaged over seeds.

    ``splits`` is an optional ``(train, test)`` pair of detection samples;
    without it a synthetic set of ``num_scenes`` scenes is generated and split.
    """
    axes = axes if isinstance(axes, AblationConfig) else AblationConfig.from_dict(axes or {})
    det_cfg = det_cfg or DetectorConfig()
    train_cfg = train_cfg or TrainConfig()
    data_cfg = data_cfg or SyntheticSceneConfig(canvas=det_cfg.input_size, seed=seed)
    seeds = axes.seed_list(seed)
    if splits is None:
        train, test = split_dataset(gen_detection_scenes(num_scenes, data_cfg), seed)
    else:
        train, test = splits
        num_scenes = len(train) + len(test)
    spec = TensorSpec(1, 3, det_cfg.input_size, det_cfg.input_size)

    variants = axes.variants()
    if axes.prune_ratio and axes.prune_base not in variants:
        variants.append(axes.prune_base)
    cells = {}
    trained = {}
    for v in variants:
        cfg = DetectorConfig.from_dict({**det_cfg.to_dict(), "variant": v})
        runs = []
        for s in seeds:
            log.info("ablation: %s seed %d", v, s)
            model = train_detector(train, cfg, replace(train_cfg, seed=s)).model
            m = evaluate_detector(model, test)
            runs.append({"seed": s, "recall": m.recall, "map50": m.map50})
            if v == axes.prune_base:
                trained[s] = model
        cells[v] = _mean_row(v, runs, cost_report(build_detector_graph(cfg), spec))

    for ratio in axes.prune_ratio:
        name = f"{axes.prune_base}@prune{ratio:g}"
        runs, cost = [], None
        for s in seeds:
            base = trained[s]
            g, _ = prune(base.to_graph(), ratio)
            if ratio > 0:
                g = finetune_detector(g, train, epochs=axes.finetune_epochs, lr=axes.finetune_lr,
                                      batch_size=train_cfg.batch_size, seed=s, det_cfg=base.cfg,
                                      device=train_cfg.device)
            m = evaluate_detector(Detector.from_graph(g, base.cfg), test)
            runs.append({"seed": s, "recall": m.recall, "map50": m.map50})
            cost = cost_report(g, spec)
        cells[name] = _mean_row(name, runs, cost)

    report = ExperimentReport(meta={
        "seeds": seeds, "runs": len(seeds), "num_scenes": num_scenes, "data_seed": seed,
        "axes": {"backbone": axes.backbone, "attention": axes.attention, "prune_ratio": axes.prune_ratio,
                 "prune_base": axes.prune_base},
        "detector": det_cfg.to_dict(), "train": train_cfg.to_dict(),
    })
    # merge keyed by cell name, in a fixed order
    for v in axes.variants():
        report.add_row(cells[v])
    for ratio in axes.prune_ratio:
        report.add_row(cells[f"{axes.prune_base}@prune{ratio:g}"])
    return report

