"""Command-line entry point: ``visafe <command> [options]``."""
import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .errors import ConfigError, VisafeError

log = logging.getLogger("visafe")

SECTIONS = ("data", "detector", "tsn", "pruning", "pipeline")
DESK_DEFAULTS = {
    "data": {"canvas": 128, "num_scenes": 200, "num_clips": 200, "frames": 16},
    "detector": {"variant": "ghost+ema", "input_size": 128,
                 "train": {"epochs": 60, "batch_size": 16, "lr": 0.002}},
    "tsn": {"segments": 3, "input_size": 64, "feature_dim": 128,
            "train": {"epochs": 20, "batch_size": 16, "lr": 0.002}},
    "pruning": {"ratio": 0.4, "finetune_epochs": 5, "finetune_lr": 0.004},
    "pipeline": {"crop_size": 64},
}


def cache_dir():
    return os.environ.get("VISAFE_CACHE") or os.path.join(os.path.expanduser("~"), ".cache", "visafe")


def load_config(path=None):
    """Desk-scale defaults overlaid with the sections of a JSON config file."""
    cfg = {k: json.loads(json.dumps(v)) for k, v in DESK_DEFAULTS.items()}
    if path:
        with open(path) as fh:
            user = json.load(fh)
        unknown = set(user) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}; expected {list(SECTIONS)}")
        for sec, vals in user.items():
            if "train" in vals and "train" in cfg[sec]:
                vals = {**vals, "train": {**cfg[sec]["train"], **vals["train"]}}
            cfg[sec].update(vals)
    return cfg


def _split_train(section):
    section = dict(section)
    return section, section.pop("train", {})


def detector_config(cfg):
    from .detector.model import DetectorConfig
    from .harness.training import TrainConfig

    d, t = _split_train(cfg["detector"])
    return DetectorConfig.from_dict(d), TrainConfig.from_dict({**t, "device": cfg.get("device", "cpu")})


def tsn_config(cfg):
    from .harness.training import TrainConfig
    from .tsn import TSNConfig

    d, t = _split_train(cfg["tsn"])
    return TSNConfig.from_dict(d), TrainConfig.from_dict({**t, "device": cfg.get("device", "cpu")})


def pipeline_config(cfg):
    from .pipeline import PipelineConfig

    return PipelineConfig.from_dict(cfg["pipeline"])


def scene_config(cfg, seed):
    from .data.synthetic import SyntheticSceneConfig

    keys = {"canvas", "actor_count", "noise", "frames", "clutter", "decoys", "segments"}
    d = {k: v for k, v in cfg["data"].items() if k in keys}
    if "actor_height" in cfg["data"]:
        d["actor_height"] = tuple(cfg["data"]["actor_height"])
    return SyntheticSceneConfig(seed=cfg["data"].get("seed", seed), **d)


def _out(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)


def _manifest(root, kind, seed):
    from .data.split import DatasetManifest, make_manifest

    path = os.path.join(root, "split.json")
    if os.path.exists(path):
        return DatasetManifest.load(path)
    m = make_manifest(root, kind, seed)
    m.save(path)
    return m


def _detection_split(root, seed, split):
    from .data.io import load_detection_item
    from .data.split import resolve

    return [load_detection_item(i) for i in resolve(_manifest(root, "detection", seed), split)]


def _video_split(root, seed, split):
    from .data.io import load_video_item
    from .data.split import resolve

    return [load_video_item(i) for i in resolve(_manifest(root, "video", seed), split)]


def _data_root(args, kind):
    return args.data or os.path.join(cache_dir(), kind)


# -- commands ---------------------------------------------------------------

def cmd_gen_data(args, cfg):
    from .data.io import write_detection_set, write_video_set
    from .data.synthetic import gen_detection_scenes, gen_video_scenes

    out = args.out or cache_dir()
    scfg = scene_config(cfg, args.seed)
    if args.kind in ("detection", "both"):
        n = args.n if args.n is not None else cfg["data"]["num_scenes"]
        write_detection_set(os.path.join(out, "detection"), gen_detection_scenes(n, scfg))
        log.info("wrote %d detection scenes to %s", n, os.path.join(out, "detection"))
    if args.kind in ("video", "both"):
        n = args.n if args.n is not None else cfg["data"]["num_clips"]
        write_video_set(os.path.join(out, "video"), gen_video_scenes(n, scfg))
        log.info("wrote %d clips to %s", n, os.path.join(out, "video"))


def cmd_split(args, cfg):
    from .data.split import make_manifest

    root = _data_root(args, args.kind)
    m = make_manifest(root, args.kind, args.seed)
    path = os.path.join(args.out or root, "split.json")
    m.save(path)
    print(f"{len(m.train)} train / {len(m.test)} test -> {path}")


def cmd_train_detector(args, cfg):
    from .harness.training import evaluate_detector, train_detector
    from .nn.graph import save_checkpoint

    det_cfg, tcfg = detector_config(cfg)
    tcfg = replace(tcfg, seed=args.seed, **({"epochs": args.epochs} if args.epochs is not None else {}))
    root = _data_root(args, "detection")
    train, test = _detection_split(root, args.seed, "train"), _detection_split(root, args.seed, "test")
    result = train_detector(train, det_cfg, tcfg)
    out = _out(args, "runs")
    save_checkpoint(os.path.join(out, "detector"), result.model.to_graph())
    metrics = evaluate_detector(result.model, test)
    _write_json(os.path.join(out, "detector_train.json"),
                {"losses": result.losses, "stopped_early": result.stopped_early, "test": metrics.to_dict()})
    print(f"recall {metrics.recall:.3f}  mAP50 {metrics.map50:.3f}")


def _load_detector(path):
    from .detector.model import Detector
    from .nn.graph import load_checkpoint

    graph, _ = load_checkpoint(path)
    return Detector.from_graph(graph)


def cmd_train_tsn(args, cfg):
    from .harness.training import FullFrameTSN, eval_acc, train_tsn
    from .pipeline import ViSafe

    tsn_cfg, tcfg = tsn_config(cfg)
    tcfg = replace(tcfg, seed=args.seed, **({"epochs": args.epochs} if args.epochs is not None else {}))
    pcfg = replace(pipeline_config(cfg), crop_size=tsn_cfg.input_size)
    root = _data_root(args, "video")
    train, test = _video_split(root, args.seed, "train"), _video_split(root, args.seed, "test")
    detector = None
    if not args.full_frame:
        if not args.detector:
            raise ConfigError("train-tsn needs --detector unless --full-frame is given")
        detector = _load_detector(args.detector)
    result = train_tsn(train, tsn_cfg, tcfg, detector=detector, pipe_cfg=pcfg, full_frame=args.full_frame)
    out = _out(args, "runs")
    result.model.save(os.path.join(out, "tsn"))
    model = FullFrameTSN(result.model) if args.full_frame else ViSafe(detector, result.model, pcfg)
    acc = eval_acc(model, test, args.seed)
    _write_json(os.path.join(out, "tsn_train.json"),
                {"losses": result.losses, "stopped_early": result.stopped_early, "test_acc": acc,
                 "full_frame": args.full_frame})
    print(f"ACC {acc:.3f}")


def cmd_prune(args, cfg):
    from .detector.model import DetectorConfig
    from .nn.accounting import TensorSpec, cost_report
    from .nn.graph import load_checkpoint, save_checkpoint, save_graph_json
    from .pruner import prune

    graph, _ = load_checkpoint(args.graph)
    ratio = args.ratio if args.ratio is not None else cfg["pruning"]["ratio"]
    pruned, plan = prune(graph, ratio)
    if args.finetune_data:
        from .harness.training import finetune_detector

        epochs = args.epochs if args.epochs is not None else cfg["pruning"]["finetune_epochs"]
        if ratio > 0 and epochs > 0:
            data = _detection_split(args.finetune_data, args.seed, "train")
            pruned = finetune_detector(pruned, data, epochs=epochs, lr=cfg["pruning"]["finetune_lr"], seed=args.seed,
                                       device=args.device)
    out = args.out or "pruned.json"
    if out.endswith(".json"):
        save_graph_json(out, pruned)
    else:
        save_checkpoint(out, pruned)
    size = DetectorConfig.from_dict(graph.meta["detector"]).input_size if "detector" in graph.meta else 256
    spec = TensorSpec(1, 3, size, size)
    before, after = cost_report(graph, spec), cost_report(pruned, spec)
    report = {"ratio": ratio, "input_size": size, "before": before.to_dict(), "after": after.to_dict(),
              "params_reduction": 1 - after.params / before.params,
              "flops_reduction": 1 - after.flops / before.flops, "plan": plan.to_dict()}
    if args.report:
        _write_json(args.report, report)
    print(f"params {before.params} -> {after.params} (-{100 * report['params_reduction']:.1f}%)  "
          f"GFLOPs {before.gflops:.4f} -> {after.gflops:.4f} (-{100 * report['flops_reduction']:.1f}%)")


def cmd_ablate(args, cfg):
    from .harness.ablation import AblationConfig, run_ablation

    det_cfg, tcfg = detector_config(cfg)
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    pr = cfg["pruning"]
    axes = dict(pr.get("ablation", {}))
    axes.setdefault("finetune_epochs", pr["finetune_epochs"])
    axes.setdefault("finetune_lr", pr["finetune_lr"])
    if args.runs is not None:
        axes["runs"] = args.runs
    if args.seeds:
        axes["seeds"] = args.seeds
        axes["runs"] = len(args.seeds)
    for axis in ("backbone", "attention"):
        if getattr(args, axis):
            axes[axis] = getattr(args, axis)
    if args.prune_ratio is not None:
        axes["prune_ratio"] = args.prune_ratio
    splits = None
    if args.data:
        splits = (_detection_split(args.data, args.seed, "train"), _detection_split(args.data, args.seed, "test"))
    report = run_ablation(AblationConfig.from_dict(axes), det_cfg, tcfg,
                          replace(scene_config(cfg, args.seed), canvas=cfg["data"].get("canvas", det_cfg.input_size)),
                          num_scenes=cfg["data"]["num_scenes"], seed=args.seed, splits=splits)
    out = _out(args, "runs")
    report.save(os.path.join(out, "ablation"))
    print(report.to_text(), end="")


def cmd_pipeline(args, cfg):
    from .data.io import read_clip
    from .pipeline import run_pipeline
    from .tsn import TSNModel

    detector = _load_detector(args.detector)
    tsn = TSNModel.load(args.tsn)
    pcfg = pipeline_config(cfg)
    if args.detect_all_frames:
        pcfg = replace(pcfg, detect_all_frames=True)
    verdict = run_pipeline(read_clip(args.clip), detector, tsn, pcfg, seed=args.seed)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(verdict.to_json() + "\n")
    print(f"{verdict.label} (p={verdict.probability:.4f})")


def cmd_eval(args, cfg):
    from .harness.report import ExperimentReport

    out = _out(args, "runs")
    report = ExperimentReport(meta={"seed": args.seed, "kind": args.kind})
    if args.kind == "detection":
        from .harness.training import evaluate_detector
        from .nn.accounting import TensorSpec, cost_report

        det = _load_detector(args.detector)
        m = evaluate_detector(det, _detection_split(_data_root(args, "detection"), args.seed, "test"))
        g = det.to_graph()
        c = cost_report(g, TensorSpec(1, 3, det.cfg.input_size, det.cfg.input_size))
        report.add_row({"model": det.cfg.variant, "recall": m.recall, "map50": m.map50, "params": c.params,
                        "gflops": c.gflops})
    else:
        from .harness.training import FullFrameTSN, eval_acc
        from .pipeline import ViSafe
        from .tsn import TSNModel

        test = _video_split(_data_root(args, "video"), args.seed, "test")
        tsn = TSNModel.load(args.tsn)
        if args.full_frame:
            model, name = FullFrameTSN(tsn), "TSN (full frame)"
        else:
            pcfg = replace(pipeline_config(cfg), crop_size=tsn.cfg.input_size)
            model, name = ViSafe(_load_detector(args.detector), tsn, pcfg), "roi-pipeline"
        report.add_row({"model": name, "acc": eval_acc(model, test, args.seed)})
    report.save(os.path.join(out, f"eval_{args.kind}"))
    print(report.to_text(), end="")


# -- parser -----------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="visafe", description="Person detection + temporal violence recognition.")
    ap.add_argument("--seed", type=int, default=0, help="seed for splits, initialisation and sampling")
    ap.add_argument("--config", help="JSON config with sections " + ", ".join(SECTIONS))
    ap.add_argument("--out", help="output directory (file for prune/pipeline)")
    ap.add_argument("--device", default="cpu", help="torch device for training, e.g. cuda")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    keep = argparse.SUPPRESS   # subcommand --out must not clobber a global --out

    p = sub.add_parser("gen-data", help="render synthetic detection scenes and/or clips")
    p.add_argument("--kind", choices=("detection", "video", "both"), default="both")
    p.add_argument("--n", type=int, help="number of samples (default from config)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("split", help="write an 8:2 split.json for a dataset directory")
    p.add_argument("--data", help="dataset root (default $VISAFE_CACHE/<kind>)")
    p.add_argument("--kind", choices=("detection", "video"), default="detection")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-detector", help="train the person detector")
    p.add_argument("--data", help="YOLO-format dataset root")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("train-tsn", help="train the temporal classifier on detector crops")
    p.add_argument("--data", help="class-folder video root")
    p.add_argument("--detector", help="detector checkpoint")
    p.add_argument("--full-frame", action="store_true", help="train on whole frames instead of crops")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_tsn)

    p = sub.add_parser("prune", help="L2 channel pruning with cost report")
    p.add_argument("--graph", required=True, help="graph json or checkpoint directory")
    p.add_argument("--ratio", type=float)
    p.add_argument("--out", default=keep, help="pruned graph (.json) or checkpoint directory")
    p.add_argument("--report", help="cost report json")
    p.add_argument("--finetune-data", help="fine-tune on the train split of this detection set")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("ablate", help="backbone / attention / pruning ablation")
    p.add_argument("--data", help="detection set (default: synthetic scenes from the config)")
    p.add_argument("--runs", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--backbone", nargs="+")
    p.add_argument("--attention", nargs="+")
    p.add_argument("--prune-ratio", type=float, nargs="+")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("pipeline", help="classify one clip")
    p.add_argument("--clip", required=True, help="frame folder or video file")
    p.add_argument("--detector", required=True)
    p.add_argument("--tsn", required=True)
    p.add_argument("--out", default=keep, help="verdict json")
    p.add_argument("--detect-all-frames", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="score a detector (recall/mAP) or the pipeline (ACC)")
    p.add_argument("--kind", choices=("detection", "video"), default="video")
    p.add_argument("--data")
    p.add_argument("--detector")
    p.add_argument("--tsn")
    p.add_argument("--full-frame", action="store_true")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        cfg["device"] = args.device
        args.func(args, cfg)
    except (VisafeError, FileNotFoundError) as e:
        print(f"visafe: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
