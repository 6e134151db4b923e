import json
import os

import pytest

from visafe.cli import build_parser, load_config, main
from visafe.errors import ConfigError

TINY = {
    "data": {"canvas": 64, "num_scenes": 10, "num_clips": 10, "frames": 6, "actor_height": [14, 20]},
    "detector": {"variant": "ghost+ema", "input_size": 64, "width": 0.5, "train": {"epochs": 1, "batch_size": 4}},
    "tsn": {"input_size": 32, "feature_dim": 16, "width": 0.5, "train": {"epochs": 1, "batch_size": 4}},
    "pruning": {"ratio": 0.4, "finetune_epochs": 1,
                "ablation": {"backbone": ["ghost"], "attention": ["none", "ema"], "prune_ratio": [0.0, 0.4],
                             "runs": 1}},
    "pipeline": {"crop_size": 32},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    return root, str(cfg)


def test_parser_has_all_commands():
    ap = build_parser()
    for cmd in ("gen-data", "split", "train-detector", "train-tsn", "prune", "ablate", "pipeline", "eval"):
        ns = ap.parse_args(["--seed", "3", cmd] + (["--graph", "g"] if cmd == "prune" else []) +
                           (["--clip", "c", "--detector", "d", "--tsn", "t"] if cmd == "pipeline" else []))
        assert ns.command == cmd and ns.seed == 3


def test_global_out_survives_subcommand():
    ns = build_parser().parse_args(["--out", "dir", "pipeline", "--clip", "c", "--detector", "d", "--tsn", "t"])
    assert ns.out == "dir"


def test_config_sections(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"detector": {"train": {"epochs": 2}}}))
    cfg = load_config(str(p))
    assert cfg["detector"]["train"]["epochs"] == 2 and cfg["detector"]["train"]["lr"] == 0.002
    p.write_text(json.dumps({"model": {}}))
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_end_to_end_commands(workspace, monkeypatch, capsys):
    root, cfg = workspace
    monkeypatch.setenv("VISAFE_CACHE", str(root / "cache"))
    run = lambda *a: main(["--config", cfg, *a])
    assert run("gen-data") == 0
    assert os.path.isdir(root / "cache" / "detection" / "images")
    assert run("split", "--kind", "detection") == 0
    assert "8 train / 2 test" in capsys.readouterr().out
    out = str(root / "runs")
    assert run("--out", out, "train-detector") == 0
    det = os.path.join(out, "detector")
    assert os.path.exists(os.path.join(det, "graph.json"))
    assert run("prune", "--graph", det, "--out", str(root / "pruned.json"), "--report", str(root / "cost.json")) == 0
    cost = json.loads((root / "cost.json").read_text())
    assert cost["after"]["params"] < cost["before"]["params"]
    assert (root / "pruned.npz").exists()
    assert run("--out", out, "train-tsn", "--detector", det) == 0
    clip = sorted((root / "cache" / "video" / "violent").iterdir())[0]
    verdict = root / "verdict.json"
    assert run("pipeline", "--clip", str(clip), "--detector", det, "--tsn", os.path.join(out, "tsn"),
               "--out", str(verdict)) == 0
    v = json.loads(verdict.read_text())
    assert set(v) == {"probability", "label", "frames"} and len(v["frames"]) == 3
    assert run("--out", out, "eval", "--kind", "video", "--detector", det, "--tsn", os.path.join(out, "tsn")) == 0
    assert "roi-pipeline" in capsys.readouterr().out
    assert run("--out", out, "eval", "--kind", "detection", "--detector", det) == 0
    assert run("--out", out, "ablate") == 0
    rep = json.loads(open(os.path.join(out, "ablation.json")).read())
    assert [r["model"] for r in rep["rows"]] == ["ghost", "ghost+ema", "ghost+ema@prune0", "ghost+ema@prune0.4"]


def test_errors_exit_nonzero(workspace, capsys):
    _, cfg = workspace
    assert main(["--config", cfg, "prune", "--graph", "/nonexistent"]) == 2
    assert "error" in capsys.readouterr().err
