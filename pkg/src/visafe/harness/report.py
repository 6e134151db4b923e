"""Experiment reports: JSON for tools, aligned text for reading."""
import json
from dataclasses import dataclass, field

from ..errors import InputError

DETECTION_COLUMNS = ("recall", "map50", "params", "gflops")


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)    # dicts with "model" plus metric keys and "runs"
    meta: dict = field(default_factory=dict)

    def add_row(self, row):
        for key in ("recall", "map50", "acc"):
            if key in row and not 0.0 <= row[key] <= 1.0:
                raise InputError(f"{row['model']}: {key}={row[key]} outside [0, 1]")
        self.rows.append(row)

    def row(self, model):
        for r in self.rows:
            if r["model"] == model:
                return r
        raise KeyError(model)

    def to_dict(self):
        return {"meta": self.meta, "rows": self.rows}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["rows"]), dict(d.get("meta", {})))

    def to_text(self):
        det = [r for r in self.rows if "map50" in r]
        acc = [r for r in self.rows if "acc" in r]
        width = max([len(r["model"]) for r in self.rows] + [5]) + 2
        lines = []
        if det:
            lines.append(f"{'Model':<{width}}{'Recall':>8}{'mAP50':>8}{'Params(M)':>11}{'GFLOPs':>9}")
            for r in det:
                lines.append(f"{r['model']:<{width}}{r['recall']:>8.3f}{r['map50']:>8.3f}"
                             f"{r['params'] / 1e6:>11.4f}{r['gflops']:>9.4f}")
        if acc:
            if lines:
                lines.append("")
            lines.append(f"{'Model':<{width}}{'ACC':>8}")
            lines.extend(f"{r['model']:<{width}}{r['acc']:>8.3f}" for r in acc)
        return "\n".join(lines) + "\n"

    def save(self, stem):
        """Write ``<stem>.json`` and ``<stem>.txt``."""
        with open(f"{stem}.json", "w") as fh:
            fh.write(self.to_json())
        with open(f"{stem}.txt", "w") as fh:
            fh.write(self.to_text())
