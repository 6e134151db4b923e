"""Recall and all-point-interpolated AP at a fixed IoU threshold."""
from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass(frozen=True)
class DetectionMetrics:
    recall: float
    map50: float
    num_gt: int
    num_pred: int
    zero_gt: bool = False

    def to_dict(self):
        return {"recall": self.recall, "map50": self.map50, "num_gt": self.num_gt, "num_pred": self.num_pred,
                "zero_gt": self.zero_gt}


def average_precision(recall, precision):
    """Area under the monotone precision envelope (all-point interpolation)."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def _by_frame(dets):
    out = {}
    for d in dets:
        out.setdefault(d.t, []).extend(d.boxes)
    return out


def eval_detection(preds, gts, iou_thr=0.5):
    """Single-class recall and AP@``iou_thr``.

    Predictions are matched one-to-one per frame in descending score order.
    Ranking across frames breaks score ties by frame index and coordinates,
    so the result does not depend on the order of the input lists.
    With no ground truth at all, recall is reported as 1.0 with ``zero_gt``
    set, and AP is 1.0 only if there are also no predictions.
    """
    pf, gf = _by_frame(preds), _by_frame(gts)
    num_gt = sum(len(v) for v in gf.values())
    rows = []  # (-score, t, x1, y1, x2, y2, tp)
    for t, boxes in pf.items():
        boxes = sorted(boxes, key=lambda b: (-b.score, b.x1, b.y1, b.x2, b.y2))
        gt = np.array([g.xyxy() for g in gf.get(t, [])]).reshape(-1, 4)
        tp = kernels.match_greedy(np.array([b.xyxy() for b in boxes]).reshape(-1, 4), gt, iou_thr)
        rows.extend((-b.score, t, b.x1, b.y1, b.x2, b.y2, bool(f)) for b, f in zip(boxes, tp))
    num_pred = len(rows)
    if num_gt == 0:
        return DetectionMetrics(1.0, 1.0 if num_pred == 0 else 0.0, 0, num_pred, zero_gt=True)
    if num_pred == 0:
        return DetectionMetrics(0.0, 0.0, num_gt, 0)
    rows.sort(key=lambda r: r[:6])
    tp = np.array([r[6] for r in rows], dtype=np.float64)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    rec = ctp / num_gt
    prec = ctp / (ctp + cfp)
    return DetectionMetrics(float(ctp[-1] / num_gt), average_precision(rec, prec), num_gt, num_pred)
