"""Pure-Python/numpy box kernels. Same contract as the compiled ``_boxops`` module."""
import numpy as np


def iou_matrix(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ix1 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix2 - ix1, 0, None) * np.clip(iy2 - iy1, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def nms(boxes, scores, iou_thr):
    """Greedy NMS. Returns kept indices ordered by descending score (ties: lower index first)."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        rest = order[pos + 1:]
        rest = rest[~suppressed[rest]]
        if len(rest):
            ious = iou_matrix(boxes[i:i + 1], boxes[rest])[0]
            suppressed[rest[ious > iou_thr]] = True
    return np.asarray(keep, dtype=np.int64)


def match_greedy(pred_boxes, gt_boxes, iou_thr):
    """Match predictions (already in descending-score order) one-to-one against ground truth.

    Each prediction takes the unmatched ground-truth box with the highest IoU,
    provided that IoU is at least ``iou_thr``. Returns a boolean TP flag per prediction.
    """
    ious = iou_matrix(pred_boxes, gt_boxes)
    tp = np.zeros(ious.shape[0], dtype=bool)
    taken = np.zeros(ious.shape[1], dtype=bool)
    for i in range(ious.shape[0]):
        best, best_j = -1.0, -1
        for j in range(ious.shape[1]):
            if not taken[j] and ious[i, j] >= iou_thr and ious[i, j] > best:
                best, best_j = ious[i, j], j
        if best_j >= 0:
            taken[best_j] = True
            tp[i] = True
    return tp
