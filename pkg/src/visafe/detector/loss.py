"""Training targets and loss for the anchor-free head."""
import torch
import torch.nn.functional as F

from .model import STRIDE, decode, grid_centers

CENTER_RADIUS = 1.5  # in strides


def assign_targets(gt_boxes, size, stride=STRIDE, device=None):
    """Label each grid cell with a ground-truth index, or -1 for background.

    A cell is positive for a box when its centre lies inside the box and
    within ``CENTER_RADIUS`` strides of the box centre. Overlapping claims go
    to the smallest box.
    """
    cx, cy = grid_centers(size, stride, device)
    n_cells = cx.numel()
    if len(gt_boxes) == 0:
        return torch.full((n_cells,), -1, dtype=torch.long, device=device)
    g = torch.as_tensor(gt_boxes, dtype=torch.float32, device=device).reshape(-1, 4)
    gcx, gcy = (g[:, 0] + g[:, 2]) / 2, (g[:, 1] + g[:, 3]) / 2
    inside = (cx[:, None] > g[None, :, 0]) & (cx[:, None] < g[None, :, 2]) & \
             (cy[:, None] > g[None, :, 1]) & (cy[:, None] < g[None, :, 3])
    r = CENTER_RADIUS * stride
    near = ((cx[:, None] - gcx[None]).abs() < r) & ((cy[:, None] - gcy[None]).abs() < r)
    ok = inside & near
    # the cell containing each centre is always positive
    gi = (gcy // stride).long().clamp(0, size // stride - 1)
    gj = (gcx // stride).long().clamp(0, size // stride - 1)
    ok[gi * (size // stride) + gj, torch.arange(len(g), device=device)] = True
    area = ((g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1]))[None].expand(n_cells, -1)
    area = torch.where(ok, area, torch.full_like(area, float("inf")))
    best = area.argmin(dim=1)
    return torch.where(ok.any(dim=1), best, torch.full_like(best, -1))


def giou_loss(a, b, eps=1e-7):
    ix1, iy1 = torch.max(a[:, 0], b[:, 0]), torch.max(a[:, 1], b[:, 1])
    ix2, iy2 = torch.min(a[:, 2], b[:, 2]), torch.min(a[:, 3], b[:, 3])
    inter = (ix2 - ix1).clamp(min=0) * (iy2 - iy1).clamp(min=0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a + area_b - inter + eps
    iou = inter / union
    cx1, cy1 = torch.min(a[:, 0], b[:, 0]), torch.min(a[:, 1], b[:, 1])
    cx2, cy2 = torch.max(a[:, 2], b[:, 2]), torch.max(a[:, 3], b[:, 3])
    hull = (cx2 - cx1) * (cy2 - cy1) + eps
    return 1.0 - (iou - (hull - union) / hull)


def detection_loss(box_raw, cls_raw, targets, size, box_weight=2.0, alpha=0.25, gamma=2.0):
    """Focal objectness loss plus GIoU box loss, both normalised by the positive count.

    ``targets`` is a list (one per image) of (N, 4) xyxy ground-truth arrays in input pixels.
    """
    boxes, _ = decode(box_raw, cls_raw)
    logits = cls_raw.reshape(cls_raw.shape[0], -1)
    obj_t = torch.zeros_like(logits)
    pred_pos, gt_pos = [], []
    for i, gt in enumerate(targets):
        idx = assign_targets(gt, size, device=boxes.device)
        pos = idx >= 0
        if pos.any():
            obj_t[i, pos] = 1.0
            pred_pos.append(boxes[i, pos])
            gt_pos.append(torch.as_tensor(gt, dtype=boxes.dtype, device=boxes.device).reshape(-1, 4)[idx[pos]])
    n_pos = max(1.0, float(obj_t.sum()))
    p = torch.sigmoid(logits)
    ce = F.binary_cross_entropy_with_logits(logits, obj_t, reduction="none")
    p_t = p * obj_t + (1 - p) * (1 - obj_t)
    a_t = alpha * obj_t + (1 - alpha) * (1 - obj_t)
    cls_loss = (a_t * (1 - p_t) ** gamma * ce).sum() / n_pos
    if pred_pos:
        box_loss = giou_loss(torch.cat(pred_pos), torch.cat(gt_pos)).sum() / n_pos
    else:
        box_loss = boxes.sum() * 0.0
    return cls_loss + box_weight * box_loss, {"cls": cls_loss.item(), "box": box_loss.item()}
