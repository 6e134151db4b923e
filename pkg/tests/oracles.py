"""Independent reference computations used by the tests."""
import itertools

import numpy as np
import torch


def fd_gradient_error(fn, x, eps=1e-6, seed=0):
    """Relative error between autograd and central-difference input gradients of ``sum(fn(x) * R)``."""
    g = torch.Generator().manual_seed(seed)
    x = x.detach().clone().double().requires_grad_(True)
    out = fn(x)
    r = torch.randn(out.shape, generator=g, dtype=torch.float64)
    (analytic,) = torch.autograd.grad((out * r).sum(), x)
    numeric = torch.zeros_like(x)
    flat = x.detach().clone().reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + eps
            hi = (fn(flat.view_as(x)) * r).sum().item()
            flat[i] = old - eps
            lo = (fn(flat.view_as(x)) * r).sum().item()
            flat[i] = old
            numeric.view(-1)[i] = (hi - lo) / (2 * eps)
    denom = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
    return (analytic - numeric).norm().item() / denom


def l2_norm_loop(values):
    total = 0.0
    for v in np.asarray(values, dtype=np.float64).reshape(-1):
        total += float(v) * float(v)
    return total ** 0.5


def box_iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def brute_nms(boxes, scores, thr):
    """O(n^2): a box survives iff no higher-ranked surviving box overlaps it by more than ``thr``."""
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(box_iou(boxes[i], boxes[j]) <= thr for j in kept):
            kept.append(i)
    return kept


def brute_segments_test(n, k):
    """Centre index of each floor-boundary segment, found by enumerating frame memberships."""
    out = []
    for s in range(k):
        members = [f for f in range(n) if (s * n) // k <= f < ((s + 1) * n) // k]
        if members:
            out.append(members[(len(members) - 1) // 2])
        else:
            lo = (s * n) // k
            out.append(min(range(n), key=lambda f: (abs(f - lo), f)))
    return out


def segment_bounds(n, k):
    return [((s * n) // k, ((s + 1) * n) // k) for s in range(k)]


def exhaustive_top_k(scores, k):
    """Best k-subset by total score, ties resolved towards lower indices, by enumeration."""
    best = None
    for combo in itertools.combinations(range(len(scores)), k):
        key = (sum(scores[i] for i in combo), tuple(-i for i in combo))
        if best is None or key > best[0]:
            best = (key, combo)
    return set(best[1])
