# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled box kernels: IoU matrix, greedy NMS and greedy TP matching."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _iou(double ax1, double ay1, double ax2, double ay2,
                        double bx1, double by1, double bx2, double by2) nogil:
    cdef double iw = min(ax2, bx2) - max(ax1, bx1)
    cdef double ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    cdef double inter = iw * ih
    cdef double union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_matrix(a, b):
    cdef double[:, ::1] A = np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(-1, 4))
    cdef double[:, ::1] B = np.ascontiguousarray(np.asarray(b, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] O = out
    with nogil:
        for i in range(n):
            for j in range(m):
                O[i, j] = _iou(A[i, 0], A[i, 1], A[i, 2], A[i, 3], B[j, 0], B[j, 1], B[j, 2], B[j, 3])
    return out


def nms(boxes, scores, double iou_thr):
    cdef double[:, ::1] Bx = np.ascontiguousarray(np.asarray(boxes, dtype=np.float64).reshape(-1, 4))
    s = np.asarray(scores, dtype=np.float64)
    cdef cnp.int64_t[::1] order = np.ascontiguousarray(np.argsort(-s, kind="stable").astype(np.int64))
    cdef Py_ssize_t n = Bx.shape[0], p, q, i, j, nkeep = 0
    sup = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] S = sup
    keep = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] K = keep
    with nogil:
        for p in range(n):
            i = order[p]
            if S[i]:
                continue
            K[nkeep] = i
            nkeep += 1
            for q in range(p + 1, n):
                j = order[q]
                if S[j]:
                    continue
                if _iou(Bx[i, 0], Bx[i, 1], Bx[i, 2], Bx[i, 3], Bx[j, 0], Bx[j, 1], Bx[j, 2], Bx[j, 3]) > iou_thr:
                    S[j] = 1
    return keep[:nkeep].copy()


def match_greedy(pred_boxes, gt_boxes, double iou_thr):
    cdef double[:, ::1] P = np.ascontiguousarray(np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4))
    cdef double[:, ::1] G = np.ascontiguousarray(np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = P.shape[0], m = G.shape[0], i, j, best_j
    cdef double best, v
    tp = np.zeros(n, dtype=np.uint8)
    taken = np.zeros(m, dtype=np.uint8)
    cdef cnp.uint8_t[::1] T = taken
    cdef cnp.uint8_t[::1] TP = tp
    with nogil:
        for i in range(n):
            best = -1.0
            best_j = -1
            for j in range(m):
                if T[j]:
                    continue
                v = _iou(P[i, 0], P[i, 1], P[i, 2], P[i, 3], G[j, 0], G[j, 1], G[j, 2], G[j, 3])
                if v >= iou_thr and v > best:
                    best = v
                    best_j = j
            if best_j >= 0:
                T[best_j] = 1
                TP[i] = 1
    return tp.astype(bool)
