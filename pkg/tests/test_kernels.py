import numpy as np
import pytest

from visafe import kernels

from .oracles import box_iou, brute_nms

BACKENDS = kernels.backends()


def random_boxes(rng, n, size=100.0):
    xy = rng.uniform(0, size, size=(n, 2))
    wh = rng.uniform(1, size / 3, size=(n, 2))
    return np.hstack([xy, xy + wh])


def test_compiled_backend_built():
    assert "compiled" in BACKENDS, "Cython extension missing; run `pip install -e . --no-build-isolation`"
    assert kernels.BACKEND == "compiled"


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_iou_matrix(name):
    k = BACKENDS[name]
    rng = np.random.default_rng(0)
    a, b = random_boxes(rng, 20), random_boxes(rng, 15)
    m = k.iou_matrix(a, b)
    ref = np.array([[box_iou(x, y) for y in b] for x in a])
    assert np.allclose(m, ref, atol=1e-12)
    assert k.iou_matrix(np.zeros((0, 4)), b).shape == (0, 15)


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("thr", [0.0, 0.3, 0.45, 0.7])
def test_nms_matches_brute_force(name, thr):
    k = BACKENDS[name]
    rng = np.random.default_rng(int(thr * 100))
    for trial in range(30):
        n = int(rng.integers(0, 40))
        boxes = random_boxes(rng, n, size=50)
        scores = np.round(rng.uniform(size=n), 2)  # rounding creates ties
        assert k.nms(boxes, scores, thr).tolist() == brute_nms(boxes.tolist(), scores.tolist(), thr)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_match_greedy(name):
    k = BACKENDS[name]
    gt = np.array([[0, 0, 10, 10], [20, 20, 30, 30]], dtype=float)
    preds = np.array([[0, 0, 10, 10], [0, 0, 10, 10], [21, 21, 31, 31], [50, 50, 60, 60]], dtype=float)
    assert k.match_greedy(preds, gt, 0.5).tolist() == [True, False, True, False]
    assert k.match_greedy(preds, np.zeros((0, 4)), 0.5).tolist() == [False] * 4


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("only one backend")
    c, p = BACKENDS["compiled"], BACKENDS["python"]
    rng = np.random.default_rng(7)
    for _ in range(20):
        a, b = random_boxes(rng, 30), random_boxes(rng, 12)
        s = rng.uniform(size=30)
        assert np.allclose(c.iou_matrix(a, b), p.iou_matrix(a, b))
        assert c.nms(a, s, 0.45).tolist() == p.nms(a, s, 0.45).tolist()
        order = np.argsort(-s)
        assert c.match_greedy(a[order], b, 0.5).tolist() == p.match_greedy(a[order], b, 0.5).tolist()
