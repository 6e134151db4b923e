import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visafe.detector import Detections, Detector, DetectorConfig
from visafe.errors import ConfigError, NoEvidenceError
from visafe.pipeline import FULL_FRAME, PipelineConfig, ViSafe, crop_region, crop_rois, run_pipeline, select_box
from visafe.tsn import TSNConfig, TSNModel, predict_crops, resize_crop


def _frame(h=96, w=128, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_single_box_crop_is_that_region():
    f = _frame()
    cfg = PipelineConfig(pad_ratio=0.0, crop_size=32)
    roi = crop_rois(f, Detections.from_arrays(0, [[10, 10, 50, 90]]), cfg)
    np.testing.assert_array_equal(roi.crop, resize_crop(f[10:90, 10:50], 32))
    assert roi.source_box.xyxy() == (10, 10, 50, 90)


def test_union_hull_and_largest():
    dets = Detections.from_arrays(0, [[10, 10, 20, 20], [30, 30, 40, 40]])
    assert select_box(dets, "union").xyxy() == (10, 10, 40, 40)
    dets = Detections.from_arrays(0, [[10, 10, 20, 20], [30, 30, 45, 45]])
    assert select_box(dets, "largest").xyxy() == (30, 30, 45, 45)


def test_low_scoring_boxes_do_not_shape_the_crop():
    f = _frame()
    dets = Detections.from_arrays(0, [[10, 10, 20, 20], [60, 50, 90, 90]], scores=[0.9, 0.3])
    roi = crop_rois(f, dets, PipelineConfig(pad_ratio=0.0, crop_size=32, min_score=0.5))
    assert roi.source_box.xyxy() == (10, 10, 20, 20)
    roi = crop_rois(f, dets, PipelineConfig(pad_ratio=0.0, crop_size=32, min_score=0.2))
    assert roi.source_box.xyxy() == (10, 10, 90, 90)


def test_no_detection_policies():
    f = _frame()
    roi = crop_rois(f, Detections(3, []), PipelineConfig(crop_size=32))
    assert roi.source_box == FULL_FRAME and roi.t == 3
    np.testing.assert_array_equal(roi.crop, resize_crop(f, 32))
    roi = crop_rois(f, Detections(3, []), PipelineConfig(crop_size=32, no_detection_policy="skip"))
    assert roi.absent and roi.crop is None


box_st = st.tuples(st.floats(0, 100), st.floats(0, 70), st.floats(1, 60), st.floats(1, 40)).map(
    lambda b: (b[0], b[1], b[0] + b[2], b[1] + b[3]))


@given(st.lists(box_st, min_size=1, max_size=6), st.floats(0, 0.5), st.randoms())
@settings(max_examples=100, deadline=None)
def test_crop_geometry(boxes, pad, rnd):
    dets = Detections.from_arrays(0, boxes)
    hull = select_box(dets, "union")
    # the hull contains every contributing box
    for b in dets.boxes:
        assert hull.x1 <= b.x1 and hull.y1 <= b.y1 and hull.x2 >= b.x2 and hull.y2 >= b.y2
    x1, y1, x2, y2 = crop_region(hull.xyxy(), 128, 96, pad)
    assert 0 <= x1 < x2 <= 128 and 0 <= y1 < y2 <= 96
    shuffled = list(dets.boxes)
    rnd.shuffle(shuffled)
    assert select_box(shuffled, "union") == hull
    assert select_box(shuffled, "largest") == select_box(dets, "largest")


def test_config_validation():
    for bad in ({"pad_ratio": -0.1}, {"crop_size": 16}, {"decision_threshold": 1.5},
                {"multi_person_policy": "all"}, {"no_detection_policy": "guess"}):
        with pytest.raises(ConfigError):
            PipelineConfig(**bad)
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"crop": 3})


@pytest.fixture(scope="module")
def models():
    # conf=1.0 means the untrained detector never reports a person
    det = Detector.create(DetectorConfig(input_size=64, conf=1.0), seed=0)
    tsn = TSNModel.create(TSNConfig(input_size=32, feature_dim=32), seed=0)
    return det, tsn


def test_empty_clip_falls_back_to_full_frame(models):
    det, tsn = models
    frame = _frame(64, 64, seed=4)
    clip = np.stack([frame] * 9)
    v = run_pipeline(clip, det, tsn, PipelineConfig(crop_size=32), seed=0)
    assert v.probability == pytest.approx(predict_crops([resize_crop(frame, 32)] * 3, tsn), abs=1e-9)
    assert 0.0 < v.probability < 1.0
    assert v.label == ("violent" if v.probability >= 0.5 else "non-violent")
    assert v.per_segment_indices.to_list() == [1, 4, 7]
    d = v.to_dict()
    assert [f["t"] for f in d["frames"]] == [1, 4, 7] and all(f["box"] is None for f in d["frames"])
    again = run_pipeline(clip, det, tsn, PipelineConfig(crop_size=32), seed=0)
    assert again.to_dict() == d


def test_skip_policy_without_people_raises(models):
    det, tsn = models
    clip = np.stack([_frame(64, 64)] * 4)
    with pytest.raises(NoEvidenceError):
        run_pipeline(clip, det, tsn, PipelineConfig(crop_size=32, no_detection_policy="skip"))


def test_detect_all_frames_gives_same_verdict(models):
    det, tsn = models
    clip = np.stack([_frame(64, 64, seed=s) for s in range(6)])
    a = run_pipeline(clip, det, tsn, PipelineConfig(crop_size=32))
    b = run_pipeline(clip, det, tsn, PipelineConfig(crop_size=32, detect_all_frames=True))
    assert a.to_dict() == b.to_dict()


def test_crop_size_must_match_tsn(models):
    det, tsn = models
    with pytest.raises(ConfigError):
        ViSafe(det, tsn, PipelineConfig(crop_size=64))
    with pytest.raises(Exception):
        ViSafe(det, tsn, PipelineConfig(crop_size=32)).cfg = None
