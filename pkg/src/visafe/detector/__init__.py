from .boxes import BoundingBox, Detections, iou, nms, read_predictions, write_predictions
from .metrics import DetectionMetrics, average_precision, eval_detection
from .model import (ATTENTIONS, BACKBONES, Detector, DetectorConfig, build_detector_graph, decode, detect,
                    detect_batch, parse_variant, register_attention)
