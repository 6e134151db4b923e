from .split import DatasetManifest, make_manifest, resolve, split_dataset
from .synthetic import (NON_VIOLENT, VIOLENT, DetectionSample, Glyph, SyntheticSceneConfig, VideoSample,
                        gen_detection_scenes, gen_video_scenes, inter_actor_distance, person_mask)
