"""Free-flow fever screening on fused visual/thermal streams.

A deterministic dual-sensor scene simulator feeds a fusion engine that
aligns visual and thermal frames per person, tracks people through
occlusions, measures prioritized core-body temperatures, compensates for
distance with a small trained regressor, auto-calibrates against a black
body, and emits alerts plus evaluation metrics.
"""

__version__ = "0.1.0"

from .alignment import (AffineOffset, AlignConfig, AlignmentResult,  # noqa: F401
                        FrameAligner, PersonAlignment, depth_from_disparity,
                        manual_offset_for_rig, manual_offset_map)
from .background import (BackgroundModel, estimate_background,  # noqa: F401
                         foreground_mask)
from .calibration import (CalibState, CalibTrace, controller_step,  # noqa: F401
                          monitor_black_body, run_calibration_loop)
from .compensation import (MLP, AdamState, CompensationModel,  # noqa: F401
                           LossReport, TrainConfig, gradient_check, load_model,
                           loss_mse, save_model, train_adam)
from .core import (AppearanceVector, BBox, Point2, iou, similarity)  # noqa: F401
from .dataset import Dataset, DatasetError, read_dataset, write_dataset  # noqa: F401
from .features import (Feature, FeatureSet, detect_features,  # noqa: F401
                       hamming_matrix, match_descriptors)
from .homography import (Homography, HomographyError,  # noqa: F401
                         estimate_homography)
from .pipeline import (AlignReportRow, FrameResult, PipelineConfig,  # noqa: F401
                       RunSummary, align_report, evaluate, run_pipeline)
from .screening import (Alert, Annotation, Reading, RegionPriority,  # noqa: F401
                        ScreeningConfig, ScreeningEngine, ScreeningRecord,
                        measure_temperature, render_annotations)
from .simulate import (BlackBodySpec, CameraRig, Detection,  # noqa: F401
                       DetectionNoise, DriftProfile, FramePair, PersonSpec,
                       Scenario, SimConfig, emit_detections, generate_scenario,
                       ground_truth_rows, render_frame_pair)
from .tracking import (PersonTracker, TrackConfig, TrackedDetection,  # noqa: F401
                       TrackedPerson)
