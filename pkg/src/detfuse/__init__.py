"""detfuse: box-level fusion, image-level voting, and evaluation for
multi-detector ensembles, plus a seeded synthetic benchmark."""

from .geometry import Box, area, iou
from .interchange import (
    Corpus,
    Detection,
    DetectionSet,
    GroundTruth,
    InterchangeError,
    ParseError,
    ValidationError,
    build_corpus,
    parse_ground_truth,
    parse_predictions,
    serialize_detections,
    serialize_ground_truth,
)
from .fusion import FusedDetection, FusionConfig, fuse, nms, nmw, soft_nms, wbf
from .voting import ImageDecision, VotePolicy, decide_image, vote
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    average_precision,
    classification_report,
    evaluate_predictions,
    match_detections,
    render_table,
)
from .simulate import (
    BenchConfig,
    BenchRun,
    BoxGeometry,
    DetectorProfile,
    ScoreModel,
    generate_corpus,
    run_bench,
    simulate_detector,
)

__version__ = "0.1.0"

__all__ = [
    "Box", "area", "iou",
    "Corpus", "Detection", "DetectionSet", "GroundTruth",
    "InterchangeError", "ParseError", "ValidationError",
    "build_corpus", "parse_ground_truth", "parse_predictions",
    "serialize_detections", "serialize_ground_truth",
    "FusedDetection", "FusionConfig", "fuse", "nms", "nmw", "soft_nms", "wbf",
    "ImageDecision", "VotePolicy", "decide_image", "vote",
    "ConfusionMatrix", "EvalReport", "average_precision", "classification_report",
    "evaluate_predictions", "match_detections", "render_table",
    "BenchConfig", "BenchRun", "BoxGeometry", "DetectorProfile", "ScoreModel",
    "generate_corpus", "run_bench", "simulate_detector",
]
