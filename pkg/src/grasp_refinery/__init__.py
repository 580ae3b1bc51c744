"""Human-in-the-loop refinement toolkit for grasp annotation datasets."""

from .dataset import (
    AnnotationSource,
    DatasetVersion,
    GraspAnnotation,
    ImageRecord,
    load_dataset,
    load_manifest,
    validate,
    version_manifest,
    write_dataset,
)
from .errors import (
    ConfigError,
    ContractViolation,
    DatasetIOError,
    EmptyGroundTruthError,
    EncodeError,
    IngestError,
    IntegrityError,
    InvalidGraspError,
    LedgerIntegrityError,
    NotFoundError,
    ParseError,
    RefineryError,
    ReplayError,
    ShapeMismatchError,
    StateError,
    UndefinedAngleError,
)
from .geometry import (
    GraspPose,
    GraspRectangle,
    angle_distance,
    canonical_angle,
    grasp_success,
    intersection_area,
    iou,
    max_iou,
    rect_from_grasp,
)
from .heatmaps import HeatmapSet, LossBreakdown, decode, encode, load_heatmaps, loss, save_heatmaps
from .ledger import (
    EventKind,
    Ledger,
    LedgerEvent,
    ReviewDecision,
    Verdict,
    read_events,
    replay,
)
from .review_queue import ReviewQueue, ReviewQueueItem, queue_from_dict, queue_to_dict
from .triage import (
    IngestResult,
    PredictionEntry,
    PredictionSet,
    TriageReport,
    TriageVerdict,
    ingest_predictions,
    run_triage,
    stats_rows_to_json,
    stats_to_csv,
    triage_stats,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationSource",
    "ConfigError",
    "ContractViolation",
    "DatasetIOError",
    "DatasetVersion",
    "EmptyGroundTruthError",
    "EncodeError",
    "EventKind",
    "GraspAnnotation",
    "GraspPose",
    "GraspRectangle",
    "HeatmapSet",
    "ImageRecord",
    "IngestError",
    "IngestResult",
    "IntegrityError",
    "InvalidGraspError",
    "Ledger",
    "LedgerEvent",
    "LedgerIntegrityError",
    "LossBreakdown",
    "NotFoundError",
    "ParseError",
    "PredictionEntry",
    "PredictionSet",
    "RefineryError",
    "ReplayError",
    "ReviewDecision",
    "ReviewQueue",
    "ReviewQueueItem",
    "ShapeMismatchError",
    "StateError",
    "TriageReport",
    "TriageVerdict",
    "UndefinedAngleError",
    "Verdict",
    "angle_distance",
    "canonical_angle",
    "decode",
    "encode",
    "grasp_success",
    "ingest_predictions",
    "intersection_area",
    "iou",
    "load_dataset",
    "load_heatmaps",
    "load_manifest",
    "loss",
    "max_iou",
    "queue_from_dict",
    "queue_to_dict",
    "read_events",
    "rect_from_grasp",
    "replay",
    "run_triage",
    "save_heatmaps",
    "stats_rows_to_json",
    "stats_to_csv",
    "triage_stats",
    "validate",
    "version_manifest",
    "write_dataset",
]
