"""Triage: score model predictions against labels and queue the suspects.

A scene is flagged when the best IOU of its top-confidence prediction against
the current labels falls strictly below the threshold (default 0.2). Flagged
scenes become review-queue items; per-iteration tallies feed the stats series.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dataset import DatasetVersion, GraspAnnotation
from .errors import EmptyGroundTruthError, IngestError, IntegrityError, InvalidGraspError
from .geometry import GraspPose, max_iou
from .ledger import IterationSummary
from .review_queue import ReviewQueueItem

DEFAULT_THRESHOLD = 0.2
MAX_REJECT_FRACTION = 0.1

_REQUIRED_KEYS = ("image_id", "x", "y", "theta_deg", "opening", "jaw_size", "confidence", "prediction_id")


@dataclass(frozen=True)
class PredictionEntry:
    pose: GraspPose
    confidence: float
    prediction_id: str


@dataclass
class PredictionSet:
    """Predictions grouped by image, each group best-confidence first."""

    model_tag: str
    iteration: int
    entries: dict[str, list[PredictionEntry]]


@dataclass(frozen=True)
class RejectedLine:
    line: int
    reason: str


@dataclass
class IngestResult:
    predictions: PredictionSet
    rejects: list[RejectedLine]


def ingest_predictions(
    lines: Iterable[str],
    model_tag: str = "",
    iteration: int = 0,
    max_reject_fraction: float = MAX_REJECT_FRACTION,
) -> IngestResult:
    """Parse newline-delimited JSON predictions.

    Malformed lines are collected as rejects; more than ``max_reject_fraction``
    of them aborts the whole stream. A duplicate prediction_id always aborts.
    """
    entries: dict[str, list[PredictionEntry]] = {}
    rejects: list[RejectedLine] = []
    seen_ids: set[str] = set()
    total = 0
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        total += 1
        try:
            doc = json.loads(line)
        except ValueError:
            rejects.append(RejectedLine(line_no, "invalid JSON"))
            continue
        if not isinstance(doc, dict):
            rejects.append(RejectedLine(line_no, "not a JSON object"))
            continue
        missing = [k for k in _REQUIRED_KEYS if k not in doc]
        if missing:
            rejects.append(RejectedLine(line_no, f"missing keys: {', '.join(missing)}"))
            continue
        prediction_id = doc["prediction_id"]
        image_id = doc["image_id"]
        if not isinstance(prediction_id, str) or not isinstance(image_id, str):
            rejects.append(RejectedLine(line_no, "prediction_id and image_id must be strings"))
            continue
        if prediction_id in seen_ids:
            raise IngestError(f"duplicate prediction_id {prediction_id!r} at line {line_no}")
        try:
            confidence = float(doc["confidence"])
            if not 0.0 <= confidence <= 1.0 or not math.isfinite(confidence):
                raise ValueError
            pose = GraspPose(
                float(doc["x"]),
                float(doc["y"]),
                math.radians(float(doc["theta_deg"])),
                float(doc["opening"]),
                float(doc["jaw_size"]),
            )
        except (ValueError, TypeError, InvalidGraspError):
            rejects.append(RejectedLine(line_no, "invalid field values"))
            continue
        seen_ids.add(prediction_id)
        entries.setdefault(image_id, []).append(PredictionEntry(pose, confidence, prediction_id))
    if total and len(rejects) / total > max_reject_fraction:
        raise IngestError(
            f"{len(rejects)} of {total} lines malformed "
            f"(limit {max_reject_fraction:.0%}); first: line {rejects[0].line}, {rejects[0].reason}"
        )
    # Content-determined order: permuting input lines cannot change the top-1.
    for group in entries.values():
        group.sort(key=lambda e: (-e.confidence, e.prediction_id))
    return IngestResult(PredictionSet(model_tag, iteration, entries), rejects)


@dataclass(frozen=True)
class TriageVerdict:
    """Outcome for one image; a missing prediction leaves the IOU undefined."""

    image_id: str
    best_iou: float | None
    matched_gt_index: int | None
    flagged: bool
    evaluated_prediction: str | None


@dataclass
class TriageReport:
    iteration: int
    threshold: float
    evaluated: int
    flagged: int
    unflagged: int
    verdicts: list[TriageVerdict] = field(default_factory=list)


def triage_image(
    image_id: str,
    predictions: Sequence[PredictionEntry],
    gts: Sequence[GraspAnnotation],
    threshold: float = DEFAULT_THRESHOLD,
) -> TriageVerdict:
    """Judge one image by its top-confidence prediction.

    No predictions at all flags the image rather than skipping it, so model
    silence stays visible to the operator.
    """
    if not predictions:
        return TriageVerdict(image_id, None, None, True, None)
    top = predictions[0]
    best, index = max_iou(top.pose, [a.pose for a in gts])
    return TriageVerdict(image_id, best, index, best < threshold, top.prediction_id)


def run_triage(
    version: DatasetVersion,
    predictions: PredictionSet,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[TriageReport, list[ReviewQueueItem]]:
    """Triage every image of a version; returns the report and queue items.

    Predictions referencing unknown images raise IntegrityError. The verdict
    list and queue are ordered by image id, so triage is order-independent.
    """
    orphans = sorted(set(predictions.entries) - set(version.records))
    if orphans:
        raise IntegrityError(f"predictions reference unknown images: {', '.join(orphans)}")
    verdicts: list[TriageVerdict] = []
    items: list[ReviewQueueItem] = []
    for image_id in sorted(version.records):
        record = version.records[image_id]
        if not record.annotations:
            raise EmptyGroundTruthError(f"image {image_id} has no labels to triage against")
        group = predictions.entries.get(image_id, [])
        verdict = triage_image(image_id, group, record.annotations, threshold)
        verdicts.append(verdict)
        if verdict.flagged:
            candidate = None
            confidence = None
            if group:
                candidate = (group[0].pose, group[0].prediction_id)
                confidence = group[0].confidence
            items.append(
                ReviewQueueItem(
                    image_id=image_id,
                    width=record.width,
                    height=record.height,
                    gt_snapshot=record.annotations,
                    candidate=candidate,
                    candidate_confidence=confidence,
                    rgb_path=record.rgb_path,
                    sequence=len(items),
                )
            )
    flagged = sum(1 for v in verdicts if v.flagged)
    report = TriageReport(
        iteration=predictions.iteration,
        threshold=threshold,
        evaluated=len(verdicts),
        flagged=flagged,
        unflagged=len(verdicts) - flagged,
        verdicts=verdicts,
    )
    return report, items


@dataclass(frozen=True)
class StatsRow:
    """One iteration of the refinement series; proportion is None on 0/0."""

    iteration: int
    false_count: int
    fn_count: int
    tn_count: int
    fn_proportion: float | None
    labels_added: int
    images_removed: int


STATS_HEADER = "iteration,false_count,fn_count,tn_count,fn_proportion,labels_added,images_removed"


def triage_stats(
    reports: Sequence[TriageReport],
    summaries: Sequence[IterationSummary] = (),
) -> list[StatsRow]:
    """Join triage reports with ledger tallies into the per-iteration series."""
    by_iteration = {s.iteration: s for s in summaries}
    rows: list[StatsRow] = []
    for report in sorted(reports, key=lambda r: r.iteration):
        summary = by_iteration.get(report.iteration)
        added = summary.labels_added if summary else 0
        removed = summary.images_removed if summary else 0
        tn = summary.tn_count if summary else 0
        fn = added + removed
        proportion = fn / (fn + tn) if (fn + tn) > 0 else None
        rows.append(
            StatsRow(report.iteration, report.flagged, fn, tn, proportion, added, removed)
        )
    return rows


def stats_to_csv(rows: Sequence[StatsRow]) -> str:
    lines = [STATS_HEADER]
    for row in rows:
        proportion = "" if row.fn_proportion is None else f"{row.fn_proportion:.6f}"
        lines.append(
            f"{row.iteration},{row.false_count},{row.fn_count},{row.tn_count},"
            f"{proportion},{row.labels_added},{row.images_removed}"
        )
    return "\n".join(lines) + "\n"


def stats_rows_to_json(rows: Sequence[StatsRow]) -> list[dict]:
    return [
        {
            "iteration": row.iteration,
            "false_count": row.false_count,
            "fn_count": row.fn_count,
            "tn_count": row.tn_count,
            "fn_proportion": row.fn_proportion,
            "labels_added": row.labels_added,
            "images_removed": row.images_removed,
        }
        for row in rows
    ]


def report_to_dict(report: TriageReport) -> dict:
    return {
        "iteration": report.iteration,
        "threshold": report.threshold,
        "evaluated": report.evaluated,
        "flagged": report.flagged,
        "unflagged": report.unflagged,
        "verdicts": [
            {
                "image_id": v.image_id,
                "best_iou": v.best_iou,
                "matched_gt_index": v.matched_gt_index,
                "flagged": v.flagged,
                "evaluated_prediction": v.evaluated_prediction,
            }
            for v in report.verdicts
        ],
    }


def report_from_dict(data: dict) -> TriageReport:
    return TriageReport(
        iteration=int(data["iteration"]),
        threshold=float(data["threshold"]),
        evaluated=int(data["evaluated"]),
        flagged=int(data["flagged"]),
        unflagged=int(data["unflagged"]),
        verdicts=[
            TriageVerdict(
                v["image_id"],
                v["best_iou"],
                v["matched_gt_index"],
                bool(v["flagged"]),
                v["evaluated_prediction"],
            )
            for v in data.get("verdicts", [])
        ],
    )
