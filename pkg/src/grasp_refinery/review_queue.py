"""Review queue: the per-iteration worklist of flagged scenes with leases."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .dataset import AnnotationSource, GraspAnnotation
from .geometry import GraspPose, pose_from_dict, pose_to_dict

DEFAULT_LEASE_TTL = 600.0

PENDING = "pending"
LEASED = "leased"
DECIDED = "decided"


@dataclass
class LeaseTicket:
    operator_id: str
    expires_at: float


@dataclass
class ReviewQueueItem:
    """A flagged scene awaiting an operator decision.

    ``candidate`` is the triaged top prediction as (pose, prediction_id);
    it is None when the scene was flagged for having no prediction at all.
    ``gt_snapshot`` pins the labels as they stood at triage time.
    """

    image_id: str
    width: int
    height: int
    gt_snapshot: tuple[GraspAnnotation, ...]
    candidate: tuple[GraspPose, str] | None = None
    candidate_confidence: float | None = None
    rgb_path: Path | None = None
    sequence: int = 0
    status: str = PENDING
    lease: LeaseTicket | None = None


class ReviewQueue:
    """Single-coordinator queue; every transition happens under one lock."""

    def __init__(
        self,
        items: list[ReviewQueueItem],
        iteration: int,
        lease_ttl: float = DEFAULT_LEASE_TTL,
        clock: Callable[[], float] = time.time,
    ):
        self.items = list(items)
        self.iteration = iteration
        self.lease_ttl = lease_ttl
        self.clock = clock
        self._lock = threading.Lock()
        self._by_id = {item.image_id: item for item in self.items}

    def get(self, image_id: str) -> ReviewQueueItem | None:
        return self._by_id.get(image_id)

    def _expire_stale(self, now: float) -> None:
        for item in self.items:
            if item.status == LEASED and item.lease and item.lease.expires_at <= now:
                item.status = PENDING
                item.lease = None

    def lease_next(self, operator_id: str) -> ReviewQueueItem | None:
        """Lease the lowest-sequence pending item, or None when none remain."""
        with self._lock:
            now = self.clock()
            self._expire_stale(now)
            for item in self.items:
                if item.status == PENDING:
                    item.status = LEASED
                    item.lease = LeaseTicket(operator_id, now + self.lease_ttl)
                    return item
            return None

    def release(self, image_id: str) -> None:
        with self._lock:
            item = self._by_id.get(image_id)
            if item is not None and item.status == LEASED:
                item.status = PENDING
                item.lease = None

    def mark_decided(self, image_id: str) -> None:
        with self._lock:
            item = self._by_id.get(image_id)
            if item is not None:
                item.status = DECIDED
                item.lease = None

    def counts(self) -> dict[str, int]:
        with self._lock:
            self._expire_stale(self.clock())
            out = {PENDING: 0, LEASED: 0, DECIDED: 0}
            for item in self.items:
                out[item.status] += 1
            out["total"] = len(self.items)
            return out


def _annotation_to_dict(ann: GraspAnnotation) -> dict:
    return {"pose": pose_to_dict(ann.pose), "source": ann.source.value, "origin_id": ann.origin_id}


def _annotation_from_dict(data: dict) -> GraspAnnotation:
    return GraspAnnotation(
        pose_from_dict(data["pose"]), AnnotationSource(data["source"]), data.get("origin_id")
    )


def queue_to_dict(queue: ReviewQueue) -> dict:
    """JSON-safe snapshot of the queue's static content (no lease state)."""
    items = []
    for item in queue.items:
        candidate = None
        if item.candidate is not None:
            candidate = {
                "pose": pose_to_dict(item.candidate[0]),
                "prediction_id": item.candidate[1],
                "confidence": item.candidate_confidence,
            }
        items.append(
            {
                "image_id": item.image_id,
                "width": item.width,
                "height": item.height,
                "sequence": item.sequence,
                "rgb_path": str(item.rgb_path) if item.rgb_path else None,
                "candidate": candidate,
                "gt_snapshot": [_annotation_to_dict(a) for a in item.gt_snapshot],
            }
        )
    return {"iteration": queue.iteration, "lease_ttl": queue.lease_ttl, "items": items}


def queue_from_dict(data: dict, clock: Callable[[], float] = time.time) -> ReviewQueue:
    items = []
    for raw in data["items"]:
        candidate = None
        confidence = None
        if raw.get("candidate"):
            candidate = (pose_from_dict(raw["candidate"]["pose"]), raw["candidate"]["prediction_id"])
            confidence = raw["candidate"].get("confidence")
        items.append(
            ReviewQueueItem(
                image_id=raw["image_id"],
                width=int(raw["width"]),
                height=int(raw["height"]),
                gt_snapshot=tuple(_annotation_from_dict(a) for a in raw["gt_snapshot"]),
                candidate=candidate,
                candidate_confidence=confidence,
                rgb_path=Path(raw["rgb_path"]) if raw.get("rgb_path") else None,
                sequence=int(raw.get("sequence", 0)),
            )
        )
    return ReviewQueue(items, int(data["iteration"]), float(data.get("lease_ttl", DEFAULT_LEASE_TTL)), clock)
