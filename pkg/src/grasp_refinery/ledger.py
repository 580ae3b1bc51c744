"""Append-only review ledger: checksum-chained events and deterministic replay.

Each line is one JSON event ``{seq, kind, payload, prev_checksum}`` where
``prev_checksum`` is the SHA-256 of the previous line's bytes (sans newline);
the first event chains from the hash of empty input. Dataset versions are
derived exclusively by replaying the ledger onto a sealed base version.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .dataset import AnnotationSource, DatasetVersion, GraspAnnotation, ImageRecord
from .errors import (
    ContractViolation,
    LedgerIntegrityError,
    NotFoundError,
    ReplayError,
    StateError,
)
from .geometry import GraspPose, pose_from_dict, pose_to_dict
from .review_queue import DECIDED, LEASED, ReviewQueueItem

GENESIS = hashlib.sha256(b"").hexdigest()


class EventKind(str, Enum):
    ADD_GRASP = "add_grasp"
    REMOVE_IMAGE = "remove_image"
    NO_OP = "no_op"
    ITERATION_BOUNDARY = "iteration_boundary"


class Verdict(str, Enum):
    TRUE_NEGATIVE = "true_negative"
    FN_MISSING_LABEL = "fn_missing_label"
    FN_ANNOTATION_ERROR = "fn_annotation_error"


@dataclass(frozen=True)
class ReviewDecision:
    """An operator's verdict on one flagged scene."""

    image_id: str
    verdict: Verdict
    operator_id: str
    iteration: int
    candidate: tuple[GraspPose, str] | None = None
    decided_at: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        if self.verdict is Verdict.FN_MISSING_LABEL and self.candidate is None:
            raise ContractViolation("fn_missing_label requires the candidate grasp")


@dataclass(frozen=True)
class LedgerEvent:
    sequence: int
    kind: EventKind
    payload: dict
    prev_checksum: str

    def to_line(self) -> bytes:
        doc = {
            "seq": self.sequence,
            "kind": self.kind.value,
            "payload": self.payload,
            "prev_checksum": self.prev_checksum,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class IterationSummary:
    iteration: int
    labels_added: int
    images_removed: int
    tn_count: int


class Ledger:
    """Append-only event log, optionally file-backed; single-writer locked."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[LedgerEvent] = []
        self._last_line = b""
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.events = read_events(self.path)
            if self.events:
                self._last_line = self.events[-1].to_line()

    def append(self, kind: EventKind, payload: dict) -> LedgerEvent:
        with self._lock:
            prev = hashlib.sha256(self._last_line).hexdigest() if self.events else GENESIS
            event = LedgerEvent(len(self.events), EventKind(kind), payload, prev)
            line = event.to_line()
            if self.path is not None:
                with open(self.path, "ab") as fh:
                    fh.write(line + b"\n")
            self.events.append(event)
            self._last_line = line
            return event

    def to_bytes(self) -> bytes:
        return b"".join(ev.to_line() + b"\n" for ev in self.events)

    def decide(self, item: ReviewQueueItem, decision: ReviewDecision, token: str | None = None) -> LedgerEvent:
        """Commit a decision on a leased item as exactly one ledger event."""
        if item.status == DECIDED:
            raise StateError(f"item {item.image_id} is already decided")
        if item.status != LEASED or item.lease is None:
            raise StateError(f"item {item.image_id} is not leased")
        if item.lease.operator_id != decision.operator_id:
            raise StateError(
                f"item {item.image_id} is leased by {item.lease.operator_id}, "
                f"not {decision.operator_id}"
            )
        payload: dict = {"image_id": item.image_id, "operator_id": decision.operator_id}
        if token is not None:
            payload["token"] = token
        if decision.verdict is Verdict.FN_MISSING_LABEL:
            pose, prediction_id = decision.candidate
            payload["annotation"] = {
                "pose": pose_to_dict(pose),
                "source": AnnotationSource.PSEUDO_LABEL.value,
                "origin_id": prediction_id,
            }
            kind = EventKind.ADD_GRASP
        elif decision.verdict is Verdict.FN_ANNOTATION_ERROR:
            payload["reason"] = "annotation_error"
            kind = EventKind.REMOVE_IMAGE
        else:
            kind = EventKind.NO_OP
        event = self.append(kind, payload)
        item.status = DECIDED
        item.lease = None
        return event

    def begin_iteration(self, iteration: int) -> LedgerEvent:
        return self.append(EventKind.ITERATION_BOUNDARY, {"iteration": iteration})

    def iterations(self) -> list[int]:
        return [
            ev.payload["iteration"] for ev in self.events if ev.kind is EventKind.ITERATION_BOUNDARY
        ]

    def events_for_iteration(self, iteration: int) -> list[LedgerEvent]:
        current = None
        selected: list[LedgerEvent] = []
        for ev in self.events:
            if ev.kind is EventKind.ITERATION_BOUNDARY:
                current = ev.payload["iteration"]
                continue
            if current == iteration:
                selected.append(ev)
        return selected

    def iteration_summary(self, iteration: int) -> IterationSummary:
        if iteration not in self.iterations():
            raise NotFoundError(f"iteration {iteration} is not in the ledger")
        added = removed = tn = 0
        for ev in self.events_for_iteration(iteration):
            if ev.kind is EventKind.ADD_GRASP:
                added += 1
            elif ev.kind is EventKind.REMOVE_IMAGE:
                removed += 1
            elif ev.kind is EventKind.NO_OP:
                tn += 1
        return IterationSummary(iteration, added, removed, tn)


def read_events(path: Path | str) -> list[LedgerEvent]:
    """Load and verify a ledger file; integrity failures name the bad sequence.

    A missing or empty file is an empty ledger.
    """
    path = Path(path)
    if not path.exists():
        return []
    raw = path.read_bytes()
    if not raw:
        return []
    if not raw.endswith(b"\n"):
        # Count the lines to name the damaged (final) record.
        last_seq = raw.count(b"\n")
        raise LedgerIntegrityError("ledger does not end with a newline", sequence=last_seq)
    events: list[LedgerEvent] = []
    prev_line = b""
    for index, line in enumerate(raw.split(b"\n")[:-1]):
        try:
            doc = json.loads(line.decode())
            event = LedgerEvent(
                int(doc["seq"]), EventKind(doc["kind"]), doc["payload"], doc["prev_checksum"]
            )
        except (ValueError, KeyError, TypeError):
            raise LedgerIntegrityError(f"unparseable ledger line {index}", sequence=index) from None
        if event.sequence != index:
            raise LedgerIntegrityError(
                f"sequence {event.sequence} at position {index}", sequence=index
            )
        expected = GENESIS if index == 0 else hashlib.sha256(prev_line).hexdigest()
        if event.prev_checksum != expected:
            raise LedgerIntegrityError(f"checksum chain broken at sequence {index}", sequence=index)
        events.append(event)
        prev_line = line
    return events


def _annotation_from_payload(data: dict) -> GraspAnnotation:
    return GraspAnnotation(
        pose_from_dict(data["pose"]), AnnotationSource(data["source"]), data.get("origin_id")
    )


def replay(base: DatasetVersion, events: Sequence[LedgerEvent], up_to: int) -> DatasetVersion:
    """Apply events for iterations (base.version_id, up_to] onto a base version.

    Replay is pure and deterministic; a corrupt ledger (an add or remove
    targeting a missing image) raises ReplayError.
    """
    if up_to < base.version_id:
        raise ContractViolation(f"cannot replay backwards: {up_to} < {base.version_id}")
    records = dict(base.records)
    base_count = sum(len(r.annotations) for r in records.values())
    added = lost = 0
    current_iteration: int | None = None
    last_seq = base.created_from - 1 if base.created_from else -1
    for ev in events:
        if ev.kind is EventKind.ITERATION_BOUNDARY:
            current_iteration = int(ev.payload["iteration"])
            if current_iteration > up_to:
                break
            continue
        if current_iteration is None or current_iteration <= base.version_id:
            continue  # already folded into the base
        last_seq = ev.sequence
        image_id = ev.payload.get("image_id")
        if ev.kind is EventKind.ADD_GRASP:
            record = records.get(image_id)
            if record is None:
                raise ReplayError(
                    f"add_grasp targets missing image {image_id!r} at sequence {ev.sequence}"
                )
            annotation = _annotation_from_payload(ev.payload["annotation"])
            records[image_id] = replace(record, annotations=record.annotations + (annotation,))
            added += 1
        elif ev.kind is EventKind.REMOVE_IMAGE:
            record = records.pop(image_id, None)
            if record is None:
                raise ReplayError(
                    f"remove_image targets missing image {image_id!r} at sequence {ev.sequence}"
                )
            lost += len(record.annotations)
        # NO_OP leaves the records untouched by definition.
    total = sum(len(r.annotations) for r in records.values())
    assert total == base_count + added - lost, "annotation conservation violated"
    return DatasetVersion(
        version_id=up_to,
        records=records,
        parent=up_to - 1 if up_to > 0 else None,
        created_from=last_seq + 1,
    )
