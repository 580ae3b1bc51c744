"""Review HTTP service: leases, decisions, overlays, and stats.

All queue transitions and ledger appends serialize through one coordinator
lock; decision submits are idempotent by client token. State is rebuilt from
the queue snapshot plus the ledger on restart, so leases are the only thing a
crash loses.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse, Response
from pydantic import BaseModel

from .dataset import DatasetVersion, load_dataset
from .errors import ConfigError, ContractViolation, StateError
from .geometry import rect_from_grasp
from .ledger import EventKind, Ledger, ReviewDecision, Verdict, replay
from .review_queue import DECIDED, ReviewQueue, ReviewQueueItem, queue_from_dict
from .triage import TriageReport, report_from_dict, stats_rows_to_json, triage_stats

QUEUE_FILE = "queue.json"
LEDGER_FILE = "ledger.ndjson"
REPORTS_DIR = "reports"
VERSIONS_DIR = "versions"


class DecisionRequest(BaseModel):
    item_id: str
    verdict: str
    operator: str
    token: str
    candidate: Optional[dict] = None


class ServiceState:
    """Owns the queue, the ledger, and the idempotency-token table."""

    def __init__(
        self,
        queue: ReviewQueue,
        ledger: Ledger,
        reports: list[TriageReport] | None = None,
        version: DatasetVersion | None = None,
    ):
        self.queue = queue
        self.ledger = ledger
        self.reports = reports or []
        self.version = version
        self._lock = threading.Lock()
        self._tokens: dict[str, int] = {}
        self._recover()

    def _recover(self) -> None:
        """Mark items decided in the ledger; rebuild the token table."""
        for event in self.ledger.events_for_iteration(self.queue.iteration):
            image_id = event.payload.get("image_id")
            if image_id and self.queue.get(image_id) is not None:
                self.queue.mark_decided(image_id)
            token = event.payload.get("token")
            if token:
                self._tokens[token] = event.sequence

    def lease_next(self, operator: str) -> dict | None:
        with self._lock:
            item = self.queue.lease_next(operator)
            if item is None:
                return None
            counts = self.queue.counts()
            return {
                "item": _item_payload(item, self.queue.iteration),
                "lease": {
                    "operator": operator,
                    "expires_at": item.lease.expires_at,
                    "ttl_seconds": self.queue.lease_ttl,
                },
                "queue": counts,
            }

    def submit(self, request: DecisionRequest) -> tuple[int, bool]:
        """Returns (ledger sequence, duplicate). HTTP errors raise StateError
        and friends, mapped by the route handler."""
        with self._lock:
            if request.token in self._tokens:
                return self._tokens[request.token], True
            item = self.queue.get(request.item_id)
            if item is None:
                raise KeyError(request.item_id)
            try:
                verdict = Verdict(request.verdict)
            except ValueError:
                raise ContractViolation(f"unknown verdict {request.verdict!r}") from None
            now = self.queue.clock()
            if item.status == DECIDED:
                raise StateError(f"item {item.image_id} is already decided")
            if item.lease is not None and item.lease.expires_at <= now:
                self.queue.release(item.image_id)
                raise StateError(f"lease on {item.image_id} expired")
            candidate = None
            if verdict is Verdict.FN_MISSING_LABEL:
                if item.candidate is None:
                    raise ContractViolation(
                        f"item {item.image_id} has no candidate to accept as a label"
                    )
                if request.candidate and request.candidate.get("prediction_id") not in (
                    None,
                    item.candidate[1],
                ):
                    raise ContractViolation("candidate prediction_id does not match the item")
                candidate = item.candidate
            decision = ReviewDecision(
                image_id=item.image_id,
                verdict=verdict,
                operator_id=request.operator,
                iteration=self.queue.iteration,
                candidate=candidate,
                decided_at=now,
            )
            event = self.ledger.decide(item, decision, token=request.token)
            self._tokens[request.token] = event.sequence
            return event.sequence, False

    def overlay(self, image_id: str) -> dict | None:
        item = self.queue.get(image_id)
        if item is not None:
            polygons = [
                {"role": "ground_truth", "corners": rect_from_grasp(a.pose).corners.tolist()}
                for a in item.gt_snapshot
            ]
            if item.candidate is not None:
                polygons.append(
                    {
                        "role": "prediction",
                        "corners": rect_from_grasp(item.candidate[0]).corners.tolist(),
                        "prediction_id": item.candidate[1],
                    }
                )
            return {
                "image_id": image_id,
                "width": item.width,
                "height": item.height,
                "image_url": f"/api/images/{image_id}" if item.rgb_path else None,
                "iteration": self.queue.iteration,
                "polygons": polygons,
            }
        if self.version is not None and image_id in self.version.records:
            record = self.version.records[image_id]
            return {
                "image_id": image_id,
                "width": record.width,
                "height": record.height,
                "image_url": f"/api/images/{image_id}" if record.rgb_path else None,
                "iteration": self.queue.iteration,
                "polygons": [
                    {"role": "ground_truth", "corners": rect_from_grasp(a.pose).corners.tolist()}
                    for a in record.annotations
                ],
            }
        return None

    def image_path(self, image_id: str) -> Path | None:
        item = self.queue.get(image_id)
        if item is not None and item.rgb_path and Path(item.rgb_path).is_file():
            return Path(item.rgb_path)
        if self.version is not None:
            record = self.version.records.get(image_id)
            if record is not None and record.rgb_path and Path(record.rgb_path).is_file():
                return Path(record.rgb_path)
        return None

    def stats_rows(self) -> list[dict]:
        summaries = []
        for iteration in self.ledger.iterations():
            summaries.append(self.ledger.iteration_summary(iteration))
        return stats_rows_to_json(triage_stats(self.reports, summaries))

    def iteration_payload(self) -> dict:
        summaries = [
            {
                "iteration": s.iteration,
                "labels_added": s.labels_added,
                "images_removed": s.images_removed,
                "tn_count": s.tn_count,
            }
            for s in (
                self.ledger.iteration_summary(i) for i in self.ledger.iterations()
            )
        ]
        return {
            "current": self.queue.iteration,
            "queue": self.queue.counts(),
            "iterations": summaries,
        }

    @classmethod
    def from_workdir(cls, workdir: Path | str) -> "ServiceState":
        workdir = Path(workdir)
        queue_path = workdir / QUEUE_FILE
        if not queue_path.is_file():
            raise ConfigError(f"no {QUEUE_FILE} in {workdir}; run triage first")
        queue = queue_from_dict(json.loads(queue_path.read_text()))
        ledger = Ledger(workdir / LEDGER_FILE)
        reports = []
        reports_dir = workdir / REPORTS_DIR
        if reports_dir.is_dir():
            for path in sorted(reports_dir.glob("triage_it*.json")):
                reports.append(report_from_dict(json.loads(path.read_text())))
        version = None
        v0_dir = workdir / VERSIONS_DIR / "v000"
        if v0_dir.is_dir():
            v0, _ = load_dataset(v0_dir)
            version = replay(v0, ledger.events, max(queue.iteration - 1, 0))
        return cls(queue, ledger, reports, version)


def _item_payload(item: ReviewQueueItem, iteration: int) -> dict:
    candidate = None
    if item.candidate is not None:
        pose = item.candidate[0]
        candidate = {
            "x": pose.center_x,
            "y": pose.center_y,
            "angle": pose.angle,
            "opening": pose.opening,
            "jaw_size": pose.jaw_size,
            "prediction_id": item.candidate[1],
            "confidence": item.candidate_confidence,
        }
    return {
        "item_id": item.image_id,
        "image_id": item.image_id,
        "iteration": iteration,
        "width": item.width,
        "height": item.height,
        "candidate": candidate,
        "gt_count": len(item.gt_snapshot),
        "overlay_url": f"/api/overlays/{item.image_id}",
    }


def create_app(state: ServiceState, static_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="grasp-refinery review service")

    @app.get("/api/queue/next")
    def queue_next(operator: str = Query(min_length=1)):
        payload = state.lease_next(operator)
        if payload is None:
            return Response(status_code=204)
        return JSONResponse(payload)

    @app.post("/api/decisions")
    def post_decision(request: DecisionRequest):
        try:
            sequence, duplicate = state.submit(request)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown item {request.item_id!r}") from None
        except StateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except ContractViolation as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"sequence": sequence, "duplicate": duplicate}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        path = state.image_path(image_id)
        if path is None:
            raise HTTPException(status_code=404, detail=f"no image bytes for {image_id!r}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/overlays/{image_id}")
    def get_overlay(image_id: str):
        payload = state.overlay(image_id)
        if payload is None:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        return JSONResponse(payload)

    @app.get("/api/stats")
    def get_stats():
        return JSONResponse(state.stats_rows())

    @app.get("/api/iterations")
    def get_iterations():
        return JSONResponse(state.iteration_payload())

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def run_server(state: ServiceState, host: str = "127.0.0.1", port: int = 8700,
               static_dir: Path | str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(state, static_dir), host=host, port=port, log_level="warning")
