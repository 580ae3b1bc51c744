"""Closed-loop simulation: synthetic scenes, an oracle predictor, a scripted
operator, and the triage -> review -> replay cycle wired end to end.

Scene model: every scene is a 300x300 field holding three spatially disjoint
grasp sites (orientation clusters) of two near-identical labels each, placed
on a coarse grid so rectangles from different sites never overlap. Corruption
either drops one whole site from the published labels (missing-label scenes,
the dominant site most often) or replaces the published labels with grasps
that overlap nothing real (annotation-error scenes).

The oracle models a detector trained on the full distribution: at iteration k
it predicts a grasp from site (k-1) mod 3, visiting sites in salience order,
so missing sites surface over a few iterations and the flagged count decays
instead of collapsing in one step. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import AnnotationSource, DatasetVersion, GraspAnnotation, ImageRecord, version_manifest
from .errors import ContractViolation
from .geometry import GraspPose, iou, max_iou, rect_from_grasp
from .ledger import Ledger, ReviewDecision, Verdict, replay
from .review_queue import ReviewQueue, ReviewQueueItem
from .triage import (
    DEFAULT_THRESHOLD,
    PredictionEntry,
    PredictionSet,
    StatsRow,
    TriageReport,
    run_triage,
    triage_stats,
)

FIELD_SIZE = 300
SITES_PER_SCENE = 3
LABELS_PER_SITE = 2
# Salience mix for which site goes missing: annotators usually capture the
# dominant orientation, so it is also the one the oracle re-finds first.
DROP_SITE_WEIGHTS = (0.6, 0.3, 0.1)
ANGLE_NOISE_RATE = 0.02  # radians of angle sigma per unit of noise level
OPERATOR_IOU_MIN = 0.25
SCRIPTED_OPERATOR = "scripted-operator"


class Corruption(str, Enum):
    NONE = "none"
    LABELS_DROPPED = "labels_dropped"
    LABELS_CORRUPTED = "labels_corrupted"


@dataclass(frozen=True)
class SyntheticScene:
    """A pixel-less scene: complete truth plus the published (possibly flawed)
    labels, with site structure exposed for the oracle."""

    image_id: str
    width: int
    height: int
    complete_labels: tuple[GraspPose, ...]
    published_labels: tuple[GraspPose, ...]
    corruption: Corruption
    sites: tuple[tuple[int, ...], ...]
    dropped_site: int | None = None


def _site_labels(rng: np.random.Generator, cx: float, cy: float) -> list[GraspPose]:
    """A tight orientation cluster: same spot, near-identical grasps."""
    angle = rng.uniform(-math.pi / 2.0, math.pi / 2.0)
    opening = rng.uniform(30.0, 56.0)
    jaw = rng.uniform(10.0, 16.0)
    labels = []
    for _ in range(LABELS_PER_SITE):
        labels.append(
            GraspPose(
                cx + rng.uniform(-2.0, 2.0),
                cy + rng.uniform(-2.0, 2.0),
                angle + rng.uniform(-0.03, 0.03),
                opening * rng.uniform(0.95, 1.05),
                jaw * rng.uniform(0.95, 1.05),
            )
        )
    return labels


def _bogus_labels(rng: np.random.Generator, cells: np.ndarray) -> list[GraspPose]:
    """Implausible labels at unused grid cells, overlapping no real site."""
    labels = []
    for cx, cy in cells:
        labels.append(
            GraspPose(
                cx + rng.uniform(-2.0, 2.0),
                cy + rng.uniform(-2.0, 2.0),
                rng.uniform(-math.pi / 2.0, math.pi / 2.0),
                rng.uniform(30.0, 56.0),
                rng.uniform(10.0, 16.0),
            )
        )
    return labels


def generate_corpus(
    n_scenes: int,
    drop_fraction: float,
    corrupt_fraction: float,
    seed: int,
) -> list[SyntheticScene]:
    """Build a deterministic corpus with exact corruption counts.

    round(n * drop_fraction) scenes lose one site; round(n * corrupt_fraction)
    scenes get fully bogus published labels, verified pairwise to stay below
    the triage threshold against every complete label.
    """
    if n_scenes < 0:
        raise ContractViolation("n_scenes must be non-negative")
    rng = np.random.default_rng(seed)
    n_drop = int(round(n_scenes * drop_fraction))
    n_corrupt = int(round(n_scenes * corrupt_fraction))
    if n_drop + n_corrupt > n_scenes:
        raise ContractViolation("drop and corrupt fractions exceed the corpus")
    kinds = [Corruption.LABELS_DROPPED] * n_drop + [Corruption.LABELS_CORRUPTED] * n_corrupt
    kinds += [Corruption.NONE] * (n_scenes - len(kinds))
    order = rng.permutation(n_scenes)

    grid = np.array([(x, y) for y in (75.0, 150.0, 225.0) for x in (75.0, 150.0, 225.0)])
    scenes: list[SyntheticScene] = []
    for index in range(n_scenes):
        corruption = kinds[order[index]]
        cell_indices = rng.choice(len(grid), size=SITES_PER_SCENE + 2, replace=False)
        site_cells = grid[cell_indices[:SITES_PER_SCENE]]
        spare_cells = grid[cell_indices[SITES_PER_SCENE:]]

        complete: list[GraspPose] = []
        sites: list[tuple[int, ...]] = []
        for cx, cy in site_cells:
            start = len(complete)
            complete.extend(_site_labels(rng, cx, cy))
            sites.append(tuple(range(start, len(complete))))

        dropped_site: int | None = None
        if corruption is Corruption.LABELS_DROPPED:
            dropped_site = int(rng.choice(SITES_PER_SCENE, p=DROP_SITE_WEIGHTS))
            hidden = set(sites[dropped_site])
            published = [g for i, g in enumerate(complete) if i not in hidden]
        elif corruption is Corruption.LABELS_CORRUPTED:
            published = _bogus_labels(rng, spare_cells)
            for bogus in published:  # generator invariant, checked exhaustively
                bogus_rect = rect_from_grasp(bogus)
                for real in complete:
                    assert iou(bogus_rect, rect_from_grasp(real)) < DEFAULT_THRESHOLD
        else:
            published = list(complete)

        scenes.append(
            SyntheticScene(
                image_id=f"scene{index:04d}",
                width=FIELD_SIZE,
                height=FIELD_SIZE,
                complete_labels=tuple(complete),
                published_labels=tuple(published),
                corruption=corruption,
                sites=tuple(sites),
                dropped_site=dropped_site,
            )
        )
    return scenes


def oracle_predict(
    scene: SyntheticScene,
    noise_level: float,
    seed,
    iteration: int = 1,
    prediction_id: str | None = None,
) -> list[PredictionEntry]:
    """Predict one grasp for a scene, deterministic under the seed.

    Samples a label from the site visited at this iteration, perturbs center
    and width by ``noise_level`` pixels of Gaussian noise (angle sigma is
    ANGLE_NOISE_RATE radians per unit), and scores confidence strictly
    decreasing in the perturbation size; zero noise yields confidence 1.0.
    """
    if not scene.complete_labels:
        return []
    rng = np.random.default_rng(seed)
    site = scene.sites[(iteration - 1) % len(scene.sites)] if scene.sites else tuple(
        range(len(scene.complete_labels))
    )
    base = scene.complete_labels[int(rng.choice(site))]
    dx = dy = dw = dtheta = 0.0
    if noise_level > 0.0:
        dx, dy, dw = rng.normal(0.0, noise_level, size=3)
        dtheta = rng.normal(0.0, ANGLE_NOISE_RATE * noise_level)
    pose = GraspPose(
        base.center_x + dx,
        base.center_y + dy,
        base.angle + dtheta,
        max(base.opening + dw, 1.0),
        base.jaw_size,
    )
    confidence = math.exp(-(abs(dx) + abs(dy) + abs(dw)) / 20.0 - 2.0 * abs(dtheta))
    pid = prediction_id if prediction_id is not None else f"it{iteration:03d}-{scene.image_id}"
    return [PredictionEntry(pose, min(confidence, 1.0), pid)]


def scripted_operator(
    item: ReviewQueueItem,
    scene: SyntheticScene,
    iteration: int,
    operator_id: str = SCRIPTED_OPERATOR,
) -> ReviewDecision:
    """Deterministic reviewer with privileged access to the complete labels.

    Annotation-error scenes are condemned outright; a candidate matching some
    complete label at IOU >= 0.25 on a dropped-label scene becomes a pseudo
    label; everything else is a true negative.
    """
    if scene.corruption is Corruption.LABELS_CORRUPTED:
        verdict = Verdict.FN_ANNOTATION_ERROR
        candidate = None
    elif (
        scene.corruption is Corruption.LABELS_DROPPED
        and item.candidate is not None
        and max_iou(item.candidate[0], list(scene.complete_labels))[0] >= OPERATOR_IOU_MIN
    ):
        verdict = Verdict.FN_MISSING_LABEL
        candidate = item.candidate
    else:
        verdict = Verdict.TRUE_NEGATIVE
        candidate = None
    return ReviewDecision(
        image_id=item.image_id,
        verdict=verdict,
        operator_id=operator_id,
        iteration=iteration,
        candidate=candidate,
        decided_at=float(iteration),
    )


def build_base_version(corpus: list[SyntheticScene]) -> DatasetVersion:
    """Version 0 straight from the published labels (no image files)."""
    records = {}
    for scene in sorted(corpus, key=lambda s: s.image_id):
        annotations = tuple(GraspAnnotation(g, AnnotationSource.ORIGINAL) for g in scene.published_labels)
        records[scene.image_id] = ImageRecord(scene.image_id, scene.width, scene.height, annotations)
    return DatasetVersion(0, records)


@dataclass
class RecoveryReport:
    dropped_labels: int
    recovered: int

    @property
    def coverage(self) -> float | None:
        return self.recovered / self.dropped_labels if self.dropped_labels else None


@dataclass
class ClosedLoopResult:
    stats_rows: list[StatsRow]
    reports: list[TriageReport]
    ledger: Ledger
    final_version: DatasetVersion
    final_digest: str
    recovery: RecoveryReport
    corrupted_removed: int
    corrupted_total: int


def _recovery(corpus: list[SyntheticScene], final: DatasetVersion) -> RecoveryReport:
    """How many dropped labels some final label now covers at IOU >= 0.25."""
    dropped = recovered = 0
    for scene in corpus:
        if scene.corruption is not Corruption.LABELS_DROPPED:
            continue
        record = final.records.get(scene.image_id)
        for index in scene.sites[scene.dropped_site]:
            dropped += 1
            if record is None or not record.annotations:
                continue
            lost = scene.complete_labels[index]
            best, _ = max_iou(lost, [a.pose for a in record.annotations])
            if best >= OPERATOR_IOU_MIN:
                recovered += 1
    return RecoveryReport(dropped, recovered)


def run_closed_loop(
    corpus: list[SyntheticScene],
    iterations: int,
    noise_level: float,
    seed: int,
    ledger_path: Path | str | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> ClosedLoopResult:
    """Drive triage -> scripted review -> ledger replay for N iterations.

    Fully deterministic: the corpus plus this seed fix every ledger byte and
    the final manifest digest.
    """
    if iterations < 1:
        raise ContractViolation("iterations must be >= 1")
    ledger = Ledger(ledger_path)
    if ledger.events:
        raise ContractViolation("closed loop needs a fresh ledger")
    scenes = {scene.image_id: scene for scene in corpus}
    base = build_base_version(corpus)
    current = base
    reports: list[TriageReport] = []
    for iteration in range(1, iterations + 1):
        ledger.begin_iteration(iteration)
        entries: dict[str, list[PredictionEntry]] = {}
        for index, image_id in enumerate(sorted(current.records)):
            scene = scenes[image_id]
            entry_seed = np.random.SeedSequence([int(seed), iteration, index])
            group = oracle_predict(scene, noise_level, entry_seed, iteration)
            if group:
                entries[image_id] = group
        predictions = PredictionSet("oracle", iteration, entries)
        report, items = run_triage(current, predictions, threshold)
        reports.append(report)
        queue = ReviewQueue(items, iteration)
        while (item := queue.lease_next(SCRIPTED_OPERATOR)) is not None:
            decision = scripted_operator(item, scenes[item.image_id], iteration)
            ledger.decide(item, decision)
        current = replay(base, ledger.events, iteration)

    final = current
    digest = version_manifest(final)["digest"]
    corrupted_ids = [s.image_id for s in corpus if s.corruption is Corruption.LABELS_CORRUPTED]
    removed = sum(1 for image_id in corrupted_ids if image_id not in final.records)
    summaries = [ledger.iteration_summary(r.iteration) for r in reports]
    rows = triage_stats(reports, summaries)
    return ClosedLoopResult(
        stats_rows=rows,
        reports=reports,
        ledger=ledger,
        final_version=final,
        final_digest=digest,
        recovery=_recovery(corpus, final),
        corrupted_removed=removed,
        corrupted_total=len(corrupted_ids),
    )
