"""Dataset store: Jacquard-convention scene files, versions, and manifests.

A scene is a pair ``<id>_RGB.png`` / ``<id>_grasps.txt``; each grasp line is
``x;y;theta_degrees;opening;jaw_size`` with degrees on disk and radians in
memory. Images are referenced, never decoded beyond their header dimensions.
"""

from __future__ import annotations

import hashlib
import json
import math
import shutil
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from PIL import Image

from .errors import ContractViolation, DatasetIOError, ParseError
from .geometry import GraspPose

GEOMETRY_SIDECAR = "geometry.json"
MANIFEST_NAME = "manifest.json"


class AnnotationSource(str, Enum):
    ORIGINAL = "original"
    PSEUDO_LABEL = "pseudo_label"


@dataclass(frozen=True)
class GraspAnnotation:
    """A grasp label plus its provenance.

    Pseudo labels must name the prediction they came from.
    """

    pose: GraspPose
    source: AnnotationSource = AnnotationSource.ORIGINAL
    origin_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "source", AnnotationSource(self.source))
        if self.source is AnnotationSource.PSEUDO_LABEL and not self.origin_id:
            raise ContractViolation("pseudo_label annotations must carry an origin_id")


@dataclass(frozen=True)
class ImageRecord:
    """One scene: an image reference, its dimensions, and its grasp labels."""

    image_id: str
    width: int
    height: int
    annotations: tuple[GraspAnnotation, ...]
    rgb_path: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))


@dataclass(frozen=True)
class DatasetVersion:
    """A sealed snapshot of the dataset; mutate only by ledger replay."""

    version_id: int
    records: Mapping[str, ImageRecord]
    parent: int | None = None
    created_from: int = 0

    def __post_init__(self):
        if self.version_id == 0:
            if self.parent is not None:
                raise ContractViolation("version 0 has no parent")
        elif self.parent != self.version_id - 1:
            raise ContractViolation(
                f"version {self.version_id} must have parent {self.version_id - 1}"
            )

    def annotation_count(self) -> int:
        return sum(len(r.annotations) for r in self.records.values())

    def source_counts(self) -> tuple[int, int]:
        """(original, pseudo_label) annotation totals."""
        original = pseudo = 0
        for record in self.records.values():
            for ann in record.annotations:
                if ann.source is AnnotationSource.PSEUDO_LABEL:
                    pseudo += 1
                else:
                    original += 1
        return original, pseudo


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "warning" | "error"
    message: str
    path: str | None = None
    line: int | None = None
    image_id: str | None = None


def parse_grasp_line(line: str, line_no: int | None = None, path: str | None = None) -> GraspPose:
    """Parse ``x;y;theta_degrees;opening;jaw_size`` into an in-memory pose."""
    parts = line.strip().split(";")
    if len(parts) != 5:
        raise ParseError(f"expected 5 ';'-separated fields, got {len(parts)}", path, line_no)
    try:
        x, y, theta_deg, opening, jaw = (float(p) for p in parts)
    except ValueError:
        raise ParseError(f"non-numeric field in {line.strip()!r}", path, line_no) from None
    if not all(math.isfinite(v) for v in (x, y, theta_deg, opening, jaw)):
        raise ParseError("non-finite grasp field", path, line_no)
    if opening <= 0.0 or jaw <= 0.0:
        raise ParseError(f"extents must be positive, got opening={opening} jaw={jaw}", path, line_no)
    return GraspPose(x, y, math.radians(theta_deg), opening, jaw)


def format_grasp_line(pose: GraspPose) -> str:
    """Inverse of parse_grasp_line, angle back in degrees, 6 decimals."""
    return (
        f"{pose.center_x:.6f};{pose.center_y:.6f};{math.degrees(pose.angle):.6f};"
        f"{pose.opening:.6f};{pose.jaw_size:.6f}"
    )


def _read_dims(png_path: Path) -> tuple[int, int]:
    with Image.open(png_path) as img:  # lazy: header only
        return int(img.size[0]), int(img.size[1])


def load_dataset(root: Path | str) -> tuple[DatasetVersion, list[Diagnostic]]:
    """Scan a directory of scene pairs into version 0.

    Malformed lines and unpaired files become diagnostics instead of silent
    skips; the version keeps every scene that yielded a usable record.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetIOError(f"dataset root {root} is not a directory")
    diagnostics: list[Diagnostic] = []

    sidecar_dims: dict[str, tuple[int, int]] = {}
    sidecar = root / GEOMETRY_SIDECAR
    if sidecar.is_file():
        try:
            raw = json.loads(sidecar.read_text())
            sidecar_dims = {k: (int(v[0]), int(v[1])) for k, v in raw.items()}
        except (ValueError, TypeError, IndexError):
            diagnostics.append(Diagnostic("error", "unreadable geometry sidecar", str(sidecar)))

    grasp_files = sorted(root.glob("*_grasps.txt"))
    known_ids = {p.name[: -len("_grasps.txt")] for p in grasp_files}
    for png in sorted(root.glob("*_RGB.png")):
        image_id = png.name[: -len("_RGB.png")]
        if image_id not in known_ids:
            diagnostics.append(
                Diagnostic("warning", "image without grasp file", str(png), image_id=image_id)
            )

    records: dict[str, ImageRecord] = {}
    for grasp_path in grasp_files:
        image_id = grasp_path.name[: -len("_grasps.txt")]
        png_path = root / f"{image_id}_RGB.png"
        rgb_path: Path | None = png_path
        if png_path.is_file():
            try:
                width, height = _read_dims(png_path)
            except OSError as exc:
                diagnostics.append(
                    Diagnostic("error", f"unreadable image: {exc}", str(png_path), image_id=image_id)
                )
                continue
        elif image_id in sidecar_dims:
            width, height = sidecar_dims[image_id]
            rgb_path = None
        else:
            diagnostics.append(
                Diagnostic(
                    "error", "grasp file without matching image", str(grasp_path), image_id=image_id
                )
            )
            continue

        annotations: list[GraspAnnotation] = []
        try:
            lines = grasp_path.read_text().splitlines()
        except OSError as exc:
            diagnostics.append(
                Diagnostic("error", f"unreadable grasp file: {exc}", str(grasp_path), image_id=image_id)
            )
            continue
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                pose = parse_grasp_line(line, line_no, str(grasp_path))
            except ParseError as exc:
                diagnostics.append(
                    Diagnostic("error", str(exc), str(grasp_path), line=line_no, image_id=image_id)
                )
                continue
            annotations.append(GraspAnnotation(pose))
        records[image_id] = ImageRecord(image_id, width, height, tuple(annotations), rgb_path)

    if not records:
        diagnostics.append(Diagnostic("warning", "no scenes found", str(root)))
    version = DatasetVersion(0, dict(sorted(records.items())))
    return version, diagnostics


def validate(version: DatasetVersion) -> list[Diagnostic]:
    """Report out-of-bounds centers, duplicate grasp lines, empty records."""
    diagnostics: list[Diagnostic] = []
    for image_id, record in version.records.items():
        if not record.annotations:
            diagnostics.append(Diagnostic("warning", "record has no annotations", image_id=image_id))
        seen: set[str] = set()
        for ann in record.annotations:
            pose = ann.pose
            if not (0.0 <= pose.center_x < record.width and 0.0 <= pose.center_y < record.height):
                diagnostics.append(
                    Diagnostic(
                        "error",
                        f"center ({pose.center_x}, {pose.center_y}) outside "
                        f"{record.width}x{record.height}",
                        image_id=image_id,
                    )
                )
            key = format_grasp_line(pose)
            if key in seen:
                diagnostics.append(
                    Diagnostic("warning", f"duplicate grasp line {key}", image_id=image_id)
                )
            seen.add(key)
    return diagnostics


def grasp_file_content(record: ImageRecord) -> str:
    return "".join(format_grasp_line(ann.pose) + "\n" for ann in record.annotations)


def _entry_for(record: ImageRecord) -> dict:
    content = grasp_file_content(record).encode()
    original = sum(1 for a in record.annotations if a.source is AnnotationSource.ORIGINAL)
    pseudo = len(record.annotations) - original
    return {
        "image_id": record.image_id,
        "grasps_original": original,
        "grasps_pseudo": pseudo,
        "file_hash": hashlib.sha256(content).hexdigest(),
    }


def version_manifest(version: DatasetVersion) -> dict:
    """Deterministic manifest: entries sorted by image id, digest over them."""
    entries = [_entry_for(version.records[k]) for k in sorted(version.records)]
    canonical = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode()
    return {
        "version_id": version.version_id,
        "parent": version.parent,
        "entries": entries,
        "digest": hashlib.sha256(canonical).hexdigest(),
    }


def write_dataset(version: DatasetVersion, out: Path | str) -> str:
    """Materialize a version as scene files plus manifest; returns the digest.

    Images are copied when the record references one; pixel-less records get
    their dimensions persisted in a geometry sidecar instead.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        sidecar_dims: dict[str, list[int]] = {}
        for image_id in sorted(version.records):
            record = version.records[image_id]
            (out / f"{image_id}_grasps.txt").write_text(grasp_file_content(record))
            if record.rgb_path is not None and Path(record.rgb_path).is_file():
                target = out / f"{image_id}_RGB.png"
                if Path(record.rgb_path).resolve() != target.resolve():
                    shutil.copy2(record.rgb_path, target)
            else:
                sidecar_dims[image_id] = [record.width, record.height]
        if sidecar_dims:
            (out / GEOMETRY_SIDECAR).write_text(json.dumps(sidecar_dims, sort_keys=True, indent=1))
        manifest = version_manifest(version)
        (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1) + "\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {out}: {exc}") from exc
    return manifest["digest"]


def load_manifest(path: Path | str) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DatasetIOError(f"cannot read manifest {path}: {exc}") from exc
