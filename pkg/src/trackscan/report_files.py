"""Saving and loading JSON documents: manifests and inspection reports."""

import importlib.metadata
import json
import logging
from pathlib import Path
from typing import TypeVar

from packaging.version import Version
from pydantic import BaseModel, ValidationError

from trackscan.components import parse_component_label
from trackscan.inspection import (
    DefectBlob,
    Direction,
    InspectionReport,
    PipelineConfig,
    StepRecord,
    StepStatus,
    Verdict,
)
from trackscan.report_models import Blob, DatasetManifest, GroundTruthManifest, Report, Step
from trackscan.scene import Footprint

try:
    metadata = importlib.metadata.metadata("trackscan")
    NAME = metadata["name"]
    VERSION = metadata["version"]
except importlib.metadata.PackageNotFoundError:
    # running from a source checkout
    NAME = "trackscan"
    VERSION = "1.0.0"

logger = logging.getLogger(__name__)

DocumentT = TypeVar("DocumentT", bound=BaseModel)


class DocumentError(ValueError):
    """Document cannot be loaded."""


def save_document(document: BaseModel, path: Path) -> None:
    # make sure serialization works before opening the file
    text = json.dumps(document.model_dump(mode="json", by_alias=True), indent=4)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    logger.debug("Wrote %s", path)


def load_document(path: Path, model: type[DocumentT]) -> DocumentT:
    """Load a JSON document written by this application.

    Raises:
        DocumentError: if the file is unreadable, written by another
            application or by a newer major version, or invalid.
    """
    try:
        with open(path, encoding="utf-8") as f:
            jsondict = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DocumentError(f"Cannot read {path}") from exc
    if jsondict.get("application") != NAME:
        raise DocumentError(f"{path} was not written by {NAME}")
    file_version = Version(jsondict.get("version", "0"))
    if file_version.major > Version(VERSION).major:
        raise DocumentError(
            f"{path} was written by {NAME} {file_version}, this is {VERSION}"
        )
    try:
        return model.model_validate(jsondict)
    except ValidationError as exc:
        raise DocumentError(f"Invalid document {path}") from exc


def load_ground_truth(path: Path) -> GroundTruthManifest:
    return load_document(path, GroundTruthManifest)


def load_dataset_manifest(path: Path) -> DatasetManifest:
    return load_document(path, DatasetManifest)


def save_blob(blob: DefectBlob) -> Blob:
    box = blob.bounding_box
    return Blob(
        bounding_box=(box.x0, box.y0, box.x1, box.y1),
        area=blob.area,
        centroid=blob.centroid,
        direction=blob.direction.value,
        label=blob.mapped.label if blob.mapped is not None else None,
    )


def load_blob(model: Blob) -> DefectBlob:
    return DefectBlob(
        bounding_box=Footprint(*model.bounding_box),
        area=model.area,
        centroid=tuple(model.centroid),
        direction=Direction(model.direction),
        mapped=parse_component_label(model.label) if model.label is not None else None,
    )


def save_report_to_model(report: InspectionReport) -> Report:
    return Report(
        application=NAME,
        version=VERSION,
        control_name=report.control_name,
        variable_name=report.variable_name,
        verdict=report.verdict.value if report.verdict is not None else None,
        offset=report.offset,
        defect_labels=report.sorted_labels,
        blobs=[save_blob(b) for b in report.blobs],
        unmapped=[save_blob(b) for b in report.unmapped],
        step_log=[
            Step(name=s.name, status=s.status.value, detail=s.detail)
            for s in report.step_log
        ],
        config=report.config.model_dump(),
    )


def load_report_from_model(model: Report) -> InspectionReport:
    return InspectionReport(
        control_name=model.control_name,
        variable_name=model.variable_name,
        verdict=Verdict(model.verdict) if model.verdict is not None else None,
        blobs=[load_blob(b) for b in model.blobs],
        defect_labels=frozenset(model.defect_labels),
        offset=tuple(model.offset),
        step_log=[
            StepRecord(name=s.name, status=StepStatus(s.status), detail=s.detail)
            for s in model.step_log
        ],
        unmapped=[load_blob(b) for b in model.unmapped],
        config=PipelineConfig.model_validate(model.config),
    )


def save_report(report: InspectionReport, path: Path) -> None:
    save_document(save_report_to_model(report), path)


def load_report(path: Path) -> InspectionReport:
    return load_report_from_model(load_document(path, Report))
