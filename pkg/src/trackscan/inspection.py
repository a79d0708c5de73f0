"""Reference-comparison inspection pipeline.

A control image of a track in a state of good repair is compared with a
variable image of the track under inspection. Both images are cleaned up
and contrast-stretched, the variable image is registered onto the control
image, and the signed difference is segmented into blobs. Blobs are mapped
onto the nearest track component to produce the list of missing
components and the final verdict.
"""

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from trackscan.components import ComponentId, DefectSet
from trackscan.images import to_grayscale, to_rgb
from trackscan.scene import Footprint, TrackGeometry

logger = logging.getLogger(__name__)

STEPS = (
    "acquire",
    "preprocess",
    "extract_features",
    "detect_segment",
    "present_visual",
    "final_decision",
)
SAFE_TEXT = "TRACK IS SAFE"
NOT_SAFE_TEXT = "DANGER: ***TRACK IS NOT SAFE!***"
RED = (255, 0, 0)


class InspectionError(ValueError):
    """Error while inspecting a pair of images."""


class Verdict(enum.Enum):
    SAFE = "Safe"
    NOT_SAFE = "NotSafe"


class Direction(enum.Enum):
    # bright in the control image, dark in the variable image
    MISSING_IN_TEST = "MissingInTest"
    EXTRA_IN_TEST = "ExtraInTest"


class StepStatus(enum.Enum):
    OK = "ok"
    FAILED = "failed"


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    diff_threshold: int = Field(10, ge=1, le=254)
    min_blob_area: int = Field(12, ge=1)
    registration_window: int = Field(8, ge=0)
    median_radius: int = Field(1, ge=0)
    morph_open_radius: int = Field(1, ge=0)
    max_mapping_distance: float = Field(15.0, gt=0)


@dataclass(frozen=True)
class DefectBlob:
    bounding_box: Footprint
    area: int
    centroid: tuple[float, float]
    direction: Direction
    mapped: ComponentId | None = None


@dataclass(frozen=True)
class StepRecord:
    name: str
    status: StepStatus
    detail: str = ""


@dataclass
class InspectionReport:
    control_name: str
    variable_name: str
    verdict: Verdict | None
    blobs: list[DefectBlob] = field(default_factory=list)
    defect_labels: frozenset[str] = frozenset()
    offset: tuple[int, int] = (0, 0)
    step_log: list[StepRecord] = field(default_factory=list)
    # blobs too far from any component; kept for diagnostics only
    unmapped: list[DefectBlob] = field(default_factory=list)
    config: PipelineConfig = field(default_factory=PipelineConfig)

    @property
    def is_complete(self) -> bool:
        return self.verdict is not None

    @property
    def defects(self) -> DefectSet:
        return DefectSet.from_labels(self.defect_labels)

    @property
    def sorted_labels(self) -> list[str]:
        """Defect labels in inventory order."""
        return self.defects.labels

    def steps_complete(self) -> bool:
        """True if every pipeline step ran and succeeded, in order."""
        return [s.name for s in self.step_log] == list(STEPS) and all(
            s.status is StepStatus.OK for s in self.step_log
        )


def preprocess(image: np.ndarray, config: PipelineConfig) -> np.ndarray:
    """Reduce noise and stretch contrast.

    RGB input is first converted to luminance. A median filter of radius
    `config.median_radius` is applied, followed by a linear stretch mapping
    the minimum to 0 and the maximum to 255. Constant images are returned
    unchanged by the stretch.

    Raises:
        InspectionError: if the image is empty.
    """
    if image.size == 0:
        raise InspectionError("Empty image")
    gray = to_grayscale(image)
    if config.median_radius > 0:
        gray = ndimage.median_filter(gray, size=2 * config.median_radius + 1, mode="nearest")
    low, high = int(gray.min()), int(gray.max())
    if low == high:
        return gray.copy()
    stretched = (gray.astype(np.float64) - low) * (255.0 / (high - low))
    return np.rint(stretched).astype(np.uint8)


def _overlap(shape: tuple[int, int], dx: int, dy: int):
    """Index ranges of the overlap of reference and test for an offset.

    Reference pixel (x, y) corresponds to test pixel (x + dx, y + dy).
    """
    height, width = shape
    ref = (
        slice(max(0, -dy), height - max(0, dy)),
        slice(max(0, -dx), width - max(0, dx)),
    )
    test = (
        slice(max(0, dy), height + min(0, dy)),
        slice(max(0, dx), width + min(0, dx)),
    )
    return ref, test


def register(reference: np.ndarray, test: np.ndarray, window: int) -> tuple[int, int]:
    """Find the translation of test with respect to reference.

    Exhaustively searches all integer offsets in [-window, window]^2 for the
    lowest sum of absolute differences over the overlap, normalized by the
    overlap area. Ties go to the smallest |dx| + |dy|, then to the
    lexicographically smallest (dx, dy).

    Returns:
        tuple[int, int]: offset (dx, dy) such that test[y + dy, x + dx]
            matches reference[y, x].
    """
    if reference.shape != test.shape:
        raise InspectionError(
            f"Image dimensions differ: {reference.shape} vs {test.shape}"
        )
    height, width = reference.shape[:2]
    if window < 0:
        raise InspectionError("Registration window must be non-negative")
    if window >= height or window >= width:
        raise InspectionError(
            f"Registration window {window} leaves no overlap for a "
            f"{width}x{height} image"
        )
    ref = reference.astype(np.int32)
    tst = test.astype(np.int32)

    best = None
    for dy in range(-window, window + 1):
        for dx in range(-window, window + 1):
            ref_idx, test_idx = _overlap(ref.shape, dx, dy)
            overlap = ref[ref_idx]
            cost = np.abs(overlap - tst[test_idx]).sum() / overlap.size
            key = (cost, abs(dx) + abs(dy), dx, dy)
            if best is None or key < best:
                best = key
    _, _, dx, dy = best
    logger.debug("Registered with offset (%d, %d), cost %.3f", dx, dy, best[0])
    return dx, dy


def difference_map(
    reference: np.ndarray,
    test: np.ndarray,
    offset: tuple[int, int],
    threshold: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Threshold the signed difference of the aligned images.

    Both masks are expressed in reference coordinates. Pixels outside the
    overlap are False in both masks.

    Returns:
        tuple[np.ndarray, np.ndarray]: (missing_mask, extra_mask) where
            missing means reference - test > threshold and extra means
            test - reference > threshold.
    """
    dx, dy = offset
    missing = np.zeros(reference.shape, dtype=bool)
    extra = np.zeros(reference.shape, dtype=bool)
    ref_idx, test_idx = _overlap(reference.shape, dx, dy)
    diff = reference[ref_idx].astype(np.int16) - test[test_idx].astype(np.int16)
    missing[ref_idx] = diff > threshold
    extra[ref_idx] = -diff > threshold
    return missing, extra


def segment(
    mask: np.ndarray,
    min_area: int,
    open_radius: int,
    direction: Direction = Direction.MISSING_IN_TEST,
) -> list[DefectBlob]:
    """Split a binary mask into blobs.

    The mask is opened with a square structuring element of the given
    radius and labeled with 8-connectivity. Components smaller than
    `min_area` are discarded. Blobs are sorted by area, largest first, ties
    by the top-left corner of the bounding box (row, then column).
    """
    mask = np.asarray(mask, dtype=bool)
    if open_radius > 0:
        structure = np.ones((2 * open_radius + 1, 2 * open_radius + 1), dtype=bool)
        mask = ndimage.binary_opening(mask, structure=structure)
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return []

    ys, xs = np.nonzero(labels)
    which = labels[ys, xs]
    areas = np.bincount(which, minlength=count + 1)
    sum_x = np.bincount(which, weights=xs, minlength=count + 1)
    sum_y = np.bincount(which, weights=ys, minlength=count + 1)

    blobs = []
    for index, (rows, cols) in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[index])
        if area < min_area:
            continue
        blobs.append(
            DefectBlob(
                bounding_box=Footprint(cols.start, rows.start, cols.stop, rows.stop),
                area=area,
                centroid=(sum_x[index] / area, sum_y[index] / area),
                direction=direction,
            )
        )
    blobs.sort(key=lambda b: (-b.area, b.bounding_box.y0, b.bounding_box.x0))
    return blobs


def localize(
    blobs: list[DefectBlob],
    geometry: TrackGeometry,
    max_mapping_distance: float,
) -> list[DefectBlob]:
    """Map each blob onto the component with the nearest footprint center.

    Blobs are in control coordinates, which already accounts for the
    registration offset. Blobs farther than `max_mapping_distance` from
    every footprint center stay unmapped (mapped is None).
    """
    by_id = geometry.centers()
    ids = sorted(by_id)
    centers = np.array([by_id[id] for id in ids])
    mapped = []
    for blob in blobs:
        distances = np.hypot(centers[:, 0] - blob.centroid[0], centers[:, 1] - blob.centroid[1])
        nearest = int(np.argmin(distances))
        if distances[nearest] <= max_mapping_distance:
            mapped.append(replace(blob, mapped=ids[nearest]))
        else:
            mapped.append(replace(blob, mapped=None))
    return mapped


def detect_blobs(
    reference: np.ndarray,
    test: np.ndarray,
    offset: tuple[int, int],
    geometry: TrackGeometry,
    config: PipelineConfig,
) -> list[DefectBlob]:
    """Difference, segment and localize a preprocessed, registered pair."""
    missing, extra = difference_map(reference, test, offset, config.diff_threshold)
    blobs = segment(
        missing, config.min_blob_area, config.morph_open_radius, Direction.MISSING_IN_TEST
    ) + segment(
        extra, config.min_blob_area, config.morph_open_radius, Direction.EXTRA_IN_TEST
    )
    return localize(blobs, geometry, config.max_mapping_distance)


def detect_labels(
    reference: np.ndarray,
    test: np.ndarray,
    offset: tuple[int, int],
    geometry: TrackGeometry,
    config: PipelineConfig,
) -> frozenset[str]:
    """Labels of the components reported missing or changed."""
    blobs = detect_blobs(reference, test, offset, geometry, config)
    return frozenset(b.mapped.label for b in blobs if b.mapped is not None)


def inspect(
    control_image: np.ndarray,
    variable_image: np.ndarray,
    geometry: TrackGeometry,
    config: PipelineConfig,
    control_name: str = "control",
    variable_name: str = "variable",
) -> InspectionReport:
    """Inspect a variable image against a control image.

    Runs preprocess, register, difference_map, segment and localize. The
    verdict is NotSafe if any blob is mapped onto a track component. If a
    stage fails, the report has no verdict and the failing step is recorded
    in the step log.
    """
    step_log = []
    stage = "acquire"
    offset = (0, 0)
    try:
        if control_image.shape[:2] != variable_image.shape[:2]:
            raise InspectionError(
                f"Image dimensions differ: {control_image.shape} vs "
                f"{variable_image.shape}"
            )
        step_log.append(StepRecord(stage, StepStatus.OK, f"{control_name} vs {variable_name}"))

        stage = "preprocess"
        control = preprocess(control_image, config)
        variable = preprocess(variable_image, config)
        step_log.append(StepRecord(stage, StepStatus.OK))

        stage = "extract_features"
        offset = register(control, variable, config.registration_window)
        missing, extra = difference_map(control, variable, offset, config.diff_threshold)
        step_log.append(
            StepRecord(
                stage,
                StepStatus.OK,
                f"offset {offset}, {int(missing.sum())} missing and "
                f"{int(extra.sum())} extra pixels",
            )
        )

        stage = "detect_segment"
        blobs = segment(
            missing, config.min_blob_area, config.morph_open_radius, Direction.MISSING_IN_TEST
        ) + segment(
            extra, config.min_blob_area, config.morph_open_radius, Direction.EXTRA_IN_TEST
        )
        step_log.append(StepRecord(stage, StepStatus.OK, f"{len(blobs)} blobs"))

        stage = "present_visual"
        located = localize(blobs, geometry, config.max_mapping_distance)
        mapped = [b for b in located if b.mapped is not None]
        unmapped = [b for b in located if b.mapped is None]
        labels = frozenset(b.mapped.label for b in mapped)
        step_log.append(
            StepRecord(stage, StepStatus.OK, ", ".join(DefectSet.from_labels(labels).labels))
        )

        stage = "final_decision"
        verdict = Verdict.NOT_SAFE if mapped else Verdict.SAFE
        step_log.append(StepRecord(stage, StepStatus.OK, verdict.value))
    except (InspectionError, ValueError) as exc:
        logger.warning("Inspection of %s failed at %s: %s", variable_name, stage, exc)
        step_log.append(StepRecord(stage, StepStatus.FAILED, str(exc)))
        return InspectionReport(
            control_name=control_name,
            variable_name=variable_name,
            verdict=None,
            offset=offset,
            step_log=step_log,
            config=config,
        )

    if unmapped:
        logger.info("%d blobs in %s not near any component", len(unmapped), variable_name)
    return InspectionReport(
        control_name=control_name,
        variable_name=variable_name,
        verdict=verdict,
        blobs=mapped,
        defect_labels=labels,
        offset=offset,
        step_log=step_log,
        unmapped=unmapped,
        config=config,
    )


def render_overlay(
    control: np.ndarray, variable: np.ndarray, report: InspectionReport
) -> np.ndarray:
    """Draw the blob bounding boxes in red onto the variable image.

    Boxes are shifted from control into variable coordinates using the
    registration offset. Only the outline pixels of each box change.
    """
    if control.shape[:2] != variable.shape[:2]:
        raise InspectionError("Image dimensions differ")
    overlay = to_rgb(to_grayscale(variable))
    height, width = overlay.shape[:2]
    dx, dy = report.offset
    for blob in report.blobs:
        box = blob.bounding_box.shifted(dx, dy)
        x0, x1 = max(box.x0, 0), min(box.x1, width)
        y0, y1 = max(box.y0, 0), min(box.y1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        overlay[y0, x0:x1] = RED
        overlay[y1 - 1, x0:x1] = RED
        overlay[y0:y1, x0] = RED
        overlay[y0:y1, x1 - 1] = RED
    return overlay


def overlay_has_marks(overlay: np.ndarray) -> bool:
    """True if any pixel of the overlay is pure red."""
    return bool(np.all(overlay == RED, axis=-1).any())


def format_text_report(report: InspectionReport, extension: str = ".jpg") -> list[str]:
    """Format the textual inspection result.

    Names without a file extension get `extension` appended.

    Raises:
        InspectionError: if the report has no verdict.
    """
    if report.verdict is None:
        raise InspectionError("Cannot format an incomplete inspection report")

    def with_extension(name: str) -> str:
        return name if "." in name else name + extension

    control = with_extension(report.control_name)
    variable = with_extension(report.variable_name)
    pair = f"{control} vs. {variable}"
    decision = SAFE_TEXT if report.verdict is Verdict.SAFE else NOT_SAFE_TEXT
    return [
        f"Acquiring Image 1 (Control): {control}",
        f"Acquiring Image 2 (Variable): {variable}",
        f"Pre-processing Image 1 (Control): {control}",
        f"Pre-processing Image 2 (Variable): {variable}",
        f"Extract Image Features (Control vs. Variable): {pair}",
        f"Detection/segmentation of POI (Control vs. Variable): {pair}",
        f"Presenting Visual Track Problems (Control vs. Variable): {pair}",
        f">> Prediction of Final Decision: {decision}",
    ]
