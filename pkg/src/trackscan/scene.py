"""Procedural renderer of the simulated track.

A standard track is nine ties (blocks) across two rails. Every rail-tie
crossing has a washer and a screw on the outer side of the rail and both
rails end in a connector. Missing components are simply not drawn, so
their footprint shows gravel background. Trials differ by a global
translation, a brightness shift and fresh noise only.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import xxhash
from pydantic import BaseModel, ConfigDict, Field

from trackscan.components import (
    NUM_TIES,
    ComponentId,
    ComponentKind,
    DefectSet,
    component_inventory,
)

logger = logging.getLogger(__name__)

# pixels between a rail and the fasteners or connectors next to it
FASTENER_GAP = 2
# pixels between washer and screw
WASHER_SCREW_GAP = 3
# overhang of the rails beyond the outer ties
RAIL_OVERHANG = 10


class GeometryError(ValueError):
    """Track geometry does not fit the image."""


class SceneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width: int = Field(320, gt=0)
    height: int = Field(240, gt=0)
    rail_thickness: int = Field(8, gt=0)
    rail_gap: int = Field(72, gt=0)
    tie_width: int = Field(12, gt=0)
    tie_spacing: int = Field(30, gt=0)
    screw_radius: int = Field(3, ge=1)
    washer_outer_radius: int = Field(5, ge=1)
    connector_size: int = Field(12, ge=2)

    background_level: int = Field(60, ge=0, le=255)
    rail_level: int = Field(200, ge=0, le=255)
    block_level: int = Field(140, ge=0, le=255)
    screw_level: int = Field(230, ge=0, le=255)
    washer_level: int = Field(180, ge=0, le=255)
    connector_level: int = Field(210, ge=0, le=255)

    background_noise_sigma: float = Field(4.0, ge=0)
    jitter_translation_max: int = Field(3, ge=0)
    jitter_brightness_max: int = Field(10, ge=0)
    master_seed: int = Field(0, ge=0, lt=2**63)

    def level(self, kind: ComponentKind) -> int:
        """Gray level of a component kind."""
        return {
            ComponentKind.SCREW: self.screw_level,
            ComponentKind.WASHER: self.washer_level,
            ComponentKind.BLOCK: self.block_level,
            ComponentKind.CONNECTOR: self.connector_level,
        }[kind]


@dataclass(frozen=True)
class Footprint:
    """Axis-aligned pixel rectangle, half-open: [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1 - 1) / 2, (self.y0 + self.y1 - 1) / 2)

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def shifted(self, dx: int, dy: int) -> "Footprint":
        return Footprint(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def slices(self, dx: int = 0, dy: int = 0) -> tuple[slice, slice]:
        """Array index (rows, columns) of the footprint, optionally shifted."""
        return (
            slice(self.y0 + dy, self.y1 + dy),
            slice(self.x0 + dx, self.x1 + dx),
        )

    def overlaps(self, other: "Footprint") -> bool:
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.y0 < other.y1
            and other.y0 < self.y1
        )

    def inside(self, width: int, height: int, margin: int = 0) -> bool:
        return (
            self.x0 - margin >= 0
            and self.y0 - margin >= 0
            and self.x1 + margin <= width
            and self.y1 + margin <= height
        )


@dataclass(frozen=True)
class TrackGeometry:
    """Footprints of all 49 components and of both rails, in reference
    coordinates."""

    width: int
    height: int
    footprints: dict[ComponentId, Footprint]
    rails: tuple[Footprint, Footprint]

    def footprint(self, id: ComponentId) -> Footprint:
        return self.footprints[id]

    def centers(self) -> dict[ComponentId, tuple[float, float]]:
        return {id: fp.center for id, fp in self.footprints.items()}

    def overlapping_footprints(self) -> list[tuple[ComponentId, ComponentId]]:
        """Return all pairs of components whose footprints overlap."""
        ids = sorted(self.footprints)
        return [
            (a, b)
            for i, a in enumerate(ids)
            for b in ids[i + 1 :]
            if self.footprints[a].overlaps(self.footprints[b])
        ]


def standard_geometry(config: SceneConfig) -> TrackGeometry:
    """Lay out the standard 9-tie, 2-rail track.

    Ties are evenly spaced around the image center, tie 5 in the middle.
    Blocks span the space between the rails. Washer and screw sit on the
    outer side of each rail at every tie. Connectors extend the rails at
    both ends.

    Raises:
        GeometryError: if the track, including the trial jitter, does not
            fit the image.
    """
    mid_x = config.width // 2
    mid_y = config.height // 2
    half_gap = config.rail_gap // 2

    def tie_x0(tie: int) -> int:
        center_tie = (NUM_TIES + 1) // 2
        return mid_x - config.tie_width // 2 + (tie - center_tie) * config.tie_spacing

    rail_x0 = tie_x0(1) - RAIL_OVERHANG
    rail_x1 = tie_x0(NUM_TIES) + config.tie_width + RAIL_OVERHANG
    rails = (
        Footprint(rail_x0, mid_y - half_gap - config.rail_thickness, rail_x1, mid_y - half_gap),
        Footprint(rail_x0, mid_y + half_gap, rail_x1, mid_y + half_gap + config.rail_thickness),
    )

    washer_r = config.washer_outer_radius
    screw_r = config.screw_radius
    fastener_y = {
        1: rails[0].y0 - FASTENER_GAP - washer_r - 1,
        2: rails[1].y1 + FASTENER_GAP + washer_r,
    }

    def disc(cx: int, cy: int, r: int) -> Footprint:
        return Footprint(cx - r, cy - r, cx + r + 1, cy + r + 1)

    footprints = {}
    for id in component_inventory():
        if id.kind is ComponentKind.BLOCK:
            x0 = tie_x0(id.tie)
            fp = Footprint(x0, rails[0].y1, x0 + config.tie_width, rails[1].y0)
        elif id.kind is ComponentKind.WASHER:
            fp = disc(tie_x0(id.tie), fastener_y[id.rail], washer_r)
        elif id.kind is ComponentKind.SCREW:
            cx = tie_x0(id.tie) + washer_r + WASHER_SCREW_GAP + screw_r
            fp = disc(cx, fastener_y[id.rail], screw_r)
        else:
            rail = rails[id.rail - 1]
            size = config.connector_size
            cy = rail.y0 + config.rail_thickness // 2
            if id.tie == 1:
                x0 = rail.x0 - FASTENER_GAP - size
            else:
                x0 = rail.x1 + FASTENER_GAP
            fp = Footprint(x0, cy - size // 2, x0 + size, cy - size // 2 + size)
        footprints[id] = fp

    margin = config.jitter_translation_max
    for name, fp in list(footprints.items()) + [("rail", r) for r in rails]:
        if not fp.inside(config.width, config.height, margin):
            raise GeometryError(
                f"Footprint of {name} {fp} does not fit a "
                f"{config.width}x{config.height} image with jitter {margin}"
            )
    return TrackGeometry(
        width=config.width, height=config.height, footprints=footprints, rails=rails
    )


def is_disc(kind: ComponentKind) -> bool:
    return kind in (ComponentKind.SCREW, ComponentKind.WASHER)


def shape_mask(kind: ComponentKind, footprint: Footprint) -> np.ndarray:
    """Boolean mask of the drawn shape within its footprint."""
    height = footprint.y1 - footprint.y0
    width = footprint.x1 - footprint.x0
    if not is_disc(kind):
        return np.ones((height, width), dtype=bool)
    r = (width - 1) // 2
    yy, xx = np.ogrid[-r : r + 1, -r : r + 1]
    return xx**2 + yy**2 <= r**2


@dataclass(frozen=True)
class RenderedScene:
    image: np.ndarray
    geometry: TrackGeometry
    ground_truth: DefectSet
    trial_seed: int
    # dx, dy, brightness_delta
    applied_jitter: tuple[int, int, int] = field(default=(0, 0, 0))

    def footprint_pixels(self, id: ComponentId) -> np.ndarray:
        """Pixels of a component footprint in the rendered image."""
        dx, dy, _ = self.applied_jitter
        return self.image[self.geometry.footprint(id).slices(dx, dy)]

    def background_mask(self) -> np.ndarray:
        """Pixels outside every footprint and rail of the rendered image."""
        dx, dy, _ = self.applied_jitter
        mask = np.ones(self.image.shape, dtype=bool)
        for fp in list(self.geometry.footprints.values()) + list(self.geometry.rails):
            mask[fp.slices(dx, dy)] = False
        return mask


def render_track(
    geometry: TrackGeometry,
    defects: DefectSet,
    trial_seed: int,
    config: SceneConfig,
) -> RenderedScene:
    """Render a track with the given components missing.

    The result is a deterministic function of the arguments.

    Args:
        geometry (TrackGeometry): the track layout.
        defects (DefectSet): components that are not drawn.
        trial_seed (int): seed for jitter and noise.
        config (SceneConfig): gray levels, noise and jitter settings.

    Returns:
        RenderedScene: the 8-bit grayscale image with its ground truth.
    """
    unknown = set(defects.missing) - set(geometry.footprints)
    if unknown:
        raise GeometryError(f"Defects not in the track inventory: {unknown}")

    rng = np.random.default_rng(trial_seed)
    jitter = config.jitter_translation_max
    dx, dy = (int(v) for v in rng.integers(-jitter, jitter + 1, size=2))
    brightness = int(
        rng.integers(-config.jitter_brightness_max, config.jitter_brightness_max + 1)
    )

    canvas = np.full(
        (geometry.height, geometry.width), config.background_level, dtype=np.float64
    )
    for rail in geometry.rails:
        canvas[rail.slices(dx, dy)] = config.rail_level
    for id, fp in geometry.footprints.items():
        if id in defects:
            continue
        region = canvas[fp.slices(dx, dy)]
        region[shape_mask(id.kind, fp)] = config.level(id.kind)

    canvas += brightness
    canvas += rng.normal(0.0, config.background_noise_sigma, size=canvas.shape)
    image = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    logger.debug(
        "Rendered track with %d missing components, jitter (%d, %d, %d)",
        len(defects),
        dx,
        dy,
        brightness,
    )
    return RenderedScene(
        image=image,
        geometry=geometry,
        ground_truth=defects,
        trial_seed=trial_seed,
        applied_jitter=(dx, dy, brightness),
    )


def derive_seed(master_seed: int, *keys: int) -> int:
    """Derive a 64-bit seed from a master seed and integer keys.

    The seed is the xxHash of the packed values, so it does not depend on
    the order in which scenes are generated.
    """
    values = np.array([master_seed, *keys], dtype=np.uint64)
    return xxhash.xxh3_64(values.tobytes()).intdigest()


def image_checksum(image: np.ndarray) -> str:
    """Return a hex xxHash of the image pixels and shape."""
    hasher = xxhash.xxh3_64()
    hasher.update(np.array(image.shape, dtype=np.int64).tobytes())
    hasher.update(np.ascontiguousarray(image).tobytes())
    return hasher.hexdigest()
