"""Image sets for the experiments.

The inspection experiment is a directory of frames named after their
footage id plus a ground-truth manifest. The classifier dataset is a
train/valid/test tree of safe and defective track images. Iterators feed
batches of either kind of data to the classifier.
"""

import logging
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from trackscan.components import (
    ComponentKind,
    DefectSet,
    FootageId,
    Medium,
    component_inventory,
    format_footage_name,
    get_test_case,
)
from trackscan.images import read_image, resize, write_image
from trackscan.report_files import NAME, VERSION, save_document
from trackscan.report_models import (
    DatasetEntry,
    DatasetManifest,
    FrameEntry,
    GroundTruthManifest,
)
from trackscan.scene import (
    SceneConfig,
    derive_seed,
    image_checksum,
    render_track,
    standard_geometry,
)

logger = logging.getLogger(__name__)

GROUND_TRUTH_FILE = "ground_truth.json"
DATASET_FILE = "dataset.json"
SPLITS = ("train", "valid", "test")
# class index 0 is safe, 1 is defective
CLASSES = ("safe", "defective")
SAFE, DEFECTIVE = 0, 1


class DatasetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    defect_kinds: list[ComponentKind] = list(ComponentKind)
    train_count: int = Field(400, gt=0)
    valid_count: int = Field(200, gt=0)
    test_count: int = Field(200, gt=0)
    class_balance: float = Field(0.5, ge=0.0, le=1.0)
    image_size: int = Field(64, gt=0)
    seed: int = Field(0, ge=0, lt=2**63)

    @field_validator("defect_kinds")
    @classmethod
    def kinds_not_empty(cls, value: list[ComponentKind]) -> list[ComponentKind]:
        if not value:
            raise ValueError("At least one defect kind is required")
        return sorted(set(value), key=list(ComponentKind).index)

    def counts(self) -> dict[str, int]:
        return dict(zip(SPLITS, (self.train_count, self.valid_count, self.test_count)))


class AugmentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    flip_probability: float = Field(0.5, ge=0.0, le=1.0)
    # fractions of the image width/height and of the 8-bit range
    max_shift_fraction: float = Field(0.05, ge=0.0, le=0.1)
    brightness_fraction: float = Field(0.05, ge=0.0, le=0.1)


def generate_experiment(
    out_dir: Path,
    cases: Iterable[int],
    trials: Iterable[int],
    config: SceneConfig,
    progress: bool = False,
) -> GroundTruthManifest:
    """Render one frame per (case, trial) and write a ground-truth manifest.

    Frames are named after their footage id (e.g. 01_F_T1.png). Each trial
    uses a seed derived from (master_seed, case, trial) so that trials of a
    case differ by jitter and noise only.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geometry = standard_geometry(config)

    jobs = [(case, trial) for case in sorted(set(cases)) for trial in sorted(set(trials))]
    ground_truth = {}
    frames = {}
    for case, trial in tqdm(jobs, desc="Rendering frames", disable=not progress):
        footage = FootageId(case, Medium.FRAME, trial)
        defects = get_test_case(case).defects
        seed = derive_seed(config.master_seed, case, trial)
        scene = render_track(geometry, defects, seed, config)
        write_image(out_dir / format_footage_name(footage, ".png"), scene.image)
        ground_truth[footage.name] = defects.labels
        frames[footage.name] = FrameEntry(
            labels=defects.labels,
            trial_seed=seed,
            checksum=image_checksum(scene.image),
            jitter=scene.applied_jitter,
        )

    manifest = GroundTruthManifest(
        application=NAME,
        version=VERSION,
        master_seed=config.master_seed,
        ground_truth=ground_truth,
        frames=frames,
    )
    save_document(manifest, out_dir / GROUND_TRUTH_FILE)
    logger.info("Wrote %d frames to %s", len(frames), out_dir)
    return manifest


def random_defects(
    rng: np.random.Generator, kinds: list[ComponentKind]
) -> DefectSet:
    """Pick one or two missing components of the allowed kinds."""
    candidates = [id for id in component_inventory() if id.kind in kinds]
    count = min(int(rng.integers(1, 3)), len(candidates))
    chosen = rng.choice(len(candidates), size=count, replace=False)
    return DefectSet(frozenset(candidates[i] for i in sorted(chosen)))


def build_cnn_dataset(
    out_dir: Path,
    spec: DatasetSpec,
    scene_config: SceneConfig | None = None,
    progress: bool = False,
) -> DatasetManifest:
    """Build the {train,valid,test}/{safe,defective} image tree.

    Defective images miss one or two random components of the allowed
    kinds. Images are rendered at full size, then resized to
    spec.image_size. The tree is a deterministic function of spec.seed.
    """
    out_dir = Path(out_dir)
    scene_config = scene_config or SceneConfig()
    geometry = standard_geometry(scene_config)
    size = (spec.image_size, spec.image_size)

    jobs = []
    for split_index, (split, count) in enumerate(spec.counts().items()):
        num_safe = int(round(count * spec.class_balance))
        for class_index, num in ((SAFE, num_safe), (DEFECTIVE, count - num_safe)):
            directory = out_dir / split / CLASSES[class_index]
            directory.mkdir(parents=True, exist_ok=True)
            jobs.extend((split_index, class_index, i) for i in range(num))

    images = {}
    for split_index, class_index, i in tqdm(jobs, desc="Rendering dataset", disable=not progress):
        seed = derive_seed(spec.seed, split_index, class_index, i)
        if class_index == DEFECTIVE:
            defects = random_defects(np.random.default_rng(seed), spec.defect_kinds)
        else:
            defects = DefectSet()
        scene = render_track(geometry, defects, seed, scene_config)
        relpath = f"{SPLITS[split_index]}/{CLASSES[class_index]}/{i:04d}.png"
        write_image(out_dir / relpath, resize(scene.image, size))
        images[relpath] = DatasetEntry(category=CLASSES[class_index], labels=defects.labels)

    manifest = DatasetManifest(
        application=NAME,
        version=VERSION,
        seed=spec.seed,
        image_size=spec.image_size,
        defect_kinds=[kind.name.lower() for kind in spec.defect_kinds],
        images=images,
    )
    save_document(manifest, out_dir / DATASET_FILE)
    logger.info("Wrote %d dataset images to %s", len(images), out_dir)
    return manifest


def flip_horizontal(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1].copy()


def shift_image(image: np.ndarray, dx: int, dy: int, fill: int = 0) -> np.ndarray:
    """Translate an image by (dx, dy), filling uncovered pixels."""
    height, width = image.shape[:2]
    shifted = np.full_like(image, fill)
    if abs(dx) >= width or abs(dy) >= height:
        return shifted
    shifted[max(0, dy) : height + min(0, dy), max(0, dx) : width + min(0, dx)] = image[
        max(0, -dy) : height + min(0, -dy), max(0, -dx) : width + min(0, -dx)
    ]
    return shifted


def augment(image: np.ndarray, config: AugmentConfig, seed: int) -> np.ndarray:
    """Randomly flip, translate and brighten an 8-bit image.

    The result is a deterministic function of the seed and has the same
    dimensions as the input.
    """
    rng = np.random.default_rng(seed)
    height, width = image.shape[:2]
    flip = rng.random() < config.flip_probability
    max_dx = int(config.max_shift_fraction * width)
    max_dy = int(config.max_shift_fraction * height)
    dx = int(rng.integers(-max_dx, max_dx + 1))
    dy = int(rng.integers(-max_dy, max_dy + 1))
    delta = rng.uniform(-1.0, 1.0) * config.brightness_fraction * 255

    result = flip_horizontal(image) if flip else image
    result = shift_image(result, dx, dy)
    if delta:
        result = np.clip(np.rint(result.astype(np.float64) + delta), 0, 255)
    return result.astype(np.uint8)


def one_hot(labels: np.ndarray, num_classes: int = len(CLASSES)) -> np.ndarray:
    return np.eye(num_classes)[np.asarray(labels, dtype=int)]


class ArrayIterator:
    """Endless batches of (images, one-hot labels) from in-memory arrays.

    Images are 8-bit arrays of shape (N, H, W) or (N, H, W, 1) and are fed
    as floats in [0, 1] with a channel axis. The data wraps around
    cyclically, so every batch has exactly batch_size images. With shuffle
    enabled, each pass over the data uses a fresh permutation derived from
    the seed and the pass number.
    """

    def __init__(
        self,
        images: np.ndarray,
        labels: np.ndarray,
        batch_size: int,
        shuffle: bool = True,
        seed: int = 0,
        augment_config: AugmentConfig | None = None,
    ) -> None:
        if len(images) == 0:
            raise ValueError("No images to iterate over")
        if len(images) != len(labels):
            raise ValueError("Number of images and labels differ")
        if batch_size < 1:
            raise ValueError("Batch size must be at least 1")
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[..., np.newaxis]
        self.images = images
        self.labels = np.asarray(labels, dtype=int)
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.augment_config = augment_config
        self.reset()

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def reset(self) -> None:
        """Start again from the first batch of the first pass."""
        self._pass = 0
        self._position = 0
        self._order = self._pass_order(0)

    def _pass_order(self, pass_number: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.images))
        rng = np.random.default_rng(derive_seed(self.seed, pass_number))
        return rng.permutation(len(self.images))

    def _sample(self, index: int, pass_number: int) -> np.ndarray:
        image = self.images[index]
        if self.augment_config is not None:
            seed = derive_seed(self.seed, pass_number, index, 1)
            image = augment(image[..., 0], self.augment_config, seed)[..., np.newaxis]
        return image.astype(np.float64) / 255.0

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return self

    def __next__(self) -> tuple[np.ndarray, np.ndarray]:
        images = []
        labels = []
        while len(images) < self.batch_size:
            if self._position == len(self._order):
                self._pass += 1
                self._position = 0
                self._order = self._pass_order(self._pass)
            index = self._order[self._position]
            images.append(self._sample(index, self._pass))
            labels.append(self.labels[index])
            self._position += 1
        return np.stack(images), one_hot(labels)

    def iterate_once(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """One pass over all images in order, without augmentation.

        The last batch may be smaller than batch_size.
        """
        for start in range(0, len(self.images), self.batch_size):
            stop = start + self.batch_size
            images = self.images[start:stop].astype(np.float64) / 255.0
            yield images, one_hot(self.labels[start:stop])


class DirectoryIterator(ArrayIterator):
    """Batches from a split directory with 'safe' and 'defective' subfolders."""

    def __init__(
        self,
        split_dir: Path,
        batch_size: int,
        shuffle: bool = True,
        seed: int = 0,
        augment_config: AugmentConfig | None = None,
    ) -> None:
        split_dir = Path(split_dir)
        self.paths = []
        labels = []
        for class_index, name in enumerate(CLASSES):
            for path in sorted((split_dir / name).glob("*.png")):
                self.paths.append(path)
                labels.append(class_index)
        if not self.paths:
            raise ValueError(f"No images found in {split_dir}")
        images = np.stack([read_image(path) for path in self.paths])
        logger.debug("Loaded %d images from %s", len(images), split_dir)
        super().__init__(images, np.array(labels), batch_size, shuffle, seed, augment_config)
