"""Reading, writing and converting 8-bit images."""

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

logger = logging.getLogger(__name__)


class ImageFileError(OSError):
    """Image file cannot be read."""


def read_image(path: Path | str) -> np.ndarray:
    """Read an image file as an 8-bit array.

    Grayscale images give a (height, width) array, color images a (height,
    width, 3) array. Alpha channels are dropped.

    Raises:
        ImageFileError: if the file is missing or not an image.
    """
    try:
        with Image.open(path) as image:
            if image.mode not in ("L", "RGB"):
                image = image.convert("RGB")
            return np.asarray(image, dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageFileError(f"Cannot read image {path}") from exc


def write_image(path: Path | str, image: np.ndarray) -> None:
    """Write an 8-bit grayscale or RGB array as PNG."""
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(
        path, format="PNG"
    )
    logger.debug("Wrote image %s", path)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Convert an RGB image to 8-bit luminance; grayscale passes through."""
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return np.asarray(Image.fromarray(image.astype(np.uint8)).convert("L"))
    raise ValueError(f"Unsupported image shape {image.shape}")


def to_rgb(image: np.ndarray) -> np.ndarray:
    """Promote a grayscale image to RGB by repeating the channel."""
    if image.ndim == 3:
        return image.copy()
    return np.repeat(image[:, :, np.newaxis], 3, axis=2)


def resize(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize a grayscale image to (width, height) using area averaging."""
    return np.asarray(
        Image.fromarray(image).resize(size, resample=Image.Resampling.BOX)
    )
