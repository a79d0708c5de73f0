"""Binary model files.

Layout, all little-endian:

    header      magic b"RCNN", u16 version, u8 precision, u8 reserved,
                u32 height, u32 width, u32 channels, u64 seed, u32 layer count
    layer table per layer: u8 kind, u8 frozen, u16 reserved, u32 a, u32 b,
                f64 rate
    payload     per layer with parameters, per parameter in declaration
                order: u8 ndim, u32 dims, then the raw values
"""

import logging
import math
import struct
from pathlib import Path

import numpy as np

from trackscan.layers import (
    Conv2D,
    Dense,
    Layer,
    LayerKind,
    Precision,
    ShapeError,
    layer_from_spec,
)
from trackscan.network import Model

logger = logging.getLogger(__name__)

MAGIC = b"RCNN"
FORMAT_VERSION = 1
MAX_PARAMETER_SIZE = 2**28
MAX_DIMENSION = 4096

_HEADER = struct.Struct("<4sHBBIIIQI")
_LAYER = struct.Struct("<BBHIId")
_PRECISION_CODES = {Precision.SINGLE: 0, Precision.DOUBLE: 1}


class ModelFileError(ValueError):
    """Model file is corrupt or incompatible."""


def model_to_bytes(model: Model) -> bytes:
    height, width, channels = model.input_shape
    parts = [
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            _PRECISION_CODES[model.precision],
            0,
            height,
            width,
            channels,
            model.seed,
            len(model.layers),
        )
    ]
    for layer in model.layers:
        a, b, rate = layer.spec()
        parts.append(_LAYER.pack(layer.kind, layer.frozen, 0, a, b, rate))
    dtype = model.precision.dtype.newbyteorder("<")
    for layer in model.layers:
        for name in layer.param_names:
            values = layer.params[name]
            parts.append(struct.pack(f"<B{values.ndim}I", values.ndim, *values.shape))
            parts.append(np.ascontiguousarray(values, dtype=dtype).tobytes())
    return b"".join(parts)


def save_model(model: Model, path: Path) -> None:
    data = model_to_bytes(model)
    with open(path, "wb") as f:
        f.write(data)
    logger.info("Saved model to %s", path)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.position = 0

    def read(self, size: int) -> bytes:
        if self.position + size > len(self.data):
            raise ModelFileError("Model file is truncated")
        chunk = self.data[self.position : self.position + size]
        self.position += size
        return chunk

    def unpack(self, fmt: struct.Struct | str) -> tuple:
        if isinstance(fmt, str):
            fmt = struct.Struct(fmt)
        return fmt.unpack(self.read(fmt.size))


def check_dimensions(layers: list[Layer], input_shape: tuple[int, int, int]) -> None:
    """Bound the sizes a model file asks for before anything is allocated.

    Raises:
        ModelFileError: if a dimension, an activation or a parameter array
            is larger than the limits.
    """
    settings = [value for layer in layers for value in layer.spec()[:2]]
    if any(not 1 <= value <= MAX_DIMENSION for value in input_shape) or any(
        value > MAX_DIMENSION for value in settings
    ):
        raise ModelFileError(
            f"Model file dimension overflow: input {input_shape}, "
            f"layer settings up to {max(settings, default=0)}"
        )
    shape = tuple(input_shape)
    if math.prod(shape) > MAX_PARAMETER_SIZE:
        raise ModelFileError(f"Model file dimension overflow: input {shape}")
    for layer in layers:
        if isinstance(layer, Conv2D):
            count = layer.kernel_size**2 * shape[-1] * layer.filters
        elif isinstance(layer, Dense):
            count = math.prod(shape) * layer.units
        else:
            count = 0
        try:
            shape = layer.output_shape(shape)
        except ShapeError as exc:
            raise ModelFileError(f"Invalid architecture in model file: {exc}") from exc
        if count > MAX_PARAMETER_SIZE or math.prod(shape) > MAX_PARAMETER_SIZE:
            raise ModelFileError(f"Model file dimension overflow in {layer!r}")


def model_from_bytes(data: bytes) -> Model:
    """Rebuild a model from the contents of a model file.

    Raises:
        ModelFileError: on a bad magic number, an unsupported version, a
            truncated file, oversized dimensions or parameter dimensions
            that do not fit the architecture.
    """
    reader = _Reader(data)
    if reader.read(len(MAGIC)) != MAGIC:
        raise ModelFileError("Not a model file (bad magic number)")
    reader.position = 0
    (_, version, precision_code, _, height, width, channels, seed, num_layers) = (
        reader.unpack(_HEADER)
    )
    if version != FORMAT_VERSION:
        raise ModelFileError(f"Unsupported model file version {version}")
    precisions = {code: p for p, code in _PRECISION_CODES.items()}
    if precision_code not in precisions:
        raise ModelFileError(f"Unknown precision code {precision_code}")
    precision = precisions[precision_code]

    layers = []
    frozen = []
    for _ in range(num_layers):
        kind, is_frozen, _, a, b, rate = reader.unpack(_LAYER)
        try:
            layers.append(layer_from_spec(LayerKind(kind), a, b, rate))
        except ValueError as exc:
            raise ModelFileError(f"Invalid layer in model file: {exc}") from exc
        frozen.append(bool(is_frozen))
    check_dimensions(layers, (height, width, channels))
    try:
        model = Model(layers, (height, width, channels), seed=seed, precision=precision)
    except (ShapeError, ValueError) as exc:
        raise ModelFileError(f"Invalid architecture in model file: {exc}") from exc

    dtype = precision.dtype.newbyteorder("<")
    for layer, is_frozen in zip(model.layers, frozen):
        layer.frozen = is_frozen
        for name in layer.param_names:
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I")
            size = int(np.prod(shape, dtype=np.uint64))
            if size > MAX_PARAMETER_SIZE or shape != layer.params[name].shape:
                raise ModelFileError(
                    f"Parameter {name} has dimensions {shape}, expected "
                    f"{layer.params[name].shape}"
                )
            values = np.frombuffer(reader.read(size * dtype.itemsize), dtype=dtype)
            layer.params[name] = values.reshape(shape).astype(precision.dtype)
    if reader.position != len(data):
        raise ModelFileError("Trailing data after the model parameters")
    return model


def load_model(path: Path) -> Model:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise ModelFileError(f"Cannot read model file {path}") from exc
    model = model_from_bytes(data)
    logger.debug("Loaded %r from %s", model, path)
    return model
