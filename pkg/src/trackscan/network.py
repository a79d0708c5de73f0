"""Convolutional safe/defective classifier."""

import copy
import logging
from typing import Iterable

import numpy as np

from trackscan.datasets import CLASSES, DEFECTIVE
from trackscan.layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool,
    NumericalError,
    Precision,
    ReLU,
    ShapeError,
    Softmax,
    check_one_hot,
    cross_entropy,
    softmax_cross_entropy_grad,
)
from trackscan.metrics import ConfusionMatrix

logger = logging.getLogger(__name__)


class Model:
    """An ordered stack of layers ending in a two-class softmax.

    Parameters of layer i are initialized from a generator seeded with
    (seed, i), so they do not depend on the other layers.
    """

    def __init__(
        self,
        layers: list[Layer],
        input_shape: tuple[int, int, int],
        seed: int = 0,
        precision: Precision = Precision.SINGLE,
    ) -> None:
        if not layers or not isinstance(layers[-1], Softmax):
            raise ShapeError("The last layer must be a softmax")
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.precision = precision
        self.shapes = [self.input_shape]
        for layer in layers:
            self.shapes.append(layer.output_shape(self.shapes[-1]))
        if self.shapes[-1] != (len(CLASSES),):
            raise ShapeError(
                f"Model output has shape {self.shapes[-1]}, expected ({len(CLASSES)},)"
            )
        self.initialize(seed)

    def initialize(self, seed: int, indices: Iterable[int] | None = None) -> None:
        """(Re-)initialize the parameters of the given layers (default all)."""
        if indices is None:
            indices = range(len(self.layers))
        dtype = self.precision.dtype
        for index in indices:
            layer = self.layers[index]
            if layer.has_params:
                rng = np.random.default_rng([seed, index])
                layer.initialize(self.shapes[index], rng, dtype)

    @property
    def parameter_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.has_params]

    def parameters(self) -> dict[tuple[int, str], np.ndarray]:
        return {
            (i, name): self.layers[i].params[name]
            for i in self.parameter_layers
            for name in self.layers[i].param_names
        }

    def trainable_parameters(self) -> dict[tuple[int, str], np.ndarray]:
        return {key: p for key, p in self.parameters().items() if not self.layers[key[0]].frozen}

    def freeze(self, count: int) -> None:
        """Freeze the first `count` layers and unfreeze the others."""
        if not 0 <= count < len(self.layers):
            raise ValueError(
                f"Can freeze between 0 and {len(self.layers) - 1} layers, got {count}"
            )
        for index, layer in enumerate(self.layers):
            layer.frozen = index < count

    def with_precision(self, precision: Precision) -> "Model":
        """Return a copy with parameters cast to the given precision."""
        other = copy.deepcopy(self)
        other.precision = precision
        for layer in other.layers:
            layer.params = {k: v.astype(precision.dtype) for k, v in layer.params.items()}
        return other

    def forward(self, batch: np.ndarray, training: bool = False, step: int = 0) -> np.ndarray:
        """Class probabilities of shape (N, 2) for a (N, H, W, C) batch.

        In training mode dropout masks are drawn from a generator seeded
        with (seed, step, layer index).

        Raises:
            ShapeError: if the batch does not fit the model input.
            NumericalError: if a layer produces NaN or infinite values.
        """
        if batch.ndim != 4 or batch.shape[1:] != self.input_shape:
            raise ShapeError(
                f"Batch of shape {batch.shape} does not fit input {self.input_shape}"
            )
        x = batch.astype(self.precision.dtype, copy=False)
        for index, layer in enumerate(self.layers):
            rng = None
            if training and layer.needs_rng:
                rng = np.random.default_rng([self.seed, step, index])
            x = layer.forward(x, training=training, rng=rng)
            if not np.all(np.isfinite(x)):
                raise NumericalError(
                    f"Non-finite values after layer {index} ({type(layer).__name__})"
                )
        return x

    def backward(self, labels: np.ndarray) -> dict[tuple[int, str], np.ndarray]:
        """Gradients of the mean cross-entropy of the last forward pass.

        Frozen layers get zero gradients. The softmax and cross-entropy
        gradients are combined into (p - y) / N.
        """
        check_one_hot(labels)
        probabilities = self.layers[-1]._cache
        grad = softmax_cross_entropy_grad(probabilities, labels).astype(probabilities.dtype)
        for layer in reversed(self.layers[:-1]):
            grad = layer.backward(grad)
            if layer.frozen:
                layer.grads = {k: np.zeros_like(v) for k, v in layer.params.items()}
        return {
            (i, name): self.layers[i].grads[name]
            for i in self.parameter_layers
            for name in self.layers[i].param_names
        }

    def loss(self, batch: np.ndarray, labels: np.ndarray) -> float:
        return cross_entropy(self.forward(batch), labels)

    def __repr__(self) -> str:
        return f"Model({self.layers!r}, input_shape={self.input_shape})"


def build_default_model(
    input_shape: tuple[int, int, int] = (64, 64, 1),
    dropout_rate: float = 0.0,
    seed: int = 0,
    precision: Precision = Precision.SINGLE,
    filters: tuple[int, ...] = (8, 16, 32),
    kernel_size: int = 3,
) -> Model:
    """Convolution blocks, then flatten, optional dropout and a 2-unit head.

    Every block is a convolution, a ReLU and a 2x2 max pooling.
    """
    layers = []
    for count in filters:
        layers.extend([Conv2D(count, kernel_size), ReLU(), MaxPool()])
    layers.append(Flatten())
    if dropout_rate > 0:
        layers.append(Dropout(dropout_rate))
    layers.extend([Dense(len(CLASSES)), Softmax()])
    return Model(layers, input_shape, seed=seed, precision=precision)


def _as_batch(image: np.ndarray) -> np.ndarray:
    if np.issubdtype(image.dtype, np.integer):
        image = image.astype(np.float64) / 255.0
    if image.ndim == 2:
        image = image[..., np.newaxis]
    return image[np.newaxis]


def predict(model: Model, image: np.ndarray) -> tuple[str, np.ndarray]:
    """Classify a single image.

    8-bit images are scaled to [0, 1]. Equal probabilities give
    'defective'.

    Returns:
        tuple[str, np.ndarray]: class name and the two probabilities.
    """
    probabilities = model.forward(_as_batch(image))[0]
    return CLASSES[predicted_classes(probabilities[np.newaxis])[0]], probabilities


def predicted_classes(probabilities: np.ndarray) -> np.ndarray:
    """Argmax per row, with ties going to the defective class."""
    return np.where(
        probabilities[:, DEFECTIVE] >= probabilities[:, 1 - DEFECTIVE], DEFECTIVE, 1 - DEFECTIVE
    )


def evaluate(model: Model, iterator) -> ConfusionMatrix:
    """Confusion matrix over one pass of the iterator.

    Defective is the positive class.
    """
    matrix = ConfusionMatrix()
    for batch, labels in iterator.iterate_once():
        predicted = predicted_classes(model.forward(batch))
        actual = labels.argmax(axis=1)
        matrix += ConfusionMatrix.from_predictions(actual == DEFECTIVE, predicted == DEFECTIVE)
    logger.debug("Evaluated %d images: %s", matrix.total, matrix)
    return matrix


def accuracy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of predictions equal to the true class."""
    return float(np.mean(predicted_classes(probabilities) == labels.argmax(axis=1)))


def gradient_check(
    model: Model, batch: np.ndarray, labels: np.ndarray, step: float = 1e-5
) -> float:
    """Compare analytic gradients with central differences.

    Runs in double precision on a copy of the model, over every parameter
    of every layer, with dropout disabled.

    Returns:
        float: the largest relative error |a - n| / max(|a| + |n|, 1e-6).
    """
    model = model.with_precision(Precision.DOUBLE)
    for layer in model.layers:
        layer.frozen = False
    batch = batch.astype(np.float64)
    model.forward(batch)
    analytic = model.backward(labels)

    worst = 0.0
    for key, param in model.parameters().items():
        grad = analytic[key]
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + step
            plus = model.loss(batch, labels)
            param[index] = original - step
            minus = model.loss(batch, labels)
            param[index] = original
            numerical = (plus - minus) / (2 * step)
            error = abs(grad[index] - numerical) / max(abs(grad[index]) + abs(numerical), 1e-6)
            worst = max(worst, error)
    logger.debug("Gradient check: max relative error %.3g", worst)
    return worst
