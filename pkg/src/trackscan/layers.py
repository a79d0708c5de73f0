"""Layers of the convolutional classifier.

All image tensors are laid out as (batch, height, width, channels). The
module-level functions implement the forward and backward passes; the
layer classes wrap them with parameters, caches and shape bookkeeping.
"""

import enum
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# probabilities are clamped to this before taking the logarithm
MIN_PROBABILITY = 1e-12


class ShapeError(ValueError):
    """Tensor dimensions do not fit the operation."""


class NumericalError(ArithmeticError):
    """NaN or infinite values in a tensor."""


class Precision(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.SINGLE else np.float64)


class LayerKind(enum.IntEnum):
    CONV2D = 1
    RELU = 2
    MAXPOOL = 3
    FLATTEN = 4
    DENSE = 5
    DROPOUT = 6
    SOFTMAX = 7


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Valid cross-correlation with stride 1 plus a bias per filter.

    Args:
        x (np.ndarray): input of shape (N, H, W, C).
        kernels (np.ndarray): kernels of shape (k, k, C, F).
        biases (np.ndarray): biases of shape (F,).

    Returns:
        np.ndarray: output of shape (N, H - k + 1, W - k + 1, F).
    """
    k = kernels.shape[0]
    if x.ndim != 4:
        raise ShapeError(f"Expected a rank-4 input, got shape {x.shape}")
    if x.shape[3] != kernels.shape[2]:
        raise ShapeError(
            f"Input has {x.shape[3]} channels, kernels expect {kernels.shape[2]}"
        )
    if k > x.shape[1] or k > x.shape[2]:
        raise ShapeError(f"Kernel size {k} larger than input {x.shape[1:3]}")
    # (N, Ho, Wo, C, k, k)
    windows = sliding_window_view(x, (k, k), axis=(1, 2))
    return np.tensordot(windows, kernels, axes=([3, 4, 5], [2, 0, 1])) + biases


def conv2d_backward(
    x: np.ndarray, kernels: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward.

    Returns:
        tuple: (input_grad, kernel_grad, bias_grad).
    """
    k = kernels.shape[0]
    expected = (x.shape[0], x.shape[1] - k + 1, x.shape[2] - k + 1, kernels.shape[3])
    if grad.shape != expected:
        raise ShapeError(f"Upstream gradient has shape {grad.shape}, expected {expected}")
    bias_grad = grad.sum(axis=(0, 1, 2))
    windows = sliding_window_view(x, (k, k), axis=(1, 2))
    kernel_grad = np.tensordot(windows, grad, axes=([0, 1, 2], [0, 1, 2])).transpose(
        1, 2, 0, 3
    )
    # full correlation of the padded upstream gradient with the flipped kernels
    padded = np.pad(grad, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
    grad_windows = sliding_window_view(padded, (k, k), axis=(1, 2))
    input_grad = np.tensordot(
        grad_windows, kernels[::-1, ::-1], axes=([3, 4, 5], [3, 0, 1])
    )
    return input_grad, kernel_grad, bias_grad


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad * (x > 0)


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2.

    Odd trailing rows and columns are dropped. The argmax indices number
    the window elements in row-major order; ties go to the first one.

    Returns:
        tuple: (output of shape (N, H // 2, W // 2, C), argmax indices of
            the same shape).
    """
    n, height, width, channels = x.shape
    if height < 2 or width < 2:
        raise ShapeError(f"Cannot pool an input of size {height}x{width}")
    ho, wo = height // 2, width // 2
    windows = (
        x[:, : 2 * ho, : 2 * wo]
        .reshape(n, ho, 2, wo, 2, channels)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, ho, wo, channels, 4)
    )
    argmax = windows.argmax(axis=-1)
    output = np.take_along_axis(windows, argmax[..., np.newaxis], axis=-1)[..., 0]
    return output, argmax


def maxpool_backward(
    argmax: np.ndarray, grad: np.ndarray, input_shape: tuple[int, ...]
) -> np.ndarray:
    """Route each upstream value to the position of its window maximum."""
    n, ho, wo, channels = argmax.shape
    if grad.shape != argmax.shape:
        raise ShapeError(f"Upstream gradient has shape {grad.shape}, expected {argmax.shape}")
    windows = np.zeros((n, ho, wo, channels, 4), dtype=grad.dtype)
    np.put_along_axis(windows, argmax[..., np.newaxis], grad[..., np.newaxis], axis=-1)
    routed = (
        windows.reshape(n, ho, wo, channels, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, 2 * ho, 2 * wo, channels)
    )
    input_grad = np.zeros(input_shape, dtype=grad.dtype)
    input_grad[:, : 2 * ho, : 2 * wo] = routed
    return input_grad


def dense_forward(x: np.ndarray, weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(
            f"Input of shape {x.shape} does not fit weights of shape {weights.shape}"
        )
    return x @ weights + biases


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of dense_forward: (input_grad, weight_grad, bias_grad)."""
    if grad.shape != (x.shape[0], weights.shape[1]):
        raise ShapeError(f"Upstream gradient has shape {grad.shape}")
    return grad @ weights.T, x.T @ grad, grad.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a (N, classes) array."""
    if not np.all(np.isfinite(logits)):
        raise NumericalError("Non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def check_one_hot(labels: np.ndarray) -> None:
    if labels.ndim != 2 or not (
        np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)
    ):
        raise ValueError("Labels are not one-hot encoded")


def cross_entropy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean categorical cross-entropy of a batch."""
    check_one_hot(labels)
    if probabilities.shape != labels.shape:
        raise ShapeError(
            f"Probabilities {probabilities.shape} and labels {labels.shape} differ"
        )
    p_true = np.clip((probabilities * labels).sum(axis=1), MIN_PROBABILITY, 1.0)
    return float(-np.mean(np.log(p_true)))


def softmax_cross_entropy_grad(probabilities: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the logits."""
    return (probabilities - labels) / len(labels)


def dropout_forward(
    x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout.

    In training mode every unit is zeroed with probability `rate` and the
    survivors are scaled by 1 / (1 - rate). Outside training this is the
    identity.

    Returns:
        tuple: (output, scaled mask or None if nothing was dropped).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("Training mode dropout needs a random generator")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


class Layer:
    """A layer of the network.

    Layers with parameters keep them in `params` and the gradients of the
    last backward pass in `grads`, under the same names.
    """

    kind: ClassVar[LayerKind]
    param_names: ClassVar[tuple[str, ...]] = ()
    needs_rng: ClassVar[bool] = False

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.frozen = False
        self._cache = None

    @property
    def has_params(self) -> bool:
        return bool(self.param_names)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def initialize(
        self, input_shape: tuple[int, ...], rng: np.random.Generator, dtype: np.dtype
    ) -> None:
        """Draw fresh parameters for the given input shape."""

    def forward(
        self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None
    ) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> tuple[int, int, float]:
        """Integer and float settings stored in model files."""
        return 0, 0, 0.0

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class Conv2D(Layer):
    kind = LayerKind.CONV2D
    param_names = ("kernels", "biases")

    def __init__(self, filters: int, kernel_size: int = 3) -> None:
        super().__init__()
        if filters < 1 or kernel_size < 1:
            raise ValueError("Filters and kernel size must be at least 1")
        self.filters = filters
        self.kernel_size = kernel_size

    def output_shape(self, input_shape):
        height, width, _ = input_shape
        k = self.kernel_size
        if k > height or k > width:
            raise ShapeError(f"Kernel size {k} larger than input {height}x{width}")
        return height - k + 1, width - k + 1, self.filters

    def initialize(self, input_shape, rng, dtype):
        k = self.kernel_size
        channels = input_shape[2]
        std = np.sqrt(2.0 / (k * k * channels))
        self.params = {
            "kernels": rng.normal(0.0, std, (k, k, channels, self.filters)).astype(dtype),
            "biases": np.zeros(self.filters, dtype=dtype),
        }

    def forward(self, x, training=False, rng=None):
        self._cache = x
        return conv2d_forward(x, self.params["kernels"], self.params["biases"])

    def backward(self, grad):
        input_grad, kernel_grad, bias_grad = conv2d_backward(
            self._cache, self.params["kernels"], grad
        )
        self.grads = {"kernels": kernel_grad, "biases": bias_grad}
        return input_grad

    def spec(self):
        return self.filters, self.kernel_size, 0.0

    def __repr__(self):
        return f"Conv2D(filters={self.filters}, kernel_size={self.kernel_size})"


class ReLU(Layer):
    kind = LayerKind.RELU

    def forward(self, x, training=False, rng=None):
        self._cache = x
        return relu_forward(x)

    def backward(self, grad):
        return relu_backward(self._cache, grad)


class MaxPool(Layer):
    kind = LayerKind.MAXPOOL

    def output_shape(self, input_shape):
        height, width, channels = input_shape
        if height < 2 or width < 2:
            raise ShapeError(f"Cannot pool an input of size {height}x{width}")
        return height // 2, width // 2, channels

    def forward(self, x, training=False, rng=None):
        output, argmax = maxpool_forward(x)
        self._cache = (argmax, x.shape)
        return output

    def backward(self, grad):
        argmax, input_shape = self._cache
        return maxpool_backward(argmax, grad, input_shape)


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        self._cache = x.shape
        return x.reshape(len(x), -1)

    def backward(self, grad):
        return grad.reshape(self._cache)


class Dense(Layer):
    kind = LayerKind.DENSE
    param_names = ("weights", "biases")

    def __init__(self, units: int) -> None:
        super().__init__()
        if units < 1:
            raise ValueError("Units must be at least 1")
        self.units = units

    def output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ShapeError(f"Dense layer needs a flat input, got {input_shape}")
        return (self.units,)

    def initialize(self, input_shape, rng, dtype):
        fan_in = input_shape[0]
        self.params = {
            "weights": rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, self.units)).astype(
                dtype
            ),
            "biases": np.zeros(self.units, dtype=dtype),
        }

    def forward(self, x, training=False, rng=None):
        self._cache = x
        return dense_forward(x, self.params["weights"], self.params["biases"])

    def backward(self, grad):
        input_grad, weight_grad, bias_grad = dense_backward(
            self._cache, self.params["weights"], grad
        )
        self.grads = {"weights": weight_grad, "biases": bias_grad}
        return input_grad

    def spec(self):
        return self.units, 0, 0.0

    def __repr__(self):
        return f"Dense(units={self.units})"


class Dropout(Layer):
    kind = LayerKind.DROPOUT
    needs_rng = True

    def __init__(self, rate: float) -> None:
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        output, self._cache = dropout_forward(x, self.rate, training, rng)
        return output

    def backward(self, grad):
        return grad if self._cache is None else grad * self._cache

    def spec(self):
        return 0, 0, self.rate

    def __repr__(self):
        return f"Dropout(rate={self.rate})"


class Softmax(Layer):
    kind = LayerKind.SOFTMAX

    def forward(self, x, training=False, rng=None):
        self._cache = softmax(x)
        return self._cache

    def backward(self, grad):
        p = self._cache
        return p * (grad - (grad * p).sum(axis=1, keepdims=True))


def layer_from_spec(kind: LayerKind, a: int, b: int, rate: float) -> Layer:
    """Create a layer from the settings stored in a model file."""
    match kind:
        case LayerKind.CONV2D:
            return Conv2D(filters=a, kernel_size=b)
        case LayerKind.RELU:
            return ReLU()
        case LayerKind.MAXPOOL:
            return MaxPool()
        case LayerKind.FLATTEN:
            return Flatten()
        case LayerKind.DENSE:
            return Dense(units=a)
        case LayerKind.DROPOUT:
            return Dropout(rate=rate)
        case LayerKind.SOFTMAX:
            return Softmax()
    raise ValueError(f"Unknown layer kind {kind}")
