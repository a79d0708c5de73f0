"""Training the classifier with Adam and recording its history."""

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from trackscan.layers import NumericalError, Precision, cross_entropy
from trackscan.network import Model, accuracy

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


class TrainingError(RuntimeError):
    """Training cannot continue."""


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(30, ge=1)
    steps_per_epoch: int = Field(20, ge=0)
    validation_steps: int = Field(10, ge=1)
    batch_size: int = Field(20, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    dropout_rate: float = Field(0.5, ge=0, lt=1)
    shuffle: bool = True
    augment: bool = True
    precision: Precision = Precision.SINGLE
    seed: int = Field(0, ge=0, lt=2**63)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc)
                for r in self.records
            ],
            columns=HISTORY_COLUMNS,
        )

    def to_csv(self, path: Path) -> None:
        self.to_dataframe().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: Path) -> "History":
        df = pd.read_csv(path)
        missing = set(HISTORY_COLUMNS) - set(df.columns)
        if missing:
            raise ValueError(f"History file {path} lacks columns {sorted(missing)}")
        return cls(
            [
                EpochRecord(
                    epoch=int(row.epoch),
                    train_loss=float(row.train_loss),
                    train_acc=float(row.train_acc),
                    val_loss=float(row.val_loss),
                    val_acc=float(row.val_acc),
                )
                for row in df.itertuples(index=False)
            ]
        )


@dataclass
class AdamState:
    """First and second moment estimates per parameter, and the step count."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_parameters(cls, params: dict) -> "AdamState":
        return cls(
            m={key: np.zeros_like(p) for key, p in params.items()},
            v={key: np.zeros_like(p) for key, p in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> AdamState:
    """Update the parameters in place with one bias-corrected Adam step."""
    state.t += 1
    lr = config.learning_rate
    b1, b2 = config.beta1, config.beta2
    correction1 = 1 - b1**state.t
    correction2 = 1 - b2**state.t
    for key, param in params.items():
        grad = grads[key]
        if grad.shape != param.shape:
            raise ValueError(f"Gradient of {key} has shape {grad.shape}, expected {param.shape}")
        if key not in state.m:
            state.m[key] = np.zeros_like(param)
            state.v[key] = np.zeros_like(param)
        state.m[key] = b1 * state.m[key] + (1 - b1) * grad
        state.v[key] = b2 * state.v[key] + (1 - b2) * grad**2
        m_hat = state.m[key] / correction1
        v_hat = state.v[key] / correction2
        param -= (lr * m_hat / (np.sqrt(v_hat) + config.epsilon)).astype(param.dtype)
    return state


def _next_batch(iterator, what: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        batch, labels = next(iterator)
    except StopIteration as exc:
        raise TrainingError(f"The {what} iterator is empty") from exc
    if len(batch) == 0:
        raise TrainingError(f"The {what} iterator yields empty batches")
    return batch, labels


def train(
    model: Model,
    train_iterator,
    valid_iterator,
    config: TrainConfig,
    progress: bool = False,
) -> History:
    """Train the unfrozen layers of a model.

    Each epoch runs `steps_per_epoch` Adam updates on batches from
    `train_iterator`, then measures loss and accuracy on
    `validation_steps` batches from `valid_iterator`. If an epoch has no
    steps, the training metrics are measured on one batch without
    updating the model.

    Raises:
        TrainingError: on an empty iterator or a non-finite loss.
    """
    params = model.trainable_parameters()
    state = AdamState.for_parameters(params)
    history = History()
    step = 0
    for epoch in tqdm(range(1, config.epochs + 1), desc="Training", disable=not progress):
        losses, accuracies = [], []
        for epoch_step in range(config.steps_per_epoch):
            batch, labels = _next_batch(train_iterator, "training")
            try:
                probabilities = model.forward(batch, training=True, step=step)
            except NumericalError as exc:
                raise TrainingError(f"{exc} at epoch {epoch}, step {epoch_step}") from exc
            loss = cross_entropy(probabilities, labels)
            if not math.isfinite(loss):
                raise TrainingError(f"Loss is {loss} at epoch {epoch}, step {epoch_step}")
            model.backward(labels)
            grads = {(i, name): model.layers[i].grads[name] for i, name in params}
            adam_step(params, grads, state, config)
            losses.append(loss)
            accuracies.append(accuracy(probabilities, labels))
            step += 1
        if not losses:
            batch, labels = _next_batch(train_iterator, "training")
            probabilities = model.forward(batch)
            losses.append(cross_entropy(probabilities, labels))
            accuracies.append(accuracy(probabilities, labels))

        val_losses, val_accuracies = [], []
        for _ in range(config.validation_steps):
            batch, labels = _next_batch(valid_iterator, "validation")
            probabilities = model.forward(batch)
            val_losses.append(cross_entropy(probabilities, labels))
            val_accuracies.append(accuracy(probabilities, labels))

        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            train_acc=float(np.mean(accuracies)),
            val_loss=float(np.mean(val_losses)),
            val_acc=float(np.mean(val_accuracies)),
        )
        history.append(record)
        logger.info(
            "Epoch %d: loss %.4f, accuracy %.3f, validation loss %.4f, validation accuracy %.3f",
            record.epoch,
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc,
        )
    return history


def freeze_and_retrain(
    model: Model,
    frozen_layer_count: int,
    train_iterator,
    valid_iterator,
    config: TrainConfig,
    progress: bool = False,
) -> tuple[Model, History]:
    """Keep the first layers of a trained model and retrain the rest.

    The model is copied. Its first `frozen_layer_count` layers keep their
    parameters; all later layers with parameters are re-initialized from
    `config.seed` and trained.

    Raises:
        TrainingError: if no layer with parameters is left to train.
    """
    model = copy.deepcopy(model)
    try:
        model.freeze(frozen_layer_count)
    except ValueError as exc:
        raise TrainingError(str(exc)) from exc
    unfrozen = [i for i in model.parameter_layers if not model.layers[i].frozen]
    if not unfrozen:
        raise TrainingError("All layers with parameters are frozen")
    model.seed = config.seed
    model.initialize(config.seed, unfrozen)
    logger.info(
        "Retraining layers %s with the first %d layers frozen", unfrozen, frozen_layer_count
    )
    history = train(model, train_iterator, valid_iterator, config, progress=progress)
    return model, history
