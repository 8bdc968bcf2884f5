"""Mini-batch training with early stopping on validation accuracy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from .functional import cross_entropy
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 5e-3
    batch_size: int = 256
    max_epochs: int = 150
    patience: int = 10
    seed: int = 0


class EarlyStopping:
    """Tracks the best score; only a strictly greater score resets patience."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = None
        self.bad_epochs = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_accuracy: float = float("nan")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "stopped_early": self.stopped_early,
        }


def predict_logits(model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        return np.concatenate([model.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])
    finally:
        model.train(was_training)


def accuracy(model, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    return float(np.mean(predict_logits(model, x, batch_size).argmax(axis=1) == y))


def train(model, train_set, val_set, config: TrainConfig = TrainConfig(), on_epoch=None):
    """Fit ``model`` and return it loaded with its best-validation weights.

    ``train_set`` and ``val_set`` are ``(features, labels)`` pairs. Shuffling
    uses only ``config.seed``, so equal inputs give identical runs.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise InvalidArgument("training and validation sets must be nonempty")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    stopper = EarlyStopping(config.patience)
    history = History()
    best_state = None

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(len(x_train))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = model.forward(x_train[idx])
            loss, dlogits = cross_entropy(logits.astype(np.float64), y_train[idx])
            model.backward(dlogits.astype(logits.dtype))
            optimizer.step()
            total += loss * len(idx)
            seen += len(idx)
        val_acc = accuracy(model, x_val, y_val, config.batch_size)
        history.train_loss.append(total / seen)
        history.val_accuracy.append(val_acc)
        if stopper.update(epoch, val_acc):
            best_state = model.state_dict()
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, total / seen, val_acc)
        if on_epoch is not None:
            on_epoch(epoch, total / seen, val_acc)
        if stopper.should_stop:
            history.stopped_early = True
            break

    history.best_epoch = stopper.best_epoch
    history.best_val_accuracy = float(stopper.best)
    model.load_state_dict(best_state)
    model.rng_state = rng.bit_generator.state
    return model, history
