"""LightDOA: three depthwise-separable blocks, 2x2 pooling, a GRU and two
fully connected layers mapping an IPD map to azimuth-class logits."""

from __future__ import annotations

import numpy as np

from .angles import AngleGrid, expected_angle
from .errors import ConfigError, InvalidArgument
from .nn import functional as F
from .nn.checkpoint import read_container, write_container
from .nn.layers import GRU, AdaptiveAvgPool2d, Linear, Module, ReLU, separable_block

CHANNELS = (1, 8, 16, 32)
GRU_HIDDEN = 8
FC_HIDDEN = 128
POOL = (2, 2)
MIN_INPUT = 8
ARCHITECTURE = "lightdoa-v1"


class LightDOA(Module):
    def __init__(self, num_classes: int = 37, seed: int = 0, dtype=np.float32):
        self.grid = AngleGrid(num_classes)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.blocks = [
            separable_block(c_in, c_out, stride=2, rng=rng, dtype=dtype)
            for c_in, c_out in zip(CHANNELS[:-1], CHANNELS[1:])
        ]
        self.pool = AdaptiveAvgPool2d(*POOL)
        seq_features = POOL[0] * POOL[1]
        self.gru = GRU(seq_features, GRU_HIDDEN, rng=rng, dtype=dtype)
        self.fc1 = Linear(CHANNELS[-1] * GRU_HIDDEN, FC_HIDDEN, rng=rng, dtype=dtype)
        self.act = ReLU()
        self.fc2 = Linear(FC_HIDDEN, num_classes, rng=rng, dtype=dtype)
        self.rng_state = None

    @property
    def num_classes(self) -> int:
        return self.grid.num_classes

    def forward(self, x):
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1] != 1:
            raise InvalidArgument(f"expected (B, 1, F, T) input, got shape {x.shape}")
        if x.shape[2] < MIN_INPUT or x.shape[3] < MIN_INPUT:
            raise InvalidArgument(f"F and T must be at least {MIN_INPUT}, got {x.shape[2:]}")
        h = x.astype(self.dtype, copy=False)
        for block in self.blocks:
            h = block.forward(h)
        h = self.pool.forward(h)
        B, C = h.shape[:2]
        # channels become the 32-step sequence, the 2x2 grid the 4 features
        h = self.gru.forward(h.reshape(B, C, -1))
        self._gru_shape = h.shape
        h = self.fc1.forward(h.reshape(B, -1))
        return self.fc2.forward(self.act.forward(h))

    def backward(self, dlogits):
        d = self.fc1.backward(self.act.backward(self.fc2.backward(dlogits)))
        d = self.gru.backward(d.reshape(self._gru_shape))
        B, C, _ = d.shape
        d = self.pool.backward(d.reshape(B, C, *POOL))
        for block in reversed(self.blocks):
            d = block.backward(d)
        return d

    def predict_proba(self, x) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            return F.softmax(self.forward(x).astype(np.float64))
        finally:
            self.train(was_training)

    def predict_angle(self, x) -> np.ndarray:
        """Expected angle (deg) for each item of a (B, 1, F, T) batch."""
        probs = self.predict_proba(x)
        return np.array([expected_angle(p / p.sum(), self.grid) for p in probs])

    def config(self) -> dict:
        return {
            "architecture": ARCHITECTURE,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "dtype": self.dtype.str,
            "channels": list(CHANNELS),
            "gru_hidden": GRU_HIDDEN,
            "fc_hidden": FC_HIDDEN,
        }


def build_lightdoa(num_classes: int, seed: int = 0, dtype=np.float32) -> LightDOA:
    return LightDOA(num_classes, seed, dtype)


def param_count(model: Module) -> int:
    """Trainable parameters; batch-norm running statistics are not counted."""
    return model.num_parameters()


def predict_angle(model: LightDOA, ipd) -> float:
    """Expected angle of a single (1, F, T) or (F, T) IPD map."""
    x = np.asarray(ipd)
    x = x.reshape((1, 1) + x.shape[-2:])
    return float(model.predict_angle(x)[0])


def save_model(path, model: LightDOA, extra: dict | None = None) -> None:
    meta = {"model": model.config(), "rng_state": model.rng_state, "extra": extra or {}}
    write_container(path, model.state_dict(), meta)


def load_model(path, num_classes: int | None = None) -> tuple[LightDOA, dict]:
    tensors, meta = read_container(path)
    cfg = meta.get("model", {})
    if cfg.get("architecture") != ARCHITECTURE:
        raise ConfigError(f"{path}: not a {ARCHITECTURE} checkpoint")
    if num_classes is not None and cfg["num_classes"] != num_classes:
        raise ConfigError(f"checkpoint has {cfg['num_classes']} classes, requested {num_classes}")
    model = LightDOA(cfg["num_classes"], cfg["seed"], np.dtype(cfg["dtype"]))
    model.load_state_dict(tensors)
    model.rng_state = meta.get("rng_state")
    model.eval()
    return model, meta
