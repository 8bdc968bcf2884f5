"""Stateful layers with explicit forward/backward passes."""

from __future__ import annotations

import math

import numpy as np

from . import functional as F


class Parameter:
    """A trainable array with its gradient and Adam moment buffers."""

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = np.zeros_like(data)
        self.adam_m = np.zeros_like(data)
        self.adam_v = np.zeros_like(data)
        self.step_count = 0

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        self.grad[...] = 0


class Module:
    """Base layer. Parameters, buffers and child modules are discovered from
    instance attributes in definition order, so names are stable."""

    training = True

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for name, value in self._children():
            if isinstance(value, Parameter):
                yield prefix + name, value
            else:
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, value in getattr(self, "buffers", {}).items():
            yield prefix + name, value
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self, optimizer: bool = True) -> dict[str, np.ndarray]:
        """Copies of all parameters and buffers, plus Adam state if ``optimizer``."""
        state = {}
        for name, p in self.named_parameters():
            state[name] = p.data.copy()
            if optimizer:
                state[name + ".adam_m"] = p.adam_m.copy()
                state[name + ".adam_v"] = p.adam_v.copy()
                state[name + ".adam_step"] = np.array([p.step_count], dtype=np.int64)
        for name, b in self.named_buffers():
            state[name] = b.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if state[name].shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {state[name].shape} vs {p.shape}")
            p.data[...] = state[name]
            if name + ".adam_m" in state:
                p.adam_m[...] = state[name + ".adam_m"]
                p.adam_v[...] = state[name + ".adam_v"]
                p.step_count = int(state[name + ".adam_step"][0])
        for name, b in self.named_buffers():
            b[...] = state[name]


def _uniform(rng, bound, shape, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def kaiming_uniform(rng, shape, fan_in, dtype):
    return _uniform(rng, math.sqrt(6.0 / fan_in), shape, dtype)


class DepthwiseConv2d(Module):
    def __init__(self, channels, stride=1, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.weight = Parameter(kaiming_uniform(rng, (channels, 1, 3, 3), 9, dtype))

    def forward(self, x):
        self._x = x
        return F.depthwise_conv2d(x, self.weight.data, self.stride)

    def backward(self, dout):
        dx, dw = F.depthwise_conv2d_backward(dout, self._x, self.weight.data, self.stride)
        self.weight.grad += dw
        return dx


class PointwiseConv2d(Module):
    def __init__(self, in_channels, out_channels, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.weight = Parameter(kaiming_uniform(rng, (out_channels, in_channels, 1, 1), in_channels, dtype))

    def forward(self, x):
        self._x = x
        return F.pointwise_conv2d(x, self.weight.data)

    def backward(self, dout):
        dx, dw = F.pointwise_conv2d_backward(dout, self._x, self.weight.data)
        self.weight.grad += dw
        return dx


class BatchNorm2d(Module):
    def __init__(self, channels, dtype=np.float64):
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.buffers = {
            "running_mean": np.zeros(channels, dtype=dtype),
            "running_var": np.ones(channels, dtype=dtype),
        }

    def forward(self, x):
        out, self._cache = F.batch_norm(
            x,
            self.gamma.data,
            self.beta.data,
            self.buffers["running_mean"],
            self.buffers["running_var"],
            self.training,
        )
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = F.batch_norm_backward(dout, self._cache)
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        return dx


class ReLU(Module):
    def forward(self, x):
        self._x = x
        return F.relu(x)

    def backward(self, dout):
        return F.relu_backward(dout, self._x)


class AdaptiveAvgPool2d(Module):
    def __init__(self, out_h=2, out_w=2):
        self.out_h, self.out_w = out_h, out_w

    def forward(self, x):
        self._shape = x.shape
        return F.adaptive_avg_pool2d(x, self.out_h, self.out_w)

    def backward(self, dout):
        return F.adaptive_avg_pool2d_backward(dout, self._shape)


class GRU(Module):
    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / math.sqrt(hidden_size)
        H = hidden_size
        self.weight_ih = Parameter(_uniform(rng, bound, (3 * H, input_size), dtype))
        self.weight_hh = Parameter(_uniform(rng, bound, (3 * H, H), dtype))
        self.bias_ih = Parameter(_uniform(rng, bound, (3 * H,), dtype))
        self.bias_hh = Parameter(_uniform(rng, bound, (3 * H,), dtype))

    def forward(self, x):
        out, self._cache = F.gru_forward(
            x, self.weight_ih.data, self.weight_hh.data, self.bias_ih.data, self.bias_hh.data
        )
        return out

    def backward(self, dout):
        dx, dw_ih, dw_hh, db_ih, db_hh, _ = F.gru_backward(dout, self._cache)
        self.weight_ih.grad += dw_ih
        self.weight_hh.grad += dw_hh
        self.bias_ih.grad += db_ih
        self.bias_hh.grad += db_hh
        return dx


class Linear(Module):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter(_uniform(rng, 1.0 / math.sqrt(in_features), (out_features,), dtype))

    def forward(self, x):
        self._x = x
        return F.linear(x, self.weight.data, self.bias.data)

    def backward(self, dout):
        dx, dw, db = F.linear_backward(dout, self._x, self.weight.data)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


def separable_block(in_channels, out_channels, stride=2, rng=None, dtype=np.float64) -> Sequential:
    """Depthwise 3x3 -> BN -> ReLU -> pointwise 1x1 -> BN -> ReLU."""
    return Sequential(
        DepthwiseConv2d(in_channels, stride, rng, dtype),
        BatchNorm2d(in_channels, dtype),
        ReLU(),
        PointwiseConv2d(in_channels, out_channels, rng, dtype),
        BatchNorm2d(out_channels, dtype),
        ReLU(),
    )
