"""Parameter containers and the layer zoo used by the embedding models."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ConfigError, ShapeError
from . import tensor as T
from .tensor import Tensor

__all__ = [
    "Parameter", "Module", "ModuleList",
    "Conv1d", "Conv2d", "BatchNorm", "Linear",
    "uniform_init",
]


class Parameter(Tensor):
    """A leaf tensor that optimizers update."""

    def __init__(self, data, requires_grad: bool = True):
        super().__init__(np.array(data), requires_grad=requires_grad)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 fan_in: int, dtype=np.float32) -> np.ndarray:
    """U(-a, a) with a = fan_in ** -0.5."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Minimal module tree: registration by attribute assignment, ordered walks."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        # Reassignment may change category (e.g. a None placeholder becoming
        # a child module), so clear any previous registration first.
        for table in ("_params", "_modules", "_buffers"):
            object.__getattribute__(self, table).pop(name, None)
        self.__dict__.pop(name, None)
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        else:
            object.__setattr__(self, name, value)

    def __getattr__(self, name):
        for table in ("_params", "_modules", "_buffers"):
            d = object.__getattribute__(self, table)
            if name in d:
                return d[name]
        raise AttributeError(f"{type(self).__name__} has no attribute {name!r}")

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    # -- traversal ------------------------------------------------------------

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            child_prefix = f"{prefix}.{name}" if prefix else name
            yield from child.named_modules(child_prefix)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for mod_name, mod in self.named_modules(prefix):
            for name, p in mod._params.items():
                yield (f"{mod_name}.{name}" if mod_name else name), p

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for mod_name, mod in self.named_modules(prefix):
            for name, b in mod._buffers.items():
                yield (f"{mod_name}.{name}" if mod_name else name), b

    def parameters(self) -> Iterator[Parameter]:
        for _, p in self.named_parameters():
            yield p

    def state_items(self) -> list[tuple[str, str, np.ndarray]]:
        """(name, kind, array) for every parameter and buffer, stable order."""
        items = [(name, "param", p.data) for name, p in self.named_parameters()]
        items += [(name, "buffer", b) for name, b in self.named_buffers()]
        return items

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy arrays into parameters/buffers by name; shapes must match."""
        for name, kind, dst in self.state_items():
            src = arrays[name]
            if src.shape != dst.shape:
                raise ShapeError(f"state array {name} has shape {src.shape}, expected {dst.shape}")
            dst[...] = src.astype(dst.dtype)

    def state_snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, _, arr in self.state_items()}

    # -- mode switches -----------------------------------------------------------

    def train(self, flag: bool = True) -> "Module":
        object.__setattr__(self, "training", flag)
        for child in self._modules.values():
            child.train(flag)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]


class Conv1d(Module):
    """Time convolution with symmetric zero padding (output length ceil(L/stride))."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 dilation: int = 1, stride: int = 1, bias: bool = True,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigError(f"conv1d kernel must be odd for same-length output, got {kernel_size}")
        if in_channels < 1 or out_channels < 1:
            raise ConfigError("conv1d needs positive channel counts")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.stride = stride
        fan_in = in_channels * kernel_size
        self.weight = Parameter(uniform_init(rng, (out_channels, in_channels, kernel_size), fan_in, dtype))
        if bias:
            self.bias = Parameter(uniform_init(rng, (out_channels,), fan_in, dtype))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, dilation=self.dilation, stride=self.stride)

    def macs(self, frames: int) -> int:
        out_positions = (frames - 1) // self.stride + 1
        return self.kernel_size * self.in_channels * self.out_channels * out_positions


class Conv2d(Module):
    """Spatial convolution on [B, C, D, L]; same padding, then stride."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 stride: tuple[int, int] = (1, 1), bias: bool = True,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigError(f"conv2d kernel must be odd for same-size output, got {kernel_size}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = tuple(stride)
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(
            uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, dtype))
        if bias:
            self.bias = Parameter(uniform_init(rng, (out_channels,), fan_in, dtype))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride)

    def out_extent(self, extents: tuple[int, int]) -> tuple[int, int]:
        d, l = extents
        return (d - 1) // self.stride[0] + 1, (l - 1) // self.stride[1] + 1

    def macs(self, extents: tuple[int, int]) -> int:
        d_out, l_out = self.out_extent(extents)
        return (self.kernel_size ** 2) * self.in_channels * self.out_channels * d_out * l_out


class BatchNorm(Module):
    """Per-channel batch normalization for [B,C], [B,C,L] or [B,C,D,L]."""

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.9,
                 dtype=np.float32):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(num_features, dtype=dtype))
        self.bias = Parameter(np.zeros(num_features, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(num_features, dtype=np.float64))
        self.register_buffer("running_var", np.ones(num_features, dtype=np.float64))

    def forward(self, x: Tensor) -> Tensor:
        return T.batchnorm(x, self.weight, self.bias,
                           self.running_mean, self.running_var,
                           training=self.training, momentum=self.momentum, eps=self.eps)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(uniform_init(rng, (out_features, in_features), in_features, dtype))
        if bias:
            self.bias = Parameter(uniform_init(rng, (out_features,), in_features, dtype))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)

    def macs(self) -> int:
        return self.in_features * self.out_features
