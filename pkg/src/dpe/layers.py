"""Layer specifications and the shape algebra that connects them.

A network architecture is a plain list of the frozen dataclasses below.
Everything geometric (output shapes, parameter shapes, composition checks)
is a pure function of the specs and the per-sample input shape; parameter
values never enter shape computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import ConfigError


@dataclass(frozen=True)
class Dense:
    """Fully connected layer. Flattens non-flat inputs per sample."""

    n_in: int
    n_out: int
    bias: bool = True

    def __post_init__(self):
        if self.n_in < 1 or self.n_out < 1:
            raise ConfigError(f"Dense needs positive sizes, got ({self.n_in}, {self.n_out})")


@dataclass(frozen=True)
class Conv2D:
    """2D convolution over (channels, height, width) inputs."""

    n_in: int
    n_out: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    bias: bool = True

    def __post_init__(self):
        if min(self.n_in, self.n_out, self.kernel_h, self.kernel_w, self.stride) < 1:
            raise ConfigError(f"Conv2D needs positive counts, got {self}")
        if self.padding < 0:
            raise ConfigError(f"Conv2D padding must be >= 0, got {self.padding}")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class BatchNorm:
    """Per-channel batch normalization with learnable scale and shift.

    ``momentum`` follows the convention
    ``running = momentum * running + (1 - momentum) * batch``.
    """

    channels: int
    momentum: float = 0.9
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"BatchNorm needs channels >= 1, got {self.channels}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"BatchNorm momentum must be in [0, 1), got {self.momentum}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"BatchNorm epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Union[Dense, Conv2D, ReLU, BatchNorm, Softmax]

# Parameter names per layer kind, in canonical iteration order.
PARAM_NAMES = {
    Dense: ("W", "b"),
    Conv2D: ("W", "b"),
    BatchNorm: ("scale", "shift"),
    ReLU: (),
    Softmax: (),
}


def output_shape(spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-sample output shape of ``spec`` applied to ``in_shape``."""
    if isinstance(spec, Dense):
        if math.prod(in_shape) != spec.n_in:
            raise ConfigError(
                f"Dense expects {spec.n_in} inputs, got shape {in_shape} "
                f"({math.prod(in_shape)} values)"
            )
        return (spec.n_out,)
    if isinstance(spec, Conv2D):
        if len(in_shape) != 3:
            raise ConfigError(f"Conv2D expects (channels, H, W) input, got {in_shape}")
        c, h, w = in_shape
        if c != spec.n_in:
            raise ConfigError(f"Conv2D expects {spec.n_in} channels, got {c}")
        h_out = (h + 2 * spec.padding - spec.kernel_h) // spec.stride + 1
        w_out = (w + 2 * spec.padding - spec.kernel_w) // spec.stride + 1
        if h_out < 1 or w_out < 1:
            raise ConfigError(f"Conv2D kernel {spec.kernel_h}x{spec.kernel_w} too large for input {in_shape}")
        return (spec.n_out, h_out, w_out)
    if isinstance(spec, BatchNorm):
        if in_shape[0] != spec.channels:
            raise ConfigError(f"BatchNorm expects {spec.channels} channels, got shape {in_shape}")
        return in_shape
    if isinstance(spec, (ReLU, Softmax)):
        if isinstance(spec, Softmax) and len(in_shape) != 1:
            raise ConfigError(f"Softmax expects a flat input, got {in_shape}")
        return in_shape
    raise ConfigError(f"unknown layer spec {spec!r}")


def infer_shapes(specs: list[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Per-sample input shape of every layer, plus the final output shape.

    Raises ConfigError if consecutive layers do not compose.
    """
    shapes = [tuple(input_shape)]
    for spec in specs:
        shapes.append(output_shape(spec, shapes[-1]))
    return shapes


def param_shapes(spec: LayerSpec, in_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    """Shapes of the trainable parameter blocks of one layer."""
    if isinstance(spec, Dense):
        shapes = {"W": (spec.n_in, spec.n_out)}
        if spec.bias:
            shapes["b"] = (spec.n_out,)
        return shapes
    if isinstance(spec, Conv2D):
        shapes = {"W": (spec.n_out, spec.n_in, spec.kernel_h, spec.kernel_w)}
        if spec.bias:
            shapes["b"] = (spec.n_out,)
        return shapes
    if isinstance(spec, BatchNorm):
        return {"scale": (spec.channels,), "shift": (spec.channels,)}
    return {}
