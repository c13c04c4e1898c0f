"""Gaussian priors per parameter group, derived from layer geometry.

Weight priors follow the fan-out form used by He-style initialization for
ReLU networks: zero mean with variance 2 / (n_out * kernel_area). A dense
layer is treated as the degenerate convolution whose kernel covers the
whole spatial extent of its input (area 1 for flat inputs). Batch-norm
parameters get a tight prior around their neutral values, and plain biases
reuse the batch-norm shift prior.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import layers
from .errors import ConfigError


@dataclass(frozen=True)
class PriorSpec:
    """Mean and variance of one parameter group's Gaussian prior."""

    mu: float
    var: float
    group_id: str = ""

    def __post_init__(self):
        if self.var <= 0.0:
            raise ConfigError(f"prior variance must be > 0, got {self.var}")


def conv_prior(n_in: int, n_out: int, kernel_w: int, kernel_h: int) -> PriorSpec:
    """Prior for convolution weights: mean 0, variance 2/(n_out*w*h)."""
    if min(n_in, n_out, kernel_w, kernel_h) < 1:
        raise ConfigError("conv_prior needs all counts >= 1")
    return PriorSpec(0.0, 2.0 / (n_out * kernel_w * kernel_h))


def dense_prior(n_in: int, n_out: int, spatial_size: int = 1) -> PriorSpec:
    """Prior for dense weights; ``spatial_size`` is the H*W extent of the
    layer's input when it consumes a spatial map (1 for flat vectors)."""
    if min(n_in, n_out, spatial_size) < 1:
        raise ConfigError("dense_prior needs all counts >= 1")
    return PriorSpec(0.0, 2.0 / (n_out * spatial_size))


def batchnorm_prior(is_weight: bool) -> PriorSpec:
    """Prior for batch-norm parameters: (1, 0.01) scale, (0, 0.01) shift."""
    return PriorSpec(1.0 if is_weight else 0.0, 0.01)


def bias_prior() -> PriorSpec:
    """Prior for dense/conv bias terms, mirroring the batch-norm shift."""
    return PriorSpec(0.0, 0.01)


def group_id(layer_index: int, param_name: str) -> str:
    return f"{layer_index}.{param_name}"


def assign_priors(
    specs: list[layers.LayerSpec], input_shape: tuple[int, ...]
) -> dict[str, PriorSpec]:
    """One PriorSpec per parameter group of the architecture.

    Group ids are ``"<layer_index>.<param_name>"``; every trainable block
    gets exactly one prior.
    """
    shapes = layers.infer_shapes(specs, input_shape)
    priors: dict[str, PriorSpec] = {}
    for i, spec in enumerate(specs):
        in_shape = shapes[i]
        for name in layers.param_shapes(spec, in_shape):
            gid = group_id(i, name)
            if isinstance(spec, layers.Dense):
                if name == "W":
                    spatial = in_shape[1] * in_shape[2] if len(in_shape) == 3 else 1
                    p = dense_prior(spec.n_in, spec.n_out, spatial)
                else:
                    p = bias_prior()
            elif isinstance(spec, layers.Conv2D):
                if name == "W":
                    p = conv_prior(spec.n_in, spec.n_out, spec.kernel_w, spec.kernel_h)
                else:
                    p = bias_prior()
            elif isinstance(spec, layers.BatchNorm):
                p = batchnorm_prior(is_weight=(name == "scale"))
            else:  # pragma: no cover - param_shapes is empty for other kinds
                continue
            priors[gid] = PriorSpec(p.mu, p.var, gid)
    return priors
