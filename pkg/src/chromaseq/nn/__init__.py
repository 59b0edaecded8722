"""Layers, model and gradient checks."""

from .layers import NumericError
from .model import (
    ModelConfig,
    ModelParams,
    init_params,
    model_backward,
    model_forward,
    parameter_count,
    zero_params,
)

__all__ = [
    "ModelConfig",
    "ModelParams",
    "NumericError",
    "init_params",
    "model_backward",
    "model_forward",
    "parameter_count",
    "zero_params",
]
