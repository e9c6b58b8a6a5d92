"""Desk-scale monocular 3-D object detection with multi-scale fusion, a depth
branch and a bidirectional selective state-space block."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .estimator import MonoMMDetector
from .model import ModelConfig, MonoMM
from .tensor import Tensor, no_grad, precision

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "RunConfig", "load_config", "parse_config", "MonoMMDetector", "ModelConfig", "MonoMM",
    "Tensor", "no_grad", "precision", "__version__",
]
