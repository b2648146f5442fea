"""Coarse-to-fine optical flow estimation on a self-contained autodiff core.

The package implements learnable feature pyramids, differentiable feature
warping, windowed cost volumes, per-level flow estimators with optional
dense/residual connections, and a dilated context refinement network,
together with the multi-scale and robust training losses, synthetic data
generation, flow metrics, visualization, and a CLI.
"""

from .tensor import Tensor, ParameterStore, no_grad

__all__ = ["Tensor", "ParameterStore", "no_grad"]
__version__ = "0.1.0"
