"""Kernel backend selection.

The sampling-heavy kernels (warping, windowed correlation, 2x upsampling)
exist twice: a compiled Cython extension (`pwcflow._kernels`) and a
pure-numpy fallback (:mod:`pwcflow.backends.numpy_kernels`).  At import time
the compiled extension is preferred when it built; set ``PWC_KERNELS`` to
``cython`` or ``numpy`` to force one, or call :func:`use_backend`.
Convolution is not dispatched here: both backends share the im2col + BLAS
path in :mod:`pwcflow.ops`, which is already memory-bound numpy.
"""

from __future__ import annotations

import os

from . import numpy_kernels

try:
    from pwcflow import _kernels as cython_kernels
except ImportError:  # extension not built; fall back silently
    cython_kernels = None

_BACKENDS = {"numpy": numpy_kernels}
if cython_kernels is not None:
    _BACKENDS["cython"] = cython_kernels

kernels = numpy_kernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def use_backend(name: str) -> None:
    """Select the active kernel backend by name ('cython' or 'numpy')."""
    global kernels
    if name == "auto":
        name = "cython" if "cython" in _BACKENDS else "numpy"
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    kernels = _BACKENDS[name]


def backend_name() -> str:
    return kernels.NAME


use_backend(os.environ.get("PWC_KERNELS", "auto"))
