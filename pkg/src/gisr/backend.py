"""Convolution kernel backend selection.

Two interchangeable implementations of the three hot kernels:

* ``numpy``  -- channels-first im2col + BLAS matmul (default)
* ``numba``  -- @njit direct loops

Select with the environment variable GISR_BACKEND, or at runtime with
:func:`use`. ``benchmarks/bench_backends.py`` compares the two; on the
machines this was developed on the BLAS path wins 3-5x for the model's
small-channel 3x3 convolutions, hence the default.
"""

import os

from . import kernels_numpy
from .errors import ArgumentError

_BACKENDS = {"numpy": kernels_numpy}

try:
    from . import kernels_numba
    _BACKENDS["numba"] = kernels_numba
except ImportError:  # pragma: no cover - depends on host install
    kernels_numba = None


def _initial_name():
    name = os.environ.get("GISR_BACKEND", "").strip().lower()
    if name:
        if name not in _BACKENDS:
            raise ArgumentError(
                f"GISR_BACKEND={name!r} unknown; choose from {sorted(_BACKENDS)}")
        return name
    return "numpy"


_active_name = _initial_name()
_active = _BACKENDS[_active_name]


def available():
    return sorted(_BACKENDS)


def active_name():
    return _active_name


def use(name):
    """Switch kernel backend; returns the previously active name."""
    global _active, _active_name
    if name not in _BACKENDS:
        raise ArgumentError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}")
    prev = _active_name
    _active_name = name
    _active = _BACKENDS[name]
    return prev


def conv2d_forward(x, w, stride, pad):
    return _active.conv2d_forward(x, w, stride, pad)


def conv2d_input_grad(g, w, stride, pad, h, wd):
    return _active.conv2d_input_grad(g, w, stride, pad, h, wd)


def conv2d_weight_grad(x, g, stride, pad, kh, kw):
    return _active.conv2d_weight_grad(x, g, stride, pad, kh, kw)
