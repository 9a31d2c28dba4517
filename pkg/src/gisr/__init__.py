"""Guided image super-resolution toolkit.

An unfolded half-quadratic-splitting network with ConvLSTM stage memory
and cross-modality non-local attention, plus the degradation simulator,
classical solver, training loop, and reduced-reference metrics needed
to exercise it end to end on synthetic guided scenes.
"""

__version__ = "0.1.0"

import os as _os

# The model's GEMMs are too small for BLAS threading to pay off (it is
# ~2x slower multithreaded); pin to one thread unless the user already
# chose. Must happen before numpy first loads its BLAS.
for _v in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_v, "1")

from .errors import (ArgumentError, FormatError, GisrError, NumericError,
                     ShapeError)

__all__ = ["ArgumentError", "FormatError", "GisrError", "NumericError",
           "ShapeError", "__version__"]
