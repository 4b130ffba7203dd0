"""Kernel backend selection.

The compiled extension is used when importable; setting
``MDSHAPE_PURE_PYTHON=1`` forces the numpy reference kernels.
"""
from __future__ import annotations

import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MDSHAPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        logger.info("compiled kernels unavailable, using numpy fallback")
    else:
        _impl = _compiled
        BACKEND = "cython"

air_terms = _impl.air_terms
two_scale_eval = _impl.two_scale_eval
# takes kernel callables, so it stays in numpy; its cost is in two_scale_eval
path_integral = _kernels_py.path_integral

__all__ = ["BACKEND", "air_terms", "two_scale_eval", "path_integral"]
