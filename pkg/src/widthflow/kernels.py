"""Kernel selection.

The compiled extension ``widthflow._kernels`` is used when it imports; the
numpy versions in ``widthflow._kernels_py`` are used otherwise, or when the
environment variable ``WIDTHFLOW_PURE_PYTHON`` is set to a non-empty value.
"""

import os

from . import _kernels_py

BACKEND = "python"

if not os.environ.get("WIDTHFLOW_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

ellipsoid_project = _impl.ellipsoid_project
profile_eval = _impl.profile_eval
profile_project = _impl.profile_project

__all__ = ["BACKEND", "ellipsoid_project", "profile_eval", "profile_project"]
