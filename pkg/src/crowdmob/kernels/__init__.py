"""Hot numeric kernels with a compiled backend and a numpy fallback.

The compiled extension (``_ckernels``) is used when it was built and imports
cleanly; otherwise the numpy module is used. ``CROWDMOB_PURE_PYTHON=1`` forces
the fallback. ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("CROWDMOB_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

unique_pair_counts = _active.unique_pair_counts
centroid_groups = _active.centroid_groups
bin_points = _active.bin_points

__all__ = [
    "BACKEND",
    "bin_points",
    "centroid_groups",
    "compiled_backend",
    "python_backend",
    "unique_pair_counts",
]
