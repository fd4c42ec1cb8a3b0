"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set PARTLIFT_FORCE_NUMPY=1 to skip the extension (used by the parity tests
and the kernel benchmark).  ``active()`` reports which backend is live.
"""

from __future__ import annotations

import os

from partlift import _kernels_np

if os.environ.get("PARTLIFT_FORCE_NUMPY"):
    _impl = _kernels_np
    HAVE_COMPILED = False
else:
    try:
        from partlift import _kernels as _impl  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:
        _impl = _kernels_np
        HAVE_COMPILED = False

splat_rasterize = _impl.splat_rasterize
vote_counts = _impl.vote_counts


def active() -> str:
    return "compiled" if HAVE_COMPILED else "numpy"
