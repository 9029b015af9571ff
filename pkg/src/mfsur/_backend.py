"""Kernel backend selection.

The compiled extension ``mfsur._core`` is preferred; the pure-numpy twin
``mfsur._kernels_py`` is used when the extension is unavailable or when the
environment variable ``MFSUR_PURE_PYTHON`` is set to a non-empty value.
Both expose ``bvn_cdf`` and ``traj_max_abs`` with identical semantics.
"""

from __future__ import annotations

import os

from mfsur import _kernels_py

if os.environ.get("MFSUR_PURE_PYTHON"):
    _impl = _kernels_py
    HAVE_COMPILED = False
else:
    try:
        from mfsur import _core as _impl  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:
        _impl = _kernels_py
        HAVE_COMPILED = False

BACKEND_NAME = "compiled" if HAVE_COMPILED else "numpy"

bvn_cdf = _impl.bvn_cdf
exceedance_gain = _impl.exceedance_gain
traj_max_abs = _impl.traj_max_abs


def get_backend(name: str):
    """Explicit backend module by name ('compiled' or 'numpy'), for benchmarks."""
    if name == "numpy":
        return _kernels_py
    if name == "compiled":
        from mfsur import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
