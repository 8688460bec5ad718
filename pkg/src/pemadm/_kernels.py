"""Kernel backend selection: compiled extension when available, Python otherwise.

Set PEMADM_PURE_PYTHON=1 to force the pure-Python kernels (used by the
benchmark and by the cross-backend equivalence tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PEMADM_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
markov_path = _impl.markov_path
linear_rollout = _impl.linear_rollout

# step helpers are only needed for policy rollouts; always the Python ones so
# policy paths match the canonical arithmetic regardless of backend
plant_step = _kernels_py.plant_step
measure = _kernels_py.measure
