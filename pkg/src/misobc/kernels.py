"""Backend selection for the inner precoder solver.

The compiled path-following core is used when the extension imports;
setting ``MISOBC_PURE_PYTHON=1`` forces the numpy implementation.  Both
share the orchestration in ``_inner_py.inner_solve``.
"""

from __future__ import annotations

import functools
import os

from . import _inner_py

BACKEND = "python"
_core = _inner_py.barrier_core

if os.environ.get("MISOBC_PURE_PYTHON", "").strip().lower() not in ("1", "true", "yes"):
    try:
        from . import _inner as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None
    if _compiled is not None:
        _core = _compiled.barrier_core
        BACKEND = "cython"

__all__ = ["BACKEND", "inner_solve", "python_inner_solve", "barrier_core"]

barrier_core = _core
inner_solve = functools.partial(_inner_py.inner_solve, core=_core)
python_inner_solve = functools.partial(_inner_py.inner_solve, core=_inner_py.barrier_core)
