"""Kernel backend selection.

The package ships two implementations of its hot kernels: a compiled
Cython extension (evpool._kernels) and a pure-numpy fallback
(evpool._kernels_py). The extension is optional; whichever is available
is picked here, once, at import time.

Override with the environment variable EVPOOL_BACKEND:
  auto    (default) compiled if importable, else pure numpy
  cython  require the compiled extension, fail otherwise
  python  force the pure-numpy fallback
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("EVPOOL_BACKEND", "auto").strip().lower()
if _choice not in {"auto", "cython", "python"}:
    raise ImportError(
        f"EVPOOL_BACKEND={_choice!r} not recognized (use auto, cython or python)"
    )

if _choice == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "EVPOOL_BACKEND=cython but the compiled extension is not "
                "available; reinstall with a C toolchain + Cython present"
            )
        _impl = _kernels_py
        BACKEND = "python"

aggregate_shortfall = _impl.aggregate_shortfall
eta_update = _impl.eta_update
prefix_satisfied = _impl.prefix_satisfied

__all__ = ["BACKEND", "aggregate_shortfall", "eta_update", "prefix_satisfied"]
