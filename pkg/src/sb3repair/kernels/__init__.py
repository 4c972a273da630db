"""Hot kernels used by the interpreter and verifier.

The compiled extension is used when it was built; otherwise the pure-Python
versions are used. Set ``SB3REPAIR_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as pure

compiled = None
if os.environ.get("SB3REPAIR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "compiled" if compiled is not None else "python"

splitmix64 = _impl.splitmix64
rasterize = _impl.rasterize
count_mismatches = _impl.count_mismatches

__all__ = ["BACKEND", "compiled", "pure", "splitmix64", "rasterize", "count_mismatches"]
