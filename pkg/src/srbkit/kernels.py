"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``SRBKIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SRBKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

skew_advance = _impl.skew_advance
skew_birkhoff = _impl.skew_birkhoff
cat_advance = _impl.cat_advance
cat_birkhoff = _impl.cat_birkhoff
galerkin_flow = _impl.galerkin_flow
