"""Box kernels with a compiled core and a pure-Python fallback.

The compiled ``_boxops`` extension is used when it was built; otherwise, or
when ``VISAFE_PURE_PYTHON=1`` is set, the numpy implementation is used.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("VISAFE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _boxops as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

iou_matrix = _impl.iou_matrix
nms = _impl.nms
match_greedy = _impl.match_greedy


def backends():
    """Available implementations by name, for benchmarks and cross-checks."""
    out = {"python": _fallback}
    try:
        from . import _boxops

        out["compiled"] = _boxops
    except ImportError:
        pass
    return out
