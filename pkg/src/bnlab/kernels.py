"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Set ``BNLAB_PURE_PYTHON=1`` to force the fallback.
Both backends produce bit-identical results.
"""
import os

from . import _kernels_py
from ._kernels_py import (  # noqa: F401  (re-exported constants)
    A_1_REST,
    B_REST_1,
    C2_2_REST,
    C3_1_1_REST,
    D2_REST_2,
    D3_REST_1_1,
    OTHER,
)

_compiled = None
if os.environ.get("BNLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

tree_children = _impl.tree_children
cluster_counts = _impl.cluster_counts
composition_codes = _impl.composition_codes
sign_masks = _impl.sign_masks


def backends():
    """Available kernel modules keyed by name, for tests and benchmarks."""
    found = {"python": _kernels_py}
    if _compiled is not None:
        found["cython"] = _compiled
    return found
