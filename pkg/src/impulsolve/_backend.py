"""Kernel backend selection: compiled extension if available, pure otherwise.

Set IMPULSOLVE_PURE=1 to force the pure-Python twin even when the compiled
module is installed (used by the equality tests and the benchmark).
"""

import os

if os.environ.get("IMPULSOLVE_PURE") == "1":
    from . import _kernels_py as _impl
    BACKEND = "pure"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "pure"

expect_children = _impl.expect_children
expect_children_add = _impl.expect_children_add
expect_children_mul = _impl.expect_children_mul
sweep_max_add = _impl.sweep_max_add
sweep_max_mul = _impl.sweep_max_mul
sample_leaf_counts = _impl.sample_leaf_counts


def backend_name() -> str:
    return BACKEND
