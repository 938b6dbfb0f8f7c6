"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``SGWAVE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py as python_impl

compiled_impl = None
if os.environ.get("SGWAVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_impl = None

impl = compiled_impl if compiled_impl is not None else python_impl
BACKEND = "compiled" if compiled_impl is not None else "python"

p1_element_stiffness = impl.p1_element_stiffness
sg_block_matvec = impl.sg_block_matvec
