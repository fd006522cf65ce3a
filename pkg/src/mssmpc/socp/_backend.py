"""Pick the compiled barrier kernels when available, numpy otherwise.

Set ``MSSMPC_PURE_PYTHON=1`` to force the numpy kernels.
"""

from __future__ import annotations

import os

from . import _kernels_py

py_kernels = _kernels_py
ext_kernels = None

if os.environ.get("MSSMPC_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels_ext as ext_kernels  # type: ignore[no-redef]
    except ImportError:  # extension not built
        ext_kernels = None

kernels = ext_kernels if ext_kernels is not None else py_kernels
BACKEND = "cython" if ext_kernels is not None else "python"


def get_kernels(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return py_kernels
    if name == "cython":
        if ext_kernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return ext_kernels
    raise ValueError(f"unknown kernel backend {name!r}")
