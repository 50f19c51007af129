"""Kernel backend selection: compiled Cython when built, numpy fallback otherwise.

Set THERMOOPS_FORCE_PY_KERNEL=1 to force the fallback (used by the
equivalence tests and the benchmark). Both backends are bit-identical.
"""

import os

from . import walk_py

if os.environ.get("THERMOOPS_FORCE_PY_KERNEL") == "1":
    walk_backend = walk_py
    BACKEND_NAME = "python"
else:
    try:
        from . import walk_cy as walk_backend
        BACKEND_NAME = "cython"
    except ImportError:
        walk_backend = walk_py
        BACKEND_NAME = "python"
