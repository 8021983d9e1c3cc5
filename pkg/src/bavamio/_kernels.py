"""Backend selection for the coordinate-descent kernel.

The compiled extension is used when it imports; otherwise the NumPy
implementation takes over.  Set ``BAVAMIO_BACKEND=python`` to force the
fallback.
"""

import os

from bavamio import _cd_py

_py_cd_solve = _cd_py.cd_solve

try:
    from bavamio._cd import cd_solve as _c_cd_solve
except ImportError:  # pragma: no cover - depends on build
    _c_cd_solve = None

if _c_cd_solve is not None and os.environ.get("BAVAMIO_BACKEND", "").lower() != "python":
    cd_solve = _c_cd_solve
    BACKEND = "cython"
else:
    cd_solve = _py_cd_solve
    BACKEND = "python"


def available_backends():
    out = {"python": _py_cd_solve}
    if _c_cd_solve is not None:
        out["cython"] = _c_cd_solve
    return out
