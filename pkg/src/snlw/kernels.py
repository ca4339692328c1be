"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Set ``SNLW_PURE_PYTHON=1`` to force the numpy fallback. ``BACKEND`` names the
implementation picked at import time; run manifests record it because the two
backends agree only to the last ulp of libm's transcendental functions.
"""
import os

from . import _kernels_py

_impl = _kernels_py
BACKEND = "numpy"

if os.environ.get("SNLW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py

mode_normals = _impl.mode_normals
hermite_eval = _impl.hermite_eval
oscillator_step = _impl.oscillator_step


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"numpy": _kernels_py}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
