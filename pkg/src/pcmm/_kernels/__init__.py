"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is preferred; set ``PCMM_PURE_PYTHON=1`` to force the
fallback. ``BACKEND`` names whichever was selected.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("PCMM_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend

BACKEND = _active.BACKEND
nn_sqdist = _active.nn_sqdist
any_pair_within = _active.any_pair_within
bspline_basis = _active.bspline_basis

__all__ = [
    "BACKEND",
    "nn_sqdist",
    "any_pair_within",
    "bspline_basis",
    "python_backend",
    "compiled_backend",
]
