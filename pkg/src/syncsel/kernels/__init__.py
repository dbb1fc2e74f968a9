"""Hot inner loops with a compiled backend and a numpy fallback.

The compiled extension ``_ckernels`` is preferred; set ``SYNCSEL_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

if os.environ.get("SYNCSEL_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

smp_pair_slack = _impl.smp_pair_slack
softmax_jacobian_norms = _impl.softmax_jacobian_norms
power_start = _pykernels.power_start

__all__ = ["BACKEND", "smp_pair_slack", "softmax_jacobian_norms", "power_start"]
