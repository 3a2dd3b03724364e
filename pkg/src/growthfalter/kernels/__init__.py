"""Hot numerical kernels with backend selection at import.

The compiled Cython extension is preferred; the numpy implementation in
`pure` is the fallback. Set GROWTHFALTER_PURE_PYTHON=1 to force the
fallback (used by the benchmark and for debugging).
"""

import os

from . import pure

if os.environ.get("GROWTHFALTER_PURE_PYTHON"):
    _backend = pure
else:
    try:
        from . import _core as _backend
    except ImportError:
        _backend = pure

BACKEND = _backend.BACKEND
pls_components = _backend.pls_components
ranef_means = _backend.ranef_means
