"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
twin takes over. Set ``ORGANRRG_PURE_KERNELS=1`` to force the pure backend
(used by the benchmark and the backend-equivalence tests).
"""

import os

if os.environ.get("ORGANRRG_PURE_KERNELS"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND: str = _impl.BACKEND
lcs_length = _impl.lcs_length
clipped_ngram_matches = _impl.clipped_ngram_matches
align_two_stage = _impl.align_two_stage
