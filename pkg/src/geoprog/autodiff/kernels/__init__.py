"""Backend selection for the recurrence kernels.

The compiled extension is used when it was built; otherwise the numpy
reference implementation takes over.  ``GEOPROG_KERNELS=numpy`` forces the
fallback (useful for benchmarking and for debugging a suspect build).
"""

import os

from . import numpy_backend

if os.environ.get("GEOPROG_KERNELS", "").lower() == "numpy":
    _active = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _core as _active
        BACKEND = "compiled"
    except ImportError:
        _active = numpy_backend
        BACKEND = "numpy"

gru_seq_forward = _active.gru_seq_forward
gru_seq_backward = _active.gru_seq_backward
