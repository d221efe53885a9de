"""Select the flow kernel backend at import.

The compiled ``_ckernels`` module is used when present; setting the
environment variable ``MCFLAB_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

CURVE = _pykernels.CURVE
PROFILE = _pykernels.PROFILE
RAN_ALL = _pykernels.RAN_ALL
TRIGGERED = _pykernels.TRIGGERED
STALLED = _pykernels.STALLED
DIAG_COLUMNS = _pykernels.DIAG_COLUMNS

_backend = _pykernels
BACKEND = "python"
if not os.environ.get("MCFLAB_PURE_PYTHON"):
    try:
        from . import _ckernels as _backend  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _backend = _pykernels

advance = _backend.advance
measure = _backend.measure
