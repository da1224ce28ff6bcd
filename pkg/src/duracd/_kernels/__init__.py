"""Kernel backend selection.

The hot numerical loops (duration-model recursions and the recurrent
network forward/backward) exist twice: a Cython extension and a
pure-numpy fallback with identical signatures and semantics. The
compiled backend is preferred when importable; set DURACD_NO_EXTENSION=1
to force the fallback. ``BACKEND`` names the one in use.
"""

import os

from . import _py

if os.environ.get("DURACD_NO_EXTENSION"):
    _impl = _py
else:
    try:
        from . import _ext as _impl
    except ImportError:
        _impl = _py

BACKEND = _impl.NAME

acd_recursion = _impl.acd_recursion
acd_nll = _impl.acd_nll
acd_nll_grad = _impl.acd_nll_grad
acd_simulate = _impl.acd_simulate
hybrid_forward = _impl.hybrid_forward
hybrid_backward = _impl.hybrid_backward


def available_backends():
    """Mapping of backend name -> module for every importable backend."""
    out = {_py.NAME: _py}
    try:
        from . import _ext
        out[_ext.NAME] = _ext
    except ImportError:
        pass
    return out
