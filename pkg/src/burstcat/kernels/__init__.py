"""Hot kernels: compiled extension when built, numpy fallback otherwise.

Set ``BURSTCAT_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
implementation that was selected at import.
"""

import os

from . import fallback

if os.environ.get("BURSTCAT_PURE_PYTHON", "") not in ("", "0"):
    _impl = fallback
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = fallback

BACKEND = "compiled" if _impl is not fallback else "python"

im2col3 = _impl.im2col3
col2im3 = _impl.col2im3
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
mog2_update = _impl.mog2_update


def compiled_module():
    """The compiled kernel module, or None if it is not available."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
