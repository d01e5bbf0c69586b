"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise the
numpy reference in ``_pykernels`` is used.  ``WEEDSEG_BACKEND=python``
forces the fallback, ``WEEDSEG_BACKEND=cython`` makes a missing extension
an import error.
"""

import os

from . import _pykernels

_choice = os.environ.get("WEEDSEG_BACKEND", "auto").lower()

kernels = _pykernels
compiled = None
if _choice != "python":
    try:
        from . import _ckernels as compiled
    except ImportError:
        if _choice == "cython":
            raise
    else:
        kernels = compiled

NAME = kernels.NAME


def available():
    """Return every importable backend module, fallback first."""
    mods = [_pykernels]
    if compiled is not None:
        mods.append(compiled)
    else:
        try:
            from . import _ckernels
        except ImportError:
            pass
        else:
            mods.append(_ckernels)
    return mods
