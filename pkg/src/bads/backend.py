"""Selects the EP sweep implementation at import time.

The compiled extension is preferred; the numpy fallback is used when the
extension is missing (source checkout without a build) or when the
environment variable ``BADS_EP_BACKEND=python`` forces it.
"""

from __future__ import annotations

import os

from . import _ep_numpy

if os.environ.get("BADS_EP_BACKEND", "").lower() == "python":
    ep_sweep = _ep_numpy.ep_sweep
    BACKEND = "python"
else:
    try:
        from . import _ep_core

        ep_sweep = _ep_core.ep_sweep
        BACKEND = "compiled"
    except ImportError:
        ep_sweep = _ep_numpy.ep_sweep
        BACKEND = "python"


def backends() -> dict:
    """Both sweep implementations, keyed by name (used by the benchmark)."""
    table = {"python": _ep_numpy.ep_sweep}
    try:
        from . import _ep_core

        table["compiled"] = _ep_core.ep_sweep
    except ImportError:
        pass
    return table
