"""Chart kernel selection.

The compiled extension is used when present; CFGLAB_PURE=1 forces the
pure-Python fallback (useful for cross-checking and on platforms
without a C toolchain).
"""

import os

if os.environ.get("CFGLAB_PURE", "0") not in ("", "0"):
    from . import _chart_py as kernel
else:
    try:
        from . import _chart as kernel  # type: ignore[attr-defined]
    except ImportError:
        from . import _chart_py as kernel

COMPILED = kernel.COMPILED
