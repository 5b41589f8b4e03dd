"""Select the compiled kernels when built, else the pure-Python fallback.

Set ``PORCTI_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by tests that check the two backends agree).
"""

import os

from porcti import _kernels_py

if os.environ.get("PORCTI_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from porcti import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

posterior = _impl.posterior
log_odds_posterior = _impl.log_odds_posterior
weighted_pick = _impl.weighted_pick

__all__ = ["BACKEND", "posterior", "log_odds_posterior", "weighted_pick"]
