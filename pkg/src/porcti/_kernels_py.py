"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same semantics; the
package picks one at import time (see :mod:`porcti.kernels`).
"""

from __future__ import annotations

import math
from typing import Sequence

NEG_INF = float("-inf")


def _log(x: float) -> float:
    return math.log(x) if x > 0.0 else NEG_INF


def log_odds_posterior(
    prior: float,
    agrees: Sequence[int],
    p_agree_valid: Sequence[float],
    p_agree_invalid: Sequence[float],
) -> tuple[float, float]:
    """Return ``(log numerator_valid, log numerator_invalid)`` of two-class naive Bayes."""
    a = _log(prior)
    b = _log(1.0 - prior)
    for agree, pv, pi in zip(agrees, p_agree_valid, p_agree_invalid):
        if agree:
            a += _log(pv)
            b += _log(pi)
        else:
            a += _log(1.0 - pv)
            b += _log(1.0 - pi)
    return a, b


def posterior(
    prior: float,
    agrees: Sequence[int],
    p_agree_valid: Sequence[float],
    p_agree_invalid: Sequence[float],
) -> float:
    """Normalized posterior; NaN when both numerators vanish."""
    a, b = log_odds_posterior(prior, agrees, p_agree_valid, p_agree_invalid)
    if a == NEG_INF and b == NEG_INF:
        return math.nan
    if a == NEG_INF:
        return 0.0
    if b == NEG_INF:
        return 1.0
    # logistic of the log-odds, arranged so exp never overflows
    d = b - a
    if d > 0:
        e = math.exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(d))


def weighted_pick(weights: Sequence[float], u: float) -> int:
    """Index ``i`` with ``cumsum[i-1] <= u * total < cumsum[i]``."""
    total = 0.0
    for w in weights:
        total += w
    target = u * total
    acc = 0.0
    last = len(weights) - 1
    for i, w in enumerate(weights):
        acc += w
        if target < acc:
            return i
    return last
