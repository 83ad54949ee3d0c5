"""Composite Simpson helpers on uniform grids, with doubling-based convergence checks."""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import QuadratureNotConverged

__all__ = ["simpson", "running_integral", "tail_integral", "until_stable"]


def running_integral(values, x, axis=-1):
    """``int_{x[0]}^{x[i]} f`` for every node ``i`` (first entry is 0)."""
    return cumulative_simpson(values, x=x, axis=axis, initial=0.0)


def tail_integral(values, x, axis=-1):
    """``int_{x[i]}^{x[-1]} f`` for every node ``i`` (last entry is 0).

    Accumulated backwards from the right end, so a tail that is tiny next to
    the full integral keeps its relative accuracy.
    """
    x = np.asarray(x, dtype=float)
    values = np.flip(np.asarray(values), axis=axis)
    back = cumulative_simpson(values, x=x[-1] - np.flip(x), axis=axis, initial=0.0)
    return np.flip(back, axis=axis)


def until_stable(evaluate, n0: int, rtol: float = 1e-8, atol: float = 1e-15, max_doublings: int = 8):
    """Call ``evaluate(n)`` with ``n = n0, 2 n0, ...`` until two results agree.

    Agreement is ``max|new - old| <= atol + rtol * max|new|``. Returns
    the finer result and the subinterval count that produced it.
    """
    n = n0
    old = np.asarray(evaluate(n))
    for _ in range(max_doublings):
        n *= 2
        new = np.asarray(evaluate(n))
        if np.max(np.abs(new - old)) <= atol + rtol * np.max(np.abs(new)):
            return new, n
        old = new
    worst = float(np.max(np.abs(new - old)))
    raise QuadratureNotConverged(f"no agreement after {max_doublings} doublings (last change {worst:.3g})")
