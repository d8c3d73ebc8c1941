"""Composite Gauss-Legendre rules and a doubling driver."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(breaks, nodes_per_panel):
    """Nodes and weights of Gauss-Legendre panels between consecutive breaks."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _leggauss(int(nodes_per_panel))
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def clustered_breaks(a, b, panels, ratio=0.5):
    """Panel boundaries on [a, b] shrinking geometrically toward both ends.

    With ``ratio`` < 1 each panel next to an endpoint is ``ratio`` times the
    width of its inner neighbour.
    """
    panels = max(int(panels), 1)
    k = np.arange(panels)
    depth = np.minimum(k, panels - 1 - k)
    widths = ratio ** (depth.max() - depth).astype(float)
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    return a + (b - a) * edges / edges[-1]


def relative_change(new, old):
    new, old = np.asarray(new), np.asarray(old)
    scale = max(float(np.max(np.abs(new))), 1e-300)
    return float(np.max(np.abs(new - old))) / scale


def converge(evaluate, start, tol, max_doublings=5):
    """Call ``evaluate(level)`` with level = start, 2*start, ... until the
    relative change drops below tol.  Returns (value, level, change)."""
    prev = evaluate(start)
    level = start
    change = np.inf
    for _ in range(max_doublings):
        level *= 2
        cur = evaluate(level)
        change = relative_change(cur, prev)
        prev = cur
        if change < tol:
            return cur, level, change
    raise ConvergenceError(f"no convergence after {max_doublings} doublings (change {change:.3e})", change)
