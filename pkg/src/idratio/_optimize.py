"""One-dimensional maximization: derivative-sign bracketing + golden-section refinement."""

import math

from .errors import EstimationFailedError

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo, hi, tol=1e-8, max_iter=500, return_bracket=False):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; stop when the bracket is narrower than ``tol``.

    Returns the bracket midpoint, or the final ``(a, b)`` with ``return_bracket``.
    """
    a, b = float(lo), float(hi)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
        it += 1
    if return_bracket:
        return a, b
    return 0.5 * (a + b)


def bracket_by_slope(slope, x0, lower, upper, step=0.5):
    """Find ``lo < hi`` with ``slope(lo) > 0 > slope(hi)`` by geometric expansion from ``x0``.

    ``slope`` is the derivative of the objective; ``lower``/``upper`` are hard
    limits. Raises EstimationFailedError when no sign change exists inside them.
    """
    x0 = min(max(x0, lower), upper)
    s0 = slope(x0)
    if s0 == 0:
        return x0 - 1e-12, x0 + 1e-12
    direction = 1.0 if s0 > 0 else -1.0
    prev, x = x0, x0
    while True:
        x = x + direction * step
        x = min(max(x, lower), upper)
        s = slope(x)
        if (s < 0) if direction > 0 else (s > 0):
            return (prev, x) if direction > 0 else (x, prev)
        if x in (lower, upper):
            raise EstimationFailedError(
                "could not bracket the likelihood maximum",
                {"searched_to": x, "slope_at_limit": s, "start": x0},
            )
        prev = x
        step *= 2.0
