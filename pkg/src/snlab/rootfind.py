"""Bracketed scalar root finding: bisection with secant acceleration.

All solvers here require a sign change and never step outside the bracket,
which keeps them safe on the nearly-flat functions that show up around the
bottleneck (passage counts, deep preimages).
"""

from __future__ import annotations

from .errors import BracketLossError


def bisect_secant(func, lo, hi, flo=None, fhi=None, *, xtol=0.0, ftol=0.0,
                  max_iter=200):
    """Root of ``func`` in [lo, hi]; returns (x, f(x)).

    Secant step when it falls inside the bracket, bisection otherwise.
    ``xtol`` is absolute; with the default 0 the bracket is driven to
    floating-point exhaustion.
    """
    if flo is None:
        flo = func(lo)
    if fhi is None:
        fhi = func(hi)
    if flo == 0.0:
        return lo, flo
    if fhi == 0.0:
        return hi, fhi
    if (flo > 0) == (fhi > 0):
        raise BracketLossError(f"no sign change on [{lo!r}, {hi!r}]")
    best_x, best_f = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        # secant proposal
        x = None
        if fhi != flo:
            x = hi - fhi * (hi - lo) / (fhi - flo)
            if not (lo < x < hi):
                x = None
        if x is None:
            x = 0.5 * (lo + hi)
        if x == lo or x == hi:
            x = 0.5 * (lo + hi)
            if x == lo or x == hi:
                break
        fx = func(x)
        if abs(fx) < abs(best_f):
            best_x, best_f = x, fx
        if fx == 0.0:
            return x, 0.0
        if abs(fx) <= ftol:
            return x, fx
        if (fx > 0) == (fhi > 0):
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
    return best_x, best_f


def newton_bracketed(func_dfunc, lo, hi, x0=None, *, tol=1e-14, max_iter=60):
    """Safeguarded Newton for f with derivative; falls back to bisection.

    ``func_dfunc(x) -> (f, df)``.  Keeps a sign-changing bracket at all
    times; raises BracketLossError if the endpoints have equal signs.
    """
    flo, _ = func_dfunc(lo)
    fhi, _ = func_dfunc(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketLossError(f"no sign change on [{lo!r}, {hi!r}]")
    x = 0.5 * (lo + hi) if x0 is None or not (lo < x0 < hi) else x0
    for _ in range(max_iter):
        f, df = func_dfunc(x)
        if f == 0.0:
            return x
        if (f > 0) == (fhi > 0):
            hi = x
        else:
            lo = x
        step_ok = df != 0.0
        if step_ok:
            xn = x - f / df
            step_ok = lo < xn < hi
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * max(1.0, abs(x)):
            return xn
        x = xn
    return x
