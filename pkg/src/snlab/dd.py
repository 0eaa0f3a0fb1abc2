"""Minimal double-double arithmetic (~31 significant digits).

Used only where plain doubles run out of resolution: the final polish of
ladder roots when a bracket shrinks below ~1e-13 relative, and endpoint
refinement of deep fundamental-domain preimages.  Values are pairs
(hi, lo) with hi + lo the represented number and |lo| <= ulp(hi)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a: float, b: float):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _quick_two_sum(a: float, b: float):
    s = a + b
    err = b - (s - a)
    return s, err


def _two_prod(a: float, b: float):
    p = a * b
    a_hi = _SPLITTER * a
    a_hi = a_hi - (a_hi - a)
    a_lo = a - a_hi
    b_hi = _SPLITTER * b
    b_hi = b_hi - (b_hi - b)
    b_lo = b - b_hi
    err = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, err


@dataclass(frozen=True)
class DD:
    hi: float
    lo: float = 0.0

    @staticmethod
    def of(x) -> "DD":
        if isinstance(x, DD):
            return x
        return DD(float(x), 0.0)

    def __float__(self) -> float:
        return self.hi + self.lo

    def __add__(self, other):
        o = DD.of(other)
        s, e = _two_sum(self.hi, o.hi)
        e += self.lo + o.lo
        s, e = _quick_two_sum(s, e)
        return DD(s, e)

    __radd__ = __add__

    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __sub__(self, other):
        return self + (-DD.of(other))

    def __rsub__(self, other):
        return DD.of(other) + (-self)

    def __mul__(self, other):
        o = DD.of(other)
        p, e = _two_prod(self.hi, o.hi)
        e += self.hi * o.lo + self.lo * o.hi
        p, e = _quick_two_sum(p, e)
        return DD(p, e)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = DD.of(other)
        q1 = self.hi / o.hi
        r = self - o * q1
        q2 = r.hi / o.hi
        r = r - o * q2
        q3 = r.hi / o.hi
        s, e = _quick_two_sum(q1, q2)
        s, e = _quick_two_sum(s, e + q3)
        return DD(s, e)

    def __lt__(self, other):
        o = DD.of(other)
        return self.hi < o.hi or (self.hi == o.hi and self.lo < o.lo)

    def __le__(self, other):
        o = DD.of(other)
        return self.hi < o.hi or (self.hi == o.hi and self.lo <= o.lo)

    def __gt__(self, other):
        return DD.of(other) < self

    def __ge__(self, other):
        return DD.of(other) <= self

    def abs(self) -> "DD":
        return -self if self.hi < 0 else self


def dd_from_sqrt(x: float) -> DD:
    """DD value of sqrt(x) refined by one Newton step in double-double."""
    r = math.sqrt(x)
    v = DD(r)
    xdd = DD(x)
    # one Newton iteration: r <- r - (r*r - x) / (2r)
    return v - (v * v - xdd) / (2.0 * r)
