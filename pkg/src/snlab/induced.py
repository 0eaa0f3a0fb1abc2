"""The induced map that jumps orbits across the bottleneck in one step,
plus the interval-iteration variant with the fundamental-domain join rule."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, EmptyIntervalError
from .family import LOG_DERIV_FLOOR, UnimodalFamily, _DERIV_TINY
from .phase import Geometry, Ladder, _ChartCore, build_chart, tau_bar, theta_map


@dataclass
class InducedContext:
    """Fundamental-domain partition and induced-map evaluators at one
    parameter.  boundaries[k] is the (l+1-k)-th preimage of e, ascending,
    so boundaries = [e_{-l-1}, ..., e_{-1}, e] and the depth-i domain is
    [boundaries[l-i], boundaries[l-i+1])."""

    family: UnimodalFamily
    l: int
    theta: float
    gamma: float
    q: int
    boundaries: np.ndarray
    native: float

    @property
    def e(self) -> float:
        return float(self.boundaries[-1])

    @property
    def discontinuity_points(self) -> np.ndarray:
        return self.boundaries[:-1]

    def domain_of(self, x: float) -> Optional[int]:
        """Depth index i with x in E^{-i}, or None outside the union."""
        b = self.boundaries
        if not (b[0] <= x < b[-1]):
            return None
        pos = int(np.searchsorted(b, x, side="right")) - 1
        return (len(b) - 2) - pos

    def domain_interval(self, i: int) -> Tuple[float, float]:
        if not (0 <= i <= self.l):
            raise DomainError(f"depth {i} outside 0..{self.l}")
        pos = (len(self.boundaries) - 2) - i
        return float(self.boundaries[pos]), float(self.boundaries[pos + 1])


@dataclass
class IntervalImage:
    """Image of an interval under one join-ruled interval step."""

    pieces: List[Tuple[Tuple[float, float], int]]   # ((lo, hi), iterate count)


def build_induced(family: UnimodalFamily, ladder: Ladder, l: int,
                  theta: float, gamma: Optional[float] = None) -> InducedContext:
    """Backward-solve the l+2 preimage endpoints of e and validate them."""
    if gamma is None:
        gamma = theta_map(ladder, l, theta)
    if gamma <= 0.0:
        raise DomainError("induced contexts require gamma > 0")
    geom = ladder.geometry
    core = _ChartCore(family, ladder.sn, geom, gamma, anchor="e")
    bnd = np.asarray(core.bnd[:-1])   # drop f^q(e); ascending, ends at e
    if len(bnd) != l + 2:
        raise DomainError(
            f"parameter sits in rung {len(bnd) - 2}, not {l}; "
            "use an interior theta")
    native = family.native_of_gamma(gamma)
    # endpoint consistency: f^q maps each boundary to the next
    for k in range(len(bnd) - 1):
        v = bnd[k]
        for _ in range(geom.q):
            v = family.eval_native(v, native)[0]
        if abs(v - bnd[k + 1]) > 1e-10 * max(1.0, abs(bnd[k + 1])):
            raise DomainError(
                f"preimage ladder inconsistent at index {k}: |f^q(b_k) - b_(k+1)| = "
                f"{abs(v - bnd[k + 1]):.3e}")
    return InducedContext(family=family, l=l, theta=theta, gamma=gamma,
                          q=geom.q, boundaries=bnd, native=native)


def induced_step(ctx: InducedContext, x: float) -> Tuple[float, int]:
    """One induced-map step: f^{iq+1} on the depth-i domain, f elsewhere."""
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x={x} outside [0,1]")
    i = ctx.domain_of(x)
    m = 1 if i is None else i * ctx.q + 1
    ev = ctx.family.eval_native
    for _ in range(m):
        x = ev(x, ctx.native)[0]
    return x, m


def induced_orbit_deriv(ctx: InducedContext, x0: float, n: int):
    """n induced steps with the chain-rule log derivative over all consumed
    base iterates.  Returns (orbit, log|D induced^n|, base count)."""
    if n < 1:
        raise DomainError("n >= 1 required")
    orbit = np.empty(n + 1)
    orbit[0] = x0
    x = x0
    logd = 0.0
    base = 0
    ev = ctx.family.eval_native
    for k in range(n):
        i = ctx.domain_of(x)
        m = 1 if i is None else i * ctx.q + 1
        for _ in range(m):
            fx, d1, _ = ev(x, ctx.native)
            ad = abs(d1)
            logd += LOG_DERIV_FLOOR if ad < _DERIV_TINY else math.log(ad)
            x = fx
            base += 1
        orbit[k + 1] = x
    return orbit, logd, base


def _advance_interval_once(family, native, lo, hi):
    """Exact image of [lo, hi] under one step of the unimodal map."""
    c = family.critical_point
    flo = family.eval_native(lo, native)[0]
    fhi = family.eval_native(hi, native)[0]
    a, b = (flo, fhi) if flo <= fhi else (fhi, flo)
    if lo < c < hi:
        b = max(b, family.eval_native(c, native)[0])
    return a, b


def _advance_interval(family, native, lo, hi, steps):
    for _ in range(steps):
        lo, hi = _advance_interval_once(family, native, lo, hi)
    return lo, hi


def breve_interval_step(ctx: InducedContext, interval: Tuple[float, float]) -> IntervalImage:
    """One interval step with the join rule.

    The interval is cut along the fundamental-domain endpoints; end pieces
    that do not contain a full fundamental domain are joined inward (an
    end piece lying outside the union counts the neighboring domain on its
    side: [e, f^q(e)) on the right, the next preimage below on the left).
    When exactly two partial pieces remain the larger piece's code wins,
    ties to the deeper piece.  Every surviving piece is advanced by its
    coded iterate count; the image has at most two components.
    """
    u, v = interval
    if not (v > u):
        raise EmptyIntervalError(f"empty interval ({u}, {v})")
    fam, native, q, l = ctx.family, ctx.native, ctx.q, ctx.l
    b = ctx.boundaries
    e = b[-1]
    cuts = [u] + [float(t) for t in b if u < t < v] + [v]
    pieces = []               # (lo, hi, code); code -1 = plain step
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        i = ctx.domain_of(mid)
        pieces.append([lo, hi, -1 if i is None else i])

    def _contains_full_domain(p):
        lo, hi, code = p
        if code >= 0:
            dlo, dhi = ctx.domain_interval(code)
            return lo <= dlo and hi >= dhi
        if lo >= e:           # right outside piece: counts [e, f^q(e))
            fq_e = e
            for _ in range(q):
                fq_e = fam.eval_native(fq_e, native)[0]
            return hi >= fq_e
        # left outside piece: counts the next preimage domain below, when
        # it exists within the monotone channel
        lo_dom, hi_dom = _left_neighbor_domain(ctx)
        if lo_dom is None:
            return False
        return lo <= lo_dom and hi >= hi_dom

    if len(pieces) >= 2:
        if not _contains_full_domain(pieces[0]):
            pieces[1][0] = pieces[0][0]
            pieces.pop(0)
        if len(pieces) >= 2 and not _contains_full_domain(pieces[-1]):
            pieces[-2][1] = pieces[-1][1]
            pieces.pop()
        if len(pieces) == 2 and not _contains_full_domain(pieces[0]) \
                and not _contains_full_domain(pieces[1]):
            w0 = pieces[0][1] - pieces[0][0]
            w1 = pieces[1][1] - pieces[1][0]
            keep = 0 if w0 >= w1 else 1      # tie goes to the deeper piece
            code = pieces[keep][2]
            pieces = [[pieces[0][0], pieces[1][1], code]]

    images = []
    for lo, hi, code in pieces:
        steps = 1 if code < 0 else code * q + 1
        img = _advance_interval(fam, native, lo, hi, steps)
        images.append((img, steps))
    images.sort(key=lambda t: t[0][0])
    merged: List[Tuple[List[float], int]] = []
    for (ilo, ihi), steps in images:
        if merged and ilo <= merged[-1][0][1] + 1e-15:
            merged[-1][0][1] = max(merged[-1][0][1], ihi)
            if ihi - ilo > merged[-1][0][1] - merged[-1][0][0]:
                merged[-1] = (merged[-1][0], steps)
        else:
            merged.append(([ilo, ihi], steps))
    return IntervalImage(pieces=[((p[0], p[1]), s) for p, s in merged])


def _left_neighbor_domain(ctx: InducedContext):
    """The would-be domain just below the union, or (None, None)."""
    if getattr(ctx, "_left_dom", None) is not None:
        return ctx._left_dom
    fam, native, q = ctx.family, ctx.native, ctx.q
    b0 = float(ctx.boundaries[0])
    crit = None
    c = fam.critical_point
    # monotone floor: stay above the critical point on the stable side
    lo = c + 1e-9
    v = lo
    for _ in range(q):
        v = fam.eval_native(v, native)[0]
    if v >= b0:
        ctx._left_dom = (None, None)
        return ctx._left_dom
    from .rootfind import newton_bracketed

    def fd(z):
        val, d1 = z, 1.0
        for _ in range(q):
            fv, g1, _ = fam.eval_native(val, native)
            d1 = g1 * d1
            val = fv
        return val - b0, d1

    z = newton_bracketed(fd, lo, b0)
    ctx._left_dom = (z, b0)
    return ctx._left_dom


# ---------------------------------------------------------------------------
# the limit map at the fold (diagnostic evaluator)


class LimitInducedMap:
    """Limit of the induced maps as the rung index grows, built from the
    gamma = 0 charts: plain map outside the channel, first-hit to the
    image of I^u on the unstable side, rotated phase transport on the
    stable side."""

    def __init__(self, family: UnimodalFamily, sn, geometry: Geometry,
                 theta: float):
        self.family = family
        self.geom = geometry
        self.theta = theta
        self.native = sn.gamma_sn_native
        self.chart_s = build_chart(family, sn, 0.0, "stable", geometry=geometry)
        self.chart_u = build_chart(family, sn, 0.0, "unstable", geometry=geometry)
        self._fq_e = self.chart_u.core._fq(geometry.e)

    def _invert_unstable(self, t: float) -> float:
        from .mather import _invert_unstable_phase
        return float(_invert_unstable_phase(self.chart_u, np.array([t]))[0])

    def __call__(self, x: float) -> float:
        g = self.geom
        fam, native = self.family, self.native
        if g.d <= x < g.a:
            ts = tau_bar(self.chart_s, x) % 1.0
            y = self._invert_unstable((ts - self.theta) % 1.0)
            return fam.eval_native(y, native)[0]
        if g.a < x < g.e:
            v = x
            for _ in range(100_000):
                if g.e <= v < self._fq_e:
                    return fam.eval_native(v, native)[0]
                v = fam.eval_native(v, native)[0]
            raise DomainError("first-hit iteration did not land in I^u")
        return fam.eval_native(x, native)[0]
