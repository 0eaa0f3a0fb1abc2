"""Time coordinates of the embedding flow near the fold.

The flow itself is never constructed.  Within one fundamental domain at
the bottleneck the fractional crossing time is computed as a ratio of
quadratures of 1/(f^q(z) - z); everywhere else the coordinate is extended
by the exact cocycle tau(f^q x) = tau(x) + 1, realized by walking orbits
into the bottleneck domain (forward by iteration, backward by bracketed
Newton solves of f^q).  The surrogate's residual error is of the order of
the displacement inside the bottleneck domain, which is why that domain is
chosen where the displacement is minimal.
"""

from __future__ import annotations

import bisect as _bisect
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (BracketLossError, DisplacementSignError, DomainError,
                     OrbitEscapeError, OutOfDomainError,
                     QuadratureNonMonotoneError)
from .family import UnimodalFamily
from .rootfind import bisect_secant, newton_bracketed
from .saddle import SaddleNodeData

_GL_NODES = 32
_noderef = np.polynomial.legendre.leggauss(_GL_NODES)
_GL_X, _GL_W = _noderef[0], _noderef[1]


# ---------------------------------------------------------------------------
# geometry: canonical d, e and the laminar windows


@dataclass(frozen=True)
class Geometry:
    """Once-per-family choice of chart base points at gamma = 0."""

    a: float
    d: float
    e: float
    q: int
    z0: float                 # repelling point hit by the orbit of e
    j_e: int                  # f^{j_e}(e) = z0
    crit_points: Tuple[float, ...]   # critical points of f^q at gamma = 0
    ebar: Tuple[Tuple[float, float], ...]  # laminar windows around the fold orbit


def _preimages(family, native, y, lo=0.0, hi=1.0, tol=1e-14):
    """Both preimages of y under the unimodal map, within [lo, hi]."""
    c = family.critical_point
    out = []
    fc = family.eval_native(c, native)[0]
    if y > fc:
        return out
    for (a_, b_) in ((lo, c), (c, hi)):
        fa = family.eval_native(a_, native)[0] - y
        fb = family.eval_native(b_, native)[0] - y
        if fa == 0.0:
            out.append(a_)
            continue
        if fb == 0.0:
            out.append(b_)
            continue
        if (fa > 0) == (fb > 0):
            continue
        x, _ = bisect_secant(lambda t: family.eval_native(t, native)[0] - y,
                             a_, b_, fa, fb)
        out.append(x)
    return out


def critical_points_of_iterate(family: UnimodalFamily, gamma: float,
                               q: Optional[int] = None) -> Tuple[float, ...]:
    """Critical points of f^q: the union of f^{-i}(c) for i < q."""
    if q is None:
        q = family.q
    native = family.check_gamma(gamma)
    level = [family.critical_point]
    allpts = set(level)
    for _ in range(q - 1):
        nxt = []
        for y in level:
            nxt.extend(_preimages(family, native, y))
        level = nxt
        allpts.update(level)
    return tuple(sorted(allpts))


def laminar_windows(family: UnimodalFamily, sn: SaddleNodeData, *,
                    halfwidth: float = 0.02, margin: float = 0.95):
    """Intervals around the fold orbit, shrunk so that no critical point of
    f^q lies inside any of them (and in particular c is excluded)."""
    crit = critical_points_of_iterate(family, 0.0, sn.q)
    wins = []
    for p in sn.orbit_of_a:
        below = max((t for t in crit if t < p), default=0.0)
        above = min((t for t in crit if t > p), default=1.0)
        wl = min(halfwidth, margin * (p - below))
        wr = min(halfwidth, margin * (above - p))
        wins.append((p - wl, p + wr))
    return tuple(wins)


def get_geometry(family: UnimodalFamily, sn: SaddleNodeData, *,
                 d_inset: float = 0.1, fq_image_margin: float = 0.85,
                 target_track=None, j_max: int = 30) -> Geometry:
    """Choose d on the local stable side and e on the local unstable side.

    The stable side is bounded not only by the nearest critical point of
    f^q but by the fold image f^q(c): below that level backward f^q-orbits
    leave the monotone channel, so every preimage ladder (and with it the
    fundamental-domain partition) must terminate above it.  d sits at
    ``d_inset`` of the way from that floor up to a.  e is a backward image
    of a repelling fixed point z0 (so the orbit of e is eventually periodic
    and avoids c), taken as deep into the admissible unstable window as the
    monotonicity of f^q allows.
    """
    native = sn.gamma_sn_native
    a = sn.a
    q = sn.q
    crit = critical_points_of_iterate(family, 0.0, q)
    below = max((t for t in crit if t < a), default=0.0)
    above = min((t for t in crit if t > a), default=1.0)
    fold_image = family.critical_point
    for _ in range(q):
        fold_image = family.eval_native(fold_image, native)[0]
    floor_pt = below
    if below < fold_image < a:
        floor_pt = fold_image
    d = floor_pt + d_inset * (a - floor_pt)

    # unstable extent: e must keep f^q(e) clear of the next critical point
    top_target = a + fq_image_margin * (above - a)

    def fq(x):
        v = x
        for _ in range(q):
            v = family.eval_native(v, native)[0]
        return v

    e_max, _ = bisect_secant(lambda t: fq(t) - top_target, a + 1e-6, above)
    lo_win = a + 0.1 * (e_max - a)

    if target_track is None:
        # interior repelling fixed point
        z0 = None
        for x0 in np.linspace(0.05, 0.95, 19):
            x = x0
            ok = True
            for _ in range(60):
                v, d1, _ = family.eval_native(x, native)
                if d1 == 1.0:
                    ok = False
                    break
                xn = x - (v - x) / (d1 - 1.0)
                if not (0.0 < xn < 1.0):
                    ok = False
                    break
                if abs(xn - x) < 1e-14:
                    x = xn
                    break
                x = xn
            if not ok:
                continue
            v, d1, _ = family.eval_native(x, native)
            if abs(v - x) < 1e-12 and abs(d1) > 1.0 + 1e-6 and 0.02 < x < 0.98:
                if z0 is None or abs(x - 0.5) < abs(z0 - 0.5):
                    z0 = x
        if z0 is None:
            raise DomainError("no interior repelling fixed point found")
    else:
        z0 = target_track

    best = None
    for j in range(1, j_max + 1):
        grid = np.linspace(lo_win, e_max, 4001)
        vals = np.empty(grid.size)
        for i, x in enumerate(grid):
            v = x
            for _ in range(j):
                v = family.eval_native(v, native)[0]
            vals[i] = v - z0
        sgn = np.sign(vals)
        for i in np.where(sgn[:-1] * sgn[1:] < 0)[0]:
            def fj(t, j=j):
                v = t
                for _ in range(j):
                    v = family.eval_native(v, native)[0]
                return v - z0
            x, _ = bisect_secant(fj, grid[i], grid[i + 1], vals[i], vals[i + 1])
            # orbit must stay clear of the critical point
            v, mind = x, abs(x - family.critical_point)
            for _ in range(j):
                v = family.eval_native(v, native)[0]
                mind = min(mind, abs(v - family.critical_point))
            if mind < 1e-3:
                continue
            if best is None or x > best[0]:
                best = (x, j)
    if best is None:
        raise DomainError("no admissible base point e found (no preimage of z0 in window)")
    e, j_e = best
    return Geometry(a=a, d=d, e=e, q=q, z0=z0, j_e=j_e, crit_points=crit,
                    ebar=laminar_windows(family, sn))


# ---------------------------------------------------------------------------
# chart core


class _ChartCore:
    """Boundary ladder + bottleneck quadrature for one (family, gamma).

    ``anchor`` selects the ladder base for gamma > 0: 'd' builds forward
    images of d, 'e' builds backward preimages of e (plus one forward
    image).  The two ladders carry independent quadrature conventions, so
    comparing coordinates across them measures the surrogate error of the
    fractional phase; within one ladder the cocycle is exact.
    """

    def __init__(self, family, sn, geom, gamma, *, anchor="d", depth_b=48,
                 quad_tol=1e-10, pull_budget=600, max_depth=40000):
        self.family = family
        self.sn = sn
        self.geom = geom
        self.gamma = float(gamma)
        self.native = family.check_gamma(gamma)
        self.q = geom.q
        self.anchor = anchor
        self.quad_tol = quad_tol
        self.pull_budget = pull_budget
        self.max_depth = max_depth
        self._phi_cache: Dict[float, float] = {}
        d, e, a = geom.d, geom.e, geom.a
        self.a = a
        if gamma > 0.0:
            self.top = self._fq(e)
            if anchor == "d":
                bnd = [d]
                while bnd[-1] < self.top:
                    bnd.append(self._fq(bnd[-1]))
                    if len(bnd) > max_depth:
                        raise OrbitEscapeError("crossing did not complete within the depth cap")
                self.base_pos = 0
            else:
                # Preimages of e exist on the increasing channel branch only
                # while the target stays above f^q(floor); the final endpoint
                # may sit on the decreasing branch just below the critical
                # point (the deepest fundamental domain wraps around it).
                crit_below = max((t for t in geom.crit_points if t < geom.a), default=0.0)
                floor = crit_below + 1e-9
                floor_val = self._fq(floor)
                back = [self._fq(e), e]      # descending from f^q(e)
                while back[-1] > d:
                    y = back[-1]
                    if y <= floor_val:
                        break        # below the reach of the monotone branch
                    back.append(self._pull_once(y, floor, y))
                    if len(back) > max_depth:
                        raise OrbitEscapeError("preimage ladder did not reach d within the cap")
                bnd = back[::-1]
                self.base_pos = len(bnd) - 2   # position of e
            self.bnd = bnd
            disp = [self._fq(b) - b for b in bnd[:-1]]
            if min(disp) <= 0.0:
                raise DisplacementSignError(
                    f"displacement changes sign at gamma={gamma} (wrong side of the fold)")
            self.b0_pos = int(np.argmin(disp))
            self.kind = "crossing"
        elif gamma == 0.0:
            self.kind = "split"
            self.top = self._fq(e)
            # stable ladder grows toward a from d; unstable toward a from e
            self._stable = [d]
            self._unstable = [self.top, e]   # descending
            self._grow_stable(depth_b + 4)
            self._grow_unstable(depth_b + 4)
            self.b0_stable = depth_b
            self.b0_unstable = depth_b
        else:
            raise DisplacementSignError("charts are defined for gamma >= 0 only")
        self._setup_bottleneck()

    # -- map helpers
    def _fq(self, x):
        v = x
        for _ in range(self.q):
            v = self.family.eval_native(v, self.native)[0]
        return v

    def _fq_d(self, x):
        v, d1 = x, 1.0
        for _ in range(self.q):
            fv, g1, _ = self.family.eval_native(v, self.native)
            d1 = g1 * d1
            v = fv
        return v, d1

    def _pull_once(self, y, lo, hi):
        """Solve f^q(z) = y for z in [lo, hi]."""
        return newton_bracketed(lambda z: (self._fq_d(z)[0] - y, self._fq_d(z)[1]),
                                lo, hi, x0=0.5 * (lo + hi))

    def _pull_in_domain(self, y, lo, hi):
        """Pullback with a bracket widened around one ladder domain; the
        widening absorbs ulp-level misalignment of Newton-built boundaries."""
        w = hi - lo
        for pad in (0.0, 1e-9, 1e-6, 1e-3):
            try:
                return self._pull_once(y, lo - pad * w, hi + pad * w)
            except BracketLossError:
                continue
        raise BracketLossError(
            f"pullback target {y} not bracketed by domain [{lo}, {hi}]")

    # -- gamma = 0 ladder growth
    def _grow_stable(self, upto):
        while len(self._stable) <= upto and len(self._stable) < self.max_depth:
            self._stable.append(self._fq(self._stable[-1]))

    def _grow_unstable(self, upto):
        a = self.a
        while len(self._unstable) <= upto + 1 and len(self._unstable) < self.max_depth:
            y = self._unstable[-1]
            seed_gap = y - a
            lo = a + max(1e-15, 1e-9 * seed_gap)
            z = self._pull_once(y, lo, y)
            self._unstable.append(z)

    # -- bottleneck quadrature
    def _setup_bottleneck(self):
        if self.kind == "crossing":
            self.b0 = self.bnd[self.b0_pos]
            self.b1 = self.bnd[self.b0_pos + 1]
        else:
            self.b0_s = self._stable[self.b0_stable]
            self.b1_s = self._stable[self.b0_stable + 1]
            self.b0_u = self._unstable[self.b0_unstable + 1]
            self.b1_u = self._unstable[self.b0_unstable]

    def _displacement(self, z):
        return self._fq(z) - z

    def _quad(self, lo, hi, tol=None):
        if lo == hi:
            return 0.0
        if tol is None:
            tol = self.quad_tol
        return self._quad_rec(lo, hi, tol, 0)

    def _panel(self, lo, hi):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        acc = 0.0
        for xi, wi in zip(_GL_X, _GL_W):
            z = mid + half * xi
            X = self._displacement(z)
            if X <= 0.0:
                raise QuadratureNonMonotoneError(
                    f"nonpositive displacement at z={z} inside the bottleneck domain")
            acc += wi / X
        return acc * half

    def _quad_rec(self, lo, hi, tol, depth):
        whole = self._panel(lo, hi)
        mid = 0.5 * (lo + hi)
        left = self._panel(lo, mid)
        right = self._panel(mid, hi)
        if abs(left + right - whole) <= tol * abs(left + right) or depth >= 24:
            return left + right
        return (self._quad_rec(lo, mid, tol, depth + 1)
                + self._quad_rec(mid, hi, tol, depth + 1))

    def _frac_in(self, x, lo, hi, tol=None):
        key = (lo, hi)
        total = self._phi_cache.get(key)
        if total is None:
            total = self._quad(lo, hi, tol)
            self._phi_cache[key] = total
        if x <= lo:
            return 0.0
        if x >= hi:
            return 1.0
        return min(1.0, max(0.0, self._quad(lo, x, tol) / total))

    # -- phase for the crossing chart (gamma > 0)
    def psi(self, x):
        if self.kind != "crossing":
            raise OutOfDomainError("psi is the crossing-chart phase; use psi_side at gamma=0")
        bnd = self.bnd
        if x < bnd[0] and bnd[0] - x <= 1e-9:
            x = bnd[0]
        if x > bnd[-1] and x - bnd[-1] <= 1e-9:
            x = bnd[-1]
        if x < bnd[0] or x > bnd[-1]:
            raise OutOfDomainError(f"x={x} outside chart domain [{bnd[0]}, {bnd[-1]}]")
        k = _bisect.bisect_right(bnd, x) - 1
        if k == len(bnd) - 1:
            k -= 1
        if x == bnd[k]:
            return float(k)
        j = k - self.b0_pos
        y = x
        if j < 0:
            for _ in range(-j):
                y = self._fq(y)
        elif j > 0:
            if j > self.pull_budget:
                return k + self._frac_in(x, bnd[k], bnd[k + 1])
            for step in range(j):
                pos = k - step
                y = self._pull_in_domain(y, bnd[pos - 1], bnd[pos])
        return k + self._frac_in(y, self.b0, self.b1)

    # -- phase for the split charts (gamma = 0)
    def psi_stable(self, x):
        a = self.a
        if not (self._stable[0] <= x < a):
            raise OutOfDomainError(f"x={x} outside stable domain [{self._stable[0]}, {a})")
        while self._stable[-1] < x and len(self._stable) < self.max_depth:
            self._grow_stable(2 * len(self._stable))
        st = self._stable
        if x > st[-1]:
            # deeper than the ladder cap: parabolic-channel extrapolation
            beta = 0.5 * abs(self.sn.second_deriv)
            extra = (1.0 / (a - x) - 1.0 / (a - st[-1])) / beta
            return (len(st) - 1) + extra
        k = _bisect.bisect_right(st, x) - 1
        if x == st[k]:
            return float(k)
        j = k - self.b0_stable
        y = x
        if j < 0:
            for _ in range(-j):
                y = self._fq(y)
        elif j > 0:
            if j > self.pull_budget:
                return k + self._frac_in(x, st[k], st[k + 1])
            for step in range(j):
                pos = k - step
                y = self._pull_in_domain(y, st[pos - 1], st[pos])
        return k + self._frac_in(y, self.b0_s, self.b1_s)

    def psi_unstable(self, x):
        """Phase on (a, f^q(e)] with psi(e) = 0: negative toward a."""
        a = self.a
        if not (a < x <= self._unstable[0]):
            raise OutOfDomainError(f"x={x} outside unstable domain ({a}, {self._unstable[0]}]")
        while self._unstable[-1] > x and len(self._unstable) < self.max_depth:
            self._grow_unstable(2 * len(self._unstable))
        un = self._unstable          # descending: un[i] has phase 1 - i
        if x < un[-1]:
            beta = 0.5 * abs(self.sn.second_deriv)
            extra = (1.0 / (x - a) - 1.0 / (un[-1] - a)) / beta
            return (1 - (len(un) - 1)) - extra
        lo_i = 0
        hi_i = len(un) - 1
        while hi_i - lo_i > 1:      # un[lo_i] >= x >= un[hi_i]
            mid = (lo_i + hi_i) // 2
            if un[mid] >= x:
                lo_i = mid
            else:
                hi_i = mid
        if x == un[lo_i]:
            return float(1 - lo_i)
        k = hi_i                     # x in [un[k], un[k-1])  phase base 1-k
        j = k - (self.b0_unstable + 1)
        y = x
        if j > 0:
            for _ in range(j):
                y = self._fq(y)
        elif j < 0:
            if -j > self.pull_budget:
                return (1 - k) + self._frac_in(x, un[k], un[k - 1])
            for step in range(-j):
                pos = k + step + 1
                y = self._pull_in_domain(y, un[pos], un[pos - 1])
        return (1 - (self.b0_unstable + 1)) + self._frac_in(y, self.b0_u, self.b1_u)

    def integer_depth_unstable(self, x) -> int:
        """floor of the unstable phase, by ladder position only (fast)."""
        a = self.a
        if not (a < x <= self._unstable[0]):
            raise OutOfDomainError("x outside unstable domain")
        while self._unstable[-1] > x and len(self._unstable) < self.max_depth:
            self._grow_unstable(2 * len(self._unstable))
        un = self._unstable
        if x < un[-1]:
            beta = 0.5 * abs(self.sn.second_deriv)
            extra = (1.0 / (x - a) - 1.0 / (un[-1] - a)) / beta
            return int(math.floor((1 - (len(un) - 1)) - extra))
        lo_i, hi_i = 0, len(un) - 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) // 2
            if un[mid] >= x:
                lo_i = mid
            else:
                hi_i = mid
        if x == un[lo_i]:
            return 1 - lo_i
        return -lo_i


# ---------------------------------------------------------------------------
# public chart object


@dataclass
class PhaseChart:
    """Numerical time coordinate on one side of the bottleneck."""

    d: float
    e: float
    gamma: float
    side: str                     # 'stable' | 'unstable'
    q: int
    bottleneck: Tuple[float, float]
    phase_table: np.ndarray       # (z, fractional phase) samples in the bottleneck domain
    core: _ChartCore = field(repr=False)
    base_phase: float = 0.0

    def tau_bar(self, x: float) -> float:
        return tau_bar(self, x)


def build_chart(family: UnimodalFamily, sn: SaddleNodeData, gamma: float,
                side: str, geometry: Optional[Geometry] = None,
                core: Optional[_ChartCore] = None, **opts) -> PhaseChart:
    """Chart with exact unit cocycle and quadrature fractional phase.

    The base point is d ('stable') or e ('unstable'); gamma = 0 yields the
    one-sided charts on [d, a) and (a, f^q(e)].
    """
    if side not in ("stable", "unstable"):
        raise DomainError(f"side must be 'stable' or 'unstable', got {side!r}")
    if geometry is None:
        geometry = get_geometry(family, sn)
    if core is None:
        anchor = "d" if side == "stable" else "e"
        core = _ChartCore(family, sn, geometry, gamma, anchor=anchor, **opts)
    if core.kind == "crossing":
        b0, b1 = core.b0, core.b1
    else:
        b0, b1 = (core.b0_s, core.b1_s) if side == "stable" else (core.b0_u, core.b1_u)
    zs = np.linspace(b0, b1, 21)
    # refinement check: fractional phases stable under a tolerance drop
    fr_hi = np.array([core._frac_in(z, b0, b1) for z in zs])
    core._phi_cache.pop((b0, b1), None)
    fr_lo = np.array([core._frac_in(z, b0, b1, tol=core.quad_tol * 100) for z in zs])
    core._phi_cache.pop((b0, b1), None)
    core._frac_in(b0 + 0.5 * (b1 - b0), b0, b1)  # re-prime cache at full tolerance
    if np.max(np.abs(fr_hi - fr_lo)) > 1e-8:
        raise QuadratureNonMonotoneError("fractional phase did not stabilize under refinement")
    if np.any(np.diff(fr_hi) <= 0.0):
        raise QuadratureNonMonotoneError("fractional phase is not strictly monotone")
    chart = PhaseChart(d=geometry.d, e=geometry.e, gamma=gamma, side=side,
                       q=geometry.q, bottleneck=(b0, b1),
                       phase_table=np.column_stack([zs, fr_hi]), core=core)
    if core.kind == "crossing":
        base = geometry.d if side == "stable" else geometry.e
        chart.base_phase = core.psi(base)
    else:
        chart.base_phase = 0.0
    return chart


def tau_bar(chart: PhaseChart, x: float) -> float:
    """Extended time coordinate: integer steps into the bottleneck plus the
    quadrature fraction; exact unit increment under f^q by construction."""
    core = chart.core
    if core.kind == "crossing":
        return core.psi(x) - chart.base_phase
    if chart.side == "stable":
        return core.psi_stable(x)
    return core.psi_unstable(x)


def tau(chart: PhaseChart, x: float) -> float:
    return tau_bar(chart, x) % 1.0


def crossing_time(family: UnimodalFamily, sn: SaddleNodeData,
                  geometry: Geometry, gamma: float, **opts) -> float:
    """Total bottleneck crossing time from d to e at gamma > 0."""
    core = _ChartCore(family, sn, geometry, gamma, **opts)
    return core.psi(geometry.e)


# ---------------------------------------------------------------------------
# the gamma ladder and reparameterization


@dataclass
class Ladder:
    """Sequence gamma_l with f^{ql}(d) = e, plus cached crossing machinery."""

    family: UnimodalFamily
    sn: SaddleNodeData
    geometry: Geometry
    l_min: int
    l_max: int
    gamma_l: Dict[int, float]
    residual_l: Dict[int, float] = field(default_factory=dict)

    def gamma(self, l: int) -> float:
        if l not in self.gamma_l:
            raise DomainError(f"rung {l} outside ladder range [{self.l_min}, {self.l_max}]")
        return self.gamma_l[l]

    def rung_of_gamma(self, gamma: float) -> int:
        ls = sorted(self.gamma_l)
        gs = [self.gamma_l[l] for l in ls]   # decreasing
        if gamma > gs[0] or gamma < gs[-1]:
            raise DomainError(f"gamma={gamma} outside ladder range")
        lo, hi = 0, len(ls) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if gs[mid] >= gamma:
                lo = mid
            else:
                hi = mid
        return ls[lo]


def _crossing_count(family, native, d, e, q, cap=10**7):
    if family.kernel == "quadratic":
        from . import _kernels
        n, _ = _kernels.count_crossing(native, d, e, q, cap)
        return n
    x = d
    n = 0
    while x < e:
        for _ in range(q):
            x = family.eval_native(x, native)[0]
        n += 1
        if n > cap:
            return -1
    return n


def _fql_from_d(family, native, d, q, l):
    if family.kernel == "quadratic":
        from . import _kernels
        return _kernels.step_q(native, d, q, l)
    x = d
    for _ in range(q * l):
        x = family.eval_native(x, native)[0]
    return x


def _dd_fql_residual(family, gamma, d, q, l, e):
    """Double-double residual f^{ql}(d) - e for the built-in quadratic family."""
    from .dd import DD
    if family.kernel != "quadratic":
        return None
    mu = DD(family.gamma_offset) - DD(family.gamma_sign) * DD(gamma)
    x = DD(d)
    one = DD(1.0)
    for _ in range(q * l):
        x = mu * x * (one - x)
    return float(x - DD(e))


def gamma_ladder(family: UnimodalFamily, sn: SaddleNodeData, d: float,
                 e: float, l_range: Tuple[int, int],
                 geometry: Optional[Geometry] = None, *,
                 extended: bool = True) -> Ladder:
    """Root of f^{ql}(d) = e per rung, bracketed by crossing counts.

    Brackets are seeded from the previous rung through the 1/sqrt(gamma)
    law; the double-double evaluator refines the final ulp when the
    float bracket collapses below 1e-13 relative.
    """
    l_min, l_max = l_range
    if geometry is None:
        geometry = get_geometry(family, sn)
    beta = 0.5 * abs(sn.second_deriv)
    cc = abs(sn.param_deriv)
    table: Dict[int, float] = {}
    residual: Dict[int, float] = {}
    u_prev: List[Tuple[int, float]] = []   # (l, 1/sqrt(gamma_l)) for prediction

    for l in range(l_min, l_max + 1):
        if len(u_prev) >= 2:
            (l1, u1), (l2, u2) = u_prev[-2], u_prev[-1]
            u_hat = u2 + (u2 - u1) * (l - l2) / (l2 - l1)
            g_hat = 1.0 / (u_hat * u_hat)
        else:
            g_hat = math.pi ** 2 / (beta * cc * l * l)
        lo, hi = 0.9 * g_hat, 1.1 * g_hat
        native_of = family.native_of_gamma
        for _ in range(200):
            if _crossing_count(family, native_of(hi), d, e, sn.q) <= l:
                break
            hi *= 1.2
        else:
            raise BracketLossError(f"could not bracket rung {l} from above")
        for _ in range(200):
            n_lo = _crossing_count(family, native_of(lo), d, e, sn.q)
            if n_lo > l or n_lo == -1:
                break
            lo *= 0.85
        else:
            raise BracketLossError(f"could not bracket rung {l} from below")
        # shrink the count bracket until the upper end crosses in exactly l steps
        while _crossing_count(family, native_of(hi), d, e, sn.q) != l:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                raise BracketLossError(f"count bracket collapsed at rung {l}")
            if _crossing_count(family, native_of(mid), d, e, sn.q) <= l:
                hi = mid
            else:
                lo = mid

        def h(g):
            return _fql_from_d(family, native_of(g), d, sn.q, l) - e

        root, fr = bisect_secant(h, lo, hi, ftol=0.0)
        if extended and family.kernel == "quadratic":
            # polish the last ulp with the double-double evaluator
            up = math.nextafter(root, math.inf)
            dn = math.nextafter(root, -math.inf)
            cands = [(abs(_dd_fql_residual(family, g, d, sn.q, l, e)), g)
                     for g in (dn, root, up)]
            cands.sort()
            root = cands[0][1]
            fr = h(root)
        table[l] = root
        residual[l] = fr
        u_prev.append((l, 1.0 / math.sqrt(root)))
    return Ladder(family=family, sn=sn, geometry=geometry, l_min=l_min,
                  l_max=l_max, gamma_l=table, residual_l=residual)


def theta_map(ladder: Ladder, l: int, theta: float, *, warm=None) -> float:
    """gamma in [gamma_{l+1}, gamma_l] with total crossing time l + theta."""
    if not (0.0 <= theta <= 1.0):
        raise DomainError("theta must lie in [0, 1]")
    if theta == 0.0:
        return ladder.gamma(l)
    if theta == 1.0:
        return ladder.gamma(l + 1)
    g_hi = ladder.gamma(l)          # T = l here
    g_lo = ladder.gamma(l + 1)      # T = l + 1 here
    fam, sn, geom = ladder.family, ladder.sn, ladder.geometry
    target = l + theta

    def func(g):
        return crossing_time(fam, sn, geom, g) - target

    lo, hi = g_lo, g_hi
    flo = fhi = None
    if warm is not None:
        gw, tw = warm
        if g_lo < gw < g_hi:
            fw = tw - target if tw is not None else func(gw)
            if fw > 0:
                lo, flo = gw, fw
            else:
                hi, fhi = gw, fw
    # T is decreasing in gamma: func(lo) > 0 > func(hi)
    root, _ = bisect_secant(lambda g: -func(g), lo, hi,
                            None if flo is None else -flo,
                            None if fhi is None else -fhi,
                            ftol=1e-11)
    return root


def theta_of_gamma(ladder: Ladder, gamma: float) -> Tuple[int, float]:
    """Inverse reparameterization: rung index and fractional crossing time."""
    l = ladder.rung_of_gamma(gamma)
    t = crossing_time(ladder.family, ladder.sn, ladder.geometry, gamma)
    theta = t - l
    if theta < 0.0:
        theta = 0.0
    elif theta > 1.0:
        theta = 1.0
    return l, theta


def l2gamma_sequence(ladder: Ladder) -> np.ndarray:
    ls = np.array(sorted(ladder.gamma_l), dtype=float)
    gs = np.array([ladder.gamma_l[int(l)] for l in ls])
    return np.column_stack([ls, gs, ls * ls * gs])


def ladder_stability(ladder: Ladder, l_lo: int, l_hi: int):
    """(range variation, max successive step) of l^2 gamma_l on [l_lo, l_hi].

    Range variation is (max-min)/mean over the window; the step metric is
    the largest relative jump between consecutive rungs (the Cauchy sense
    in which the sequence stabilizes).
    """
    vals = np.array([l * l * ladder.gamma_l[l] for l in range(l_lo, l_hi + 1)])
    rng = (vals.max() - vals.min()) / vals.mean()
    steps = np.abs(np.diff(vals)) / vals[:-1]
    return float(rng), float(steps.max())


def richardson_limit(ladder: Ladder, l: int) -> float:
    """Limit of l^2 gamma_l by Richardson extrapolation in 1/l using rungs l and l/2."""
    half = l // 2
    x_l = l * l * ladder.gamma_l[l]
    x_h = half * half * ladder.gamma_l[half]
    return 2.0 * x_l - x_h


# ---------------------------------------------------------------------------
# local first-hit map and rotation residuals


def local_first_hit(family: UnimodalFamily, chart_s: PhaseChart,
                    chart_u: PhaseChart, x: float, theta: float,
                    cap: int = 10**6):
    """First f^q-iterate of x landing in I^u, plus the circle distance of
    its unstable phase from the rotated stable phase of x."""
    core = chart_s.core
    geom = core.geom
    e = geom.e
    fq_e = core.top
    y = x
    for _ in range(cap):
        if e <= y < fq_e:
            break
        y = core._fq(y)
    else:
        raise OrbitEscapeError("orbit did not reach I^u within the cap")
    ts = tau_bar(chart_s, x) % 1.0
    tu = tau_bar(chart_u, y) % 1.0
    target = (ts - theta) % 1.0
    d = abs(tu - target) % 1.0
    residual = min(d, 1.0 - d)
    return y, residual


def rotation_residuals(ladder: Ladder, l: int, theta: float,
                       n_samples: int = 20, sample_lo: float = 0.05,
                       sample_hi: float = 0.95):
    """Rotation residuals at evenly spaced stable-side phases in I^s."""
    fam, sn, geom = ladder.family, ladder.sn, ladder.geometry
    g = theta_map(ladder, l, theta)
    chart_s = build_chart(fam, sn, g, "stable", geometry=geom)
    chart_u = build_chart(fam, sn, g, "unstable", geometry=geom)
    d = geom.d
    fq_d = chart_s.core._fq(d)
    res = []
    for t in np.linspace(sample_lo, sample_hi, n_samples):
        x = d + t * (fq_d - d)
        _, r = local_first_hit(fam, chart_s, chart_u, x, theta)
        res.append(r)
    return np.array(res)


# ---------------------------------------------------------------------------
# reparameterization diagnostics


def dg_normalized(ladder: Ladder, l: int, grid: int = 64) -> np.ndarray:
    """|Dg_l| on a theta grid, normalized by the rung width."""
    thetas = np.linspace(0.0, 1.0, grid)
    gs = []
    warm = None
    for t in thetas:
        g = theta_map(ladder, l, float(t), warm=warm)
        warm = (g, l + float(t))
        gs.append(g)
    gs = np.array(gs)
    width = abs(ladder.gamma(l) - ladder.gamma(l + 1))
    dg = np.abs(np.gradient(gs, thetas))
    return dg / width


def measure_transfer_ratio(ladder: Ladder, l: int,
                           intervals: Sequence[Tuple[float, float]]) -> float:
    """m(g_l(S)) / (gamma_l - gamma_{l+1}) for S a union of theta intervals."""
    total = 0.0
    for (t0, t1) in intervals:
        g0 = theta_map(ladder, l, t0)
        g1 = theta_map(ladder, l, t1)
        total += abs(g1 - g0)
    return total / abs(ladder.gamma(l) - ladder.gamma(l + 1))


def critical_landing_in_iu(family: UnimodalFamily, geom: Geometry,
                           gamma: float, cap: int = 10**6):
    """First point of the critical orbit landing in I^u, with its index."""
    native = family.check_gamma(gamma)
    e = geom.e
    fq_e = e
    for _ in range(geom.q):
        fq_e = family.eval_native(fq_e, native)[0]
    v = family.critical_point
    for i in range(1, cap + 1):
        v = family.eval_native(v, native)[0]
        if e <= v < fq_e:
            return v, i
    raise OrbitEscapeError("critical orbit did not reach I^u")


def theta_sharp(ladder: Ladder, l: int, scan: int = 33, tol: float = 1e-6):
    """Jump location of theta -> c^u(g_l(theta)) within rung l."""
    fam, geom = ladder.family, ladder.geometry

    def landing_index(theta):
        g = theta_map(ladder, l, theta)
        _, idx = critical_landing_in_iu(fam, geom, g)
        return idx

    thetas = np.linspace(0.0, 1.0, scan)
    idxs = [landing_index(float(t)) for t in thetas]
    for i in range(scan - 1):
        if idxs[i + 1] != idxs[i]:
            lo, hi = thetas[i], thetas[i + 1]
            ilo = idxs[i]
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if landing_index(mid) == ilo:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
    raise OrbitEscapeError(f"no landing-index jump found in rung {l}")
