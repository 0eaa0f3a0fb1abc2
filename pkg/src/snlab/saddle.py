"""Fold location, signed-parameter orientation, and repelling-point tracks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import (ContinuationLostError, DegenerateSaddleNodeError,
                     DomainError, NoConvergenceError, OrientationError)
from .family import UnimodalFamily, iterate_with_derivs

_PARAM_STEP = 1e-7


@dataclass(frozen=True)
class SaddleNodeData:
    """Located fold: periodic point of period q with unit multiplier."""

    gamma_sn_native: float
    a: float
    orbit_of_a: Tuple[float, ...]
    second_deriv: float
    param_deriv: float
    q: int

    @property
    def nondegenerate(self) -> bool:
        return self.second_deriv * self.param_deriv > 0.0


@dataclass
class PeriodicPointTrack:
    """A periodic point followed over a set of signed parameters."""

    period: int
    point_at: Dict[float, float] = field(default_factory=dict)
    multiplier_at: Dict[float, float] = field(default_factory=dict)
    complete: bool = True

    def gammas(self):
        return sorted(self.point_at)

    def nearest(self, gamma: float) -> Tuple[float, float]:
        g = min(self.point_at, key=lambda t: abs(t - gamma))
        return g, self.point_at[g]


def _orbit_derivs_native(family, x, native, n):
    v, d1, d2 = x, 1.0, 0.0
    ev = family.eval_native
    for _ in range(n):
        fv, g1, g2 = ev(v, native)
        d2 = g2 * d1 * d1 + g1 * d2
        d1 = g1 * d1
        v = fv
    return v, d1, d2


def locate_saddle_node(family: UnimodalFamily, q: int, seed) -> SaddleNodeData:
    """Two-dimensional Newton for (f^q(x) - x, Df^q(x) - 1) = 0.

    ``seed`` is (native parameter, x).  The reported ``a`` is the orbit
    point nearest the critical point, and the parameter derivative is in
    the family's signed convention.
    """
    nu, x = float(seed[0]), float(seed[1])
    lo, hi = family.native_parameter_range
    converged = False
    for _ in range(100):
        v, d1, d2 = _orbit_derivs_native(family, x, nu, q)
        g1 = v - x
        g2 = d1 - 1.0
        vp, d1p, _ = _orbit_derivs_native(family, x, nu + _PARAM_STEP, q)
        vm, d1m, _ = _orbit_derivs_native(family, x, nu - _PARAM_STEP, q)
        jac = np.array([[d1 - 1.0, (vp - vm) / (2 * _PARAM_STEP)],
                        [d2, (d1p - d1m) / (2 * _PARAM_STEP)]])
        try:
            dx, dnu = np.linalg.solve(jac, [-g1, -g2])
        except np.linalg.LinAlgError:
            raise NoConvergenceError("singular Jacobian in fold Newton")
        x += dx
        nu += dnu
        if not (0.0 < x < 1.0) or not (lo <= nu <= hi):
            raise NoConvergenceError(
                f"fold Newton left the domain (x={x}, native={nu})")
        if abs(dx) + abs(dnu) < 1e-14:
            converged = True
            break
    if not converged:
        raise NoConvergenceError("fold Newton did not converge in 100 steps")
    v, d1, _ = _orbit_derivs_native(family, x, nu, q)
    if abs(v - x) > 1e-12 or abs(d1 - 1.0) > 1e-9:
        raise NoConvergenceError(
            f"fold residuals too large: |f^q(a)-a|={abs(v - x):.2e}, |Df^q-1|={abs(d1 - 1):.2e}")
    orbit = [x]
    for _ in range(q - 1):
        orbit.append(family.eval_native(orbit[-1], nu)[0])
    a = min(orbit, key=lambda p: abs(p - family.critical_point))
    _, _, second = _orbit_derivs_native(family, a, nu, q)
    if abs(second) < 1e-6:
        raise DegenerateSaddleNodeError(
            f"|D^2 f^q(a)| = {abs(second):.2e} below tolerance")
    vp, _, _ = _orbit_derivs_native(family, a, nu + _PARAM_STEP, q)
    vm, _, _ = _orbit_derivs_native(family, a, nu - _PARAM_STEP, q)
    dnative = (vp - vm) / (2 * _PARAM_STEP)
    param_deriv = -family.gamma_sign * dnative
    orbit_from_a = [a]
    for _ in range(q - 1):
        orbit_from_a.append(family.eval_native(orbit_from_a[-1], nu)[0])
    return SaddleNodeData(gamma_sn_native=nu, a=a,
                          orbit_of_a=tuple(orbit_from_a),
                          second_deriv=second, param_deriv=param_deriv, q=q)


def gamma_convention(family: UnimodalFamily, sn: SaddleNodeData,
                     gamma: float, *, validate: bool = True) -> float:
    """Native parameter for a signed offset, with orientation validation.

    Orientation is correct when no fold orbit exists near ``a`` for
    gamma = +1e-4 while two crossings appear for gamma = -1e-4.
    """
    if abs(gamma) > family.gamma_window:
        raise DomainError(
            f"|gamma|={abs(gamma)} exceeds window {family.gamma_window}")
    if validate:
        _validate_orientation(family, sn)
    return sn.gamma_sn_native - family.gamma_sign * gamma


_ORIENT_OK: dict = {}


def _displacement_profile(family, sn, gamma, spread, n=801):
    native = sn.gamma_sn_native - family.gamma_sign * gamma
    xs = np.linspace(sn.a - spread, sn.a + spread, n)
    vals = np.empty(n)
    for i, x in enumerate(xs):
        v = x
        for _ in range(sn.q):
            v = family.eval_native(v, native)[0]
        vals[i] = v - x
    return xs, vals


def _validate_orientation(family, sn):
    key = (family.name, round(sn.a, 12))
    if key in _ORIENT_OK:
        return
    spread = 0.5 * abs(sn.a - family.critical_point)
    probe = 1e-4
    _, disp_plus = _displacement_profile(family, sn, probe, spread)
    if np.min(np.abs(disp_plus)) == 0.0 or np.min(disp_plus) * np.max(disp_plus) < 0.0:
        raise OrientationError(
            "fold orbit persists at gamma=+1e-4; signed-parameter orientation is wrong")
    _, disp_minus = _displacement_profile(family, sn, -probe, spread)
    if np.min(disp_minus) * np.max(disp_minus) >= 0.0:
        raise OrientationError(
            "no fold pair found at gamma=-1e-4; fold may be degenerate or window too small")
    if sn.second_deriv * sn.param_deriv <= 0.0:
        raise OrientationError(
            "nondegeneracy product D^2 f^q(a) * d/dgamma f^q(a) is not positive")
    _ORIENT_OK[key] = True


def fold_pair_count(family: UnimodalFamily, sn: SaddleNodeData, gamma: float,
                    spread=None) -> int:
    """Number of sign changes of f^q(x) - x near a (0 for gamma > 0, 2 below)."""
    if spread is None:
        spread = 0.5 * abs(sn.a - family.critical_point)
    _, disp = _displacement_profile(family, sn, gamma, spread)
    sgn = np.sign(disp)
    return int(np.sum(sgn[:-1] * sgn[1:] < 0))


def _minimal_period(family, native, x, period, tol=1e-7):
    for p in range(1, period):
        if period % p:
            continue
        v = x
        for _ in range(p):
            v = family.eval_native(v, native)[0]
        if abs(v - x) < tol:
            return p
    return period


def _multiplier(family, native, x, period):
    m = 1.0
    v = x
    for _ in range(period):
        _, d1, _ = family.eval_native(v, native)
        m *= d1
        v = family.eval_native(v, native)[0]
    return m


def repelling_points_of_f0(family: UnimodalFamily, max_period: int,
                           exclude: Sequence[tuple] = (),
                           grid: int = 100_000) -> List[PeriodicPointTrack]:
    """All repelling periodic points of period <= max_period at gamma = 0
    whose orbits avoid the ``exclude`` intervals.

    Bisection on sign changes of f^p(x) - x over a fine grid, Newton
    refinement, chain-rule multipliers.  Points are reported with their
    minimal period; the set may be empty.
    """
    if max_period > 12:
        raise DomainError("period detection is limited to 12")
    native = family.native_of_gamma(0.0)
    xs = np.linspace(0.0, 1.0, grid + 1)
    levels = [xs.copy()]
    cur = xs.copy()
    for _ in range(max_period):
        cur = np.array([family.eval_native(x, native)[0] for x in cur]) \
            if family.kernel != "quadratic" else native * cur * (1.0 - cur)
        levels.append(cur.copy())
    tracks: List[PeriodicPointTrack] = []
    seen: List[float] = []
    for p in range(1, max_period + 1):
        h = levels[p] - xs
        sgn = np.sign(h)
        idx = np.where(sgn[:-1] * sgn[1:] < 0)[0]
        for i in idx:
            lo_x, hi_x = xs[i], xs[i + 1]
            flo, fhi = h[i], h[i + 1]
            for _ in range(70):
                mid = 0.5 * (lo_x + hi_x)
                v = mid
                for _ in range(p):
                    v = family.eval_native(v, native)[0]
                fm = v - mid
                if (fm > 0) == (fhi > 0):
                    hi_x, fhi = mid, fm
                else:
                    lo_x, flo = mid, fm
            root = 0.5 * (lo_x + hi_x)
            root = _newton_periodic(family, native, root, p)
            if root is None:
                continue
            if any(abs(root - s) < 1e-9 for s in seen):
                continue
            if _minimal_period(family, native, root, p) != p:
                continue
            v, d1, _ = _orbit_derivs_native(family, root, native, p)
            if abs(v - root) > 1e-12 or abs(d1) <= 1.0 + 1e-6:
                continue
            orbit = [root]
            for _ in range(p - 1):
                orbit.append(family.eval_native(orbit[-1], native)[0])
            if any(lo <= pt <= hi for pt in orbit for (lo, hi) in exclude):
                continue
            for pt in orbit:
                seen.append(pt)
            for pt in orbit:
                tracks.append(PeriodicPointTrack(
                    period=p, point_at={0.0: pt},
                    multiplier_at={0.0: _multiplier(family, native, pt, p)}))
    return tracks


def _newton_periodic(family, native, x, period, tol=1e-14, max_iter=40):
    for _ in range(max_iter):
        v, d1, _ = _orbit_derivs_native(family, x, native, period)
        g = v - x
        dg = d1 - 1.0
        if dg == 0.0:
            return None
        step = g / dg
        x -= step
        if not (0.0 <= x <= 1.0):
            return None
        if abs(step) < tol:
            return x
    return x


def continue_periodic_point(family: UnimodalFamily, track_seed,
                            gamma_grid: Sequence[float]) -> PeriodicPointTrack:
    """Newton continuation of a hyperbolic periodic point along gamma_grid.

    Stops with a partial track (``complete=False``) if the multiplier
    collapses toward 1; the partial track is attached to the raised
    ContinuationLostError.
    """
    period, x, gamma0 = track_seed
    native0 = family.native_of_gamma(gamma0)
    m0 = _multiplier(family, native0, x, period)
    if abs(abs(m0) - 1.0) < 0.05:
        raise DomainError(f"seed is not hyperbolic enough (|mult|={abs(m0):.4f})")
    track = PeriodicPointTrack(period=period)
    cur = x
    for g in gamma_grid:
        native = family.native_of_gamma(g)
        cur_new = _newton_periodic(family, native, cur, period)
        if cur_new is None:
            err = ContinuationLostError(f"Newton failed at gamma={g}")
            track.complete = False
            err.partial_track = track
            raise err
        mult = _multiplier(family, native, cur_new, period)
        if abs(abs(mult) - 1.0) < 1e-3:
            track.complete = False
            err = ContinuationLostError(
                f"multiplier collapsed to {mult:.6f} at gamma={g}")
            err.partial_track = track
            raise err
        track.point_at[g] = cur_new
        track.multiplier_at[g] = mult
        cur = cur_new
    return track


def track_point(track: PeriodicPointTrack, family: UnimodalFamily,
                gamma: float) -> float:
    """Point of a track at an arbitrary gamma, refined by Newton from the
    nearest stored entry."""
    _, x = track.nearest(gamma)
    native = family.native_of_gamma(gamma)
    refined = _newton_periodic(family, native, x, track.period)
    if refined is None:
        raise ContinuationLostError(f"could not refine track at gamma={gamma}")
    return refined
