"""Sampling of the circle invariant of the fold return dynamics at gamma = 0,
first-return-map comparisons against rotated copies of it, and the
parameter sequences where the critical orbit lands on a repelling point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DomainError, OrbitEscapeError, SampleEscapeError
from .family import UnimodalFamily
from .phase import (Geometry, Ladder, PhaseChart, _ChartCore, build_chart,
                    tau_bar, theta_map, theta_of_gamma)
from .rootfind import bisect_secant
from .saddle import PeriodicPointTrack, SaddleNodeData, track_point


@dataclass
class MatherTable:
    """Grid samples of the return-time invariant and its companions.

    For each unstable phase tau: Mbar is the extended stable phase of the
    first landing in [d, a); R the floor of the deepest unstable-side
    revisit; N the plain-iterate count of the landing.  ok marks samples
    whose orbit landed within the cap.
    """

    grid: np.ndarray
    x_of_tau: np.ndarray
    Mbar: np.ndarray
    R: np.ndarray
    N: np.ndarray
    ok: np.ndarray
    discontinuities: np.ndarray
    j_max: int
    geometry: Geometry = field(repr=False)

    def M(self) -> np.ndarray:
        return np.mod(self.Mbar, 1.0)

    def v_mask(self, j: int) -> np.ndarray:
        return self.ok & (self.Mbar < j) & (np.abs(self.R) < j) & (self.N < j)


def _df_along(family, native, x, n):
    d = 1.0
    v = x
    for _ in range(n):
        fv, g1, _ = family.eval_native(v, native)
        d *= g1
        v = fv
    return v, d


def _invert_unstable_phase(chart_u: PhaseChart, taus: np.ndarray) -> np.ndarray:
    """Points of I^u at the requested fractional phases.

    A dense monotone table seeds interpolation; two secant corrections
    against the actual phase evaluation polish each point.
    """
    core = chart_u.core
    e = chart_u.e
    top = core._fq(e) if core.kind != "crossing" else core.top
    nodes = np.linspace(e, top, 129)
    tnode = np.array([tau_bar(chart_u, float(z)) for z in nodes[:-1]] + [1.0])
    tnode[0] = 0.0
    out = np.empty(taus.size)
    for i, t in enumerate(taus):
        x = float(np.interp(t, tnode, nodes))
        # secant polish on tau(x) - t
        x1 = min(top, max(e, x + (nodes[1] - nodes[0]) * 1e-3))
        f0 = tau_bar(chart_u, x) - t if x > e else -t
        f1 = tau_bar(chart_u, x1) - t
        for _ in range(3):
            if f1 == f0:
                break
            x2 = x1 - f1 * (x1 - x) / (f1 - f0)
            if not (e <= x2 <= top):
                break
            x, f0 = x1, f1
            x1 = x2
            f1 = tau_bar(chart_u, x1) - t
            if abs(f1) < 1e-12:
                break
        out[i] = x1 if abs(f1) < abs(f0) else x
    return out


def mather_grid(family: UnimodalFamily, sn: SaddleNodeData,
                chart_s: PhaseChart, chart_u: PhaseChart,
                grid_size: int = 4096, j_max: int = 40,
                orbit_cap: int = 100_000) -> MatherTable:
    """Sample the first-hit invariant over a uniform phase grid on I^u."""
    geom = chart_u.core.geom
    native = sn.gamma_sn_native
    taus = (np.arange(grid_size) + 0.5) / grid_size
    xs = _invert_unstable_phase(chart_u, taus)
    a, d = geom.a, geom.d
    top = chart_u.core._fq(geom.e)
    mbar = np.full(grid_size, np.inf)
    rr = np.zeros(grid_size)
    nn = np.zeros(grid_size, dtype=np.int64)
    ok = np.zeros(grid_size, dtype=bool)
    if family.kernel == "quadratic":
        from . import _kernels
        for i, x in enumerate(xs):
            landing, steps, min_re, flag = _kernels.mather_orbit(
                native, x, d, a, top, orbit_cap)
            if flag:
                continue
            ok[i] = True
            nn[i] = steps
            mbar[i] = chart_s.core.psi_stable(landing)
            rr[i] = chart_u.core.integer_depth_unstable(min_re)
    else:
        for i, x in enumerate(xs):
            v = x
            min_re = x
            done = False
            for n in range(1, orbit_cap + 1):
                v = family.eval_native(v, native)[0]
                if d <= v < a:
                    ok[i] = True
                    nn[i] = n
                    mbar[i] = chart_s.core.psi_stable(v)
                    done = True
                    break
                if a < v <= top and v < min_re:
                    min_re = v
            if done:
                rr[i] = chart_u.core.integer_depth_unstable(min_re)
    disc = _find_discontinuities(taus, mbar, ok)
    return MatherTable(grid=taus, x_of_tau=xs, Mbar=mbar, R=rr, N=nn, ok=ok,
                       discontinuities=disc, j_max=j_max, geometry=geom)


def _find_discontinuities(taus, mbar, ok):
    """Grid pairs whose extended stable phases jump by more than 1/2."""
    out = []
    for i in range(len(taus) - 1):
        if not (ok[i] and ok[i + 1]):
            continue
        if abs(mbar[i + 1] - mbar[i]) > 0.5:
            out.append(0.5 * (taus[i] + taus[i + 1]))
    return np.array(out)


def v_set(table: MatherTable, j: int):
    """(Lebesgue fraction, mask) of the phase set with all three bounds < j."""
    if j > table.j_max:
        raise DomainError(f"j={j} exceeds the table's j_max={table.j_max}")
    mask = table.v_mask(j)
    return float(mask.mean()), mask


def mather_value(table: MatherTable, tau: float) -> float:
    """Nearest-grid value of the circle invariant."""
    i = int(round(tau * len(table.grid) - 0.5)) % len(table.grid)
    return float(np.mod(table.Mbar[i], 1.0))


# ---------------------------------------------------------------------------
# first-return map on a fundamental domain, compared to the rotated invariant


def return_map_residual(family: UnimodalFamily, ladder: Ladder, i: int,
                        l: int, theta: float, table: MatherTable,
                        n_samples: int = 50, cap: int = 10**6) -> float:
    """Sup circle distance between the normalized first-return map of the
    i-th fundamental domain and the -theta rotation of the invariant,
    sampled on phases that avoid deep revisits (the V(i-1) set)."""
    geom = ladder.geometry
    g = theta_map(ladder, l, theta)
    chart_u = build_chart(family, sn=ladder.sn, gamma=g, side="unstable",
                          geometry=geom)
    core = chart_u.core
    bnd = core.bnd
    pos_e = core.base_pos
    if i >= pos_e:
        raise DomainError(f"domain index {i} too deep for rung {l}")
    lo, hi = bnd[pos_e - i - 1], bnd[pos_e - i]
    vmask = table.v_mask(i - 1) if i >= 1 else table.ok
    cands = table.grid[vmask]
    if cands.size < n_samples:
        raise SampleEscapeError(
            f"only {cands.size} sample phases available in V({i - 1})")
    sel = cands[np.linspace(0, cands.size - 1, n_samples).astype(int)]
    native = family.native_of_gamma(g)
    worst = 0.0
    for t in sel:
        x = _invert_in_domain(chart_u, float(t), lo, hi, i)
        y = x
        for _ in range(cap):
            y = family.eval_native(y, native)[0]
            if lo <= y < hi:
                break
        else:
            raise OrbitEscapeError("first return did not occur within the cap")
        t_ret = tau_bar(chart_u, y) % 1.0
        target = (mather_value(table, float(t)) - theta) % 1.0
        dcirc = abs(t_ret - target) % 1.0
        worst = max(worst, min(dcirc, 1.0 - dcirc))
    return worst


def _invert_in_domain(chart_u, t, lo, hi, depth):
    """Point of the depth-`depth` fundamental domain at circle phase t.

    On that domain the extended phase runs over [-depth-1, -depth), so the
    circle phase is the extended one plus depth + 1.
    """
    def func(x):
        return (tau_bar(chart_u, x) + depth + 1.0) - t
    x, _ = bisect_secant(func, lo, hi, ftol=1e-11)
    return x


# ---------------------------------------------------------------------------
# parameter sequences with the critical orbit landing on a repeller


@dataclass
class MisiurewiczSequence:
    target: PeriodicPointTrack
    m: int
    entries: Dict[int, Tuple[float, float, float]]  # l -> (gamma*, theta*, residual)
    failures: List[int] = field(default_factory=list)


def _critical_gap(family, ladder, target, m, l, gamma):
    """f^{lq+m}(c) - y*(gamma)."""
    native = family.native_of_gamma(gamma)
    x = family.critical_point
    for _ in range(l * ladder.sn.q + m):
        x = family.eval_native(x, native)[0]
    return x - track_point(target, family, gamma)


def discover_offset(family: UnimodalFamily, ladder: Ladder,
                    target: PeriodicPointTrack, l_probe: int,
                    m_max: int = 80) -> int:
    """Offset m such that the critical orbit passes closest to the target
    m plain iterates after lq, measured at the middle of rung l_probe."""
    g = theta_map(ladder, l_probe, 0.5)
    native = family.native_of_gamma(g)
    ystar = track_point(target, family, g)
    x = family.critical_point
    for _ in range(l_probe * ladder.sn.q):
        x = family.eval_native(x, native)[0]
    best_m, best_d = None, np.inf
    for m in range(1, m_max + 1):
        x = family.eval_native(x, native)[0]
        d = abs(x - ystar)
        if d < best_d:
            best_m, best_d = m, d
    if best_m is None or best_d > 0.2:
        raise SampleEscapeError(
            f"critical orbit never approaches the target within {m_max} steps")
    return best_m


def misiurewicz_sequence(family: UnimodalFamily, ladder: Ladder,
                         target: PeriodicPointTrack,
                         l_range: Tuple[int, int], m: Optional[int] = None,
                         scan: int = 96, residual_tol: float = 1e-10,
                         theta_anchor: Optional[float] = None) -> MisiurewiczSequence:
    """Per rung, a root of gamma -> f^{lq+m}(c) - y*(gamma) inside the rung.

    When several roots exist the one with fractional crossing time closest
    to the accumulating limit is kept, so the sequence stays on one branch.
    Rungs without a root are recorded as failures, not errors.
    """
    l_lo, l_hi = l_range
    if m is None:
        m = discover_offset(family, ladder, target, (l_lo + l_hi) // 2)
    entries: Dict[int, Tuple[float, float, float]] = {}
    failures: List[int] = []
    theta_prev = theta_anchor
    for l in range(l_lo, l_hi + 1):
        g_hi, g_lo = ladder.gamma(l), ladder.gamma(l + 1)
        gs = np.linspace(g_lo * (1 + 1e-12), g_hi * (1 - 1e-12), scan)
        vals = np.array([_critical_gap(family, ladder, target, m, l, g)
                         for g in gs])
        sgn = np.sign(vals)
        roots = []
        for k in np.where(sgn[:-1] * sgn[1:] < 0)[0]:
            root, fr = bisect_secant(
                lambda g: _critical_gap(family, ladder, target, m, l, g),
                gs[k], gs[k + 1], vals[k], vals[k + 1])
            if abs(fr) < residual_tol:
                roots.append((root, abs(fr)))
        if not roots:
            failures.append(l)
            continue
        scored = []
        for root, fr in roots:
            _, th = theta_of_gamma(ladder, root)
            key = 0.0 if theta_prev is None else abs(th - theta_prev)
            scored.append((key, root, th, fr))
        scored.sort()
        _, root, th, fr = scored[0]
        entries[l] = (root, th, fr)
        theta_prev = th
    return MisiurewiczSequence(target=target, m=m, entries=entries,
                               failures=failures)


def transversality_slope(family: UnimodalFamily, ladder: Ladder,
                         seq: MisiurewiczSequence, l: int,
                         h_theta: float = 1e-3) -> float:
    """Finite-difference slope of the root function in theta at the root."""
    g_star, th, _ = seq.entries[l]
    g_p = theta_map(ladder, l, min(1.0, th + h_theta))
    g_m = theta_map(ladder, l, max(0.0, th - h_theta))
    v_p = _critical_gap(family, ladder, seq.target, seq.m, l, g_p)
    v_m = _critical_gap(family, ladder, seq.target, seq.m, l, g_m)
    span = min(1.0, th + h_theta) - max(0.0, th - h_theta)
    return (v_p - v_m) / span
