"""Laminar/burst statistics, visit frequencies and their square-root
scaling in the distance to the fold, empirical invariant measures, and
periodic-window detection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .family import UnimodalFamily, lyapunov_slope
from .induced import InducedContext
from .phase import Ladder, theta_map

BURN_IN = 1000


def seed_sequence(seed: int, count: int, lo: float = 0.05, hi: float = 0.95):
    """Low-discrepancy initial conditions: a golden-ratio Kronecker walk
    offset by the seed.  Deterministic and evenly spread."""
    phi = 0.6180339887498949
    offset = (seed * 0.7548776662466927) % 1.0
    out = np.empty(count)
    for k in range(count):
        u = (offset + (k + 1) * phi) % 1.0
        out[k] = lo + (hi - lo) * u
    return out


@dataclass
class LaminarProfile:
    """Run-length encoding of the visits to the fold-orbit neighborhood."""

    gamma: float
    x0: float
    n_total: int
    chi: float
    laminar_lengths: np.ndarray
    burst_lengths: np.ndarray

    @property
    def mean_laminar(self) -> float:
        return float(self.laminar_lengths.mean()) if self.laminar_lengths.size else 0.0

    @property
    def mean_burst(self) -> float:
        return float(self.burst_lengths.mean()) if self.burst_lengths.size else 0.0


@dataclass
class EmpiricalMeasure:
    bin_edges: np.ndarray
    masses: np.ndarray
    source: str            # 'base' | 'induced' | 'pushforward'
    gamma: float
    n: int

    def mass_in(self, lo: float, hi: float) -> float:
        edges = self.bin_edges
        sel = (edges[1:] > lo) & (edges[:-1] < hi)
        return float(self.masses[sel].sum())


def _ebar_arrays(ebar):
    lo = np.array([w[0] for w in ebar])
    hi = np.array([w[1] for w in ebar])
    return lo, hi


def laminar_segments(family: UnimodalFamily, gamma: float, x0: float, n: int,
                     ebar, burn: int = BURN_IN) -> LaminarProfile:
    """Run-length encode the indicator of the fold-orbit neighborhood."""
    if gamma <= 0.0:
        raise DomainError("laminar statistics are defined on the gamma > 0 side")
    native = family.check_gamma(gamma)
    lo, hi = _ebar_arrays(ebar)
    if family.kernel != "quadratic":
        raise DomainError("laminar_segments requires the built-in family kernel")
    from . import _kernels
    runs, lam = _kernels.laminar_count(native, x0, n, burn, lo, hi)
    lengths = np.empty(runs, dtype=np.int64)
    states = np.empty(runs, dtype=np.int64)
    _kernels.laminar_fill(native, x0, n, burn, lo, hi, lengths, states)
    return LaminarProfile(gamma=gamma, x0=x0, n_total=n, chi=lam / n,
                          laminar_lengths=lengths[states == 1],
                          burst_lengths=lengths[states == 0])


def chi_estimate(family: UnimodalFamily, gamma: float, ebar, n: int,
                 seeds: int = 8, seed: int = 1, burn: int = BURN_IN):
    """Mean visit frequency over independent low-discrepancy seeds.

    Returns (chi, stderr, per-seed array); near-constancy across seeds is
    the almost-everywhere statement at desk scale.
    """
    if seeds < 2:
        raise DomainError("need at least 2 seeds")
    native = family.check_gamma(gamma)
    lo, hi = _ebar_arrays(ebar)
    from . import _kernels
    vals = np.empty(seeds)
    for i, x0 in enumerate(seed_sequence(seed, seeds)):
        _, lam = _kernels.laminar_count(native, x0, n, burn, lo, hi)
        vals[i] = lam / n
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(seeds)), vals


# ---------------------------------------------------------------------------
# periodic-window detection


@dataclass
class WindowInventory:
    gammas: np.ndarray
    slopes: np.ndarray
    masked: np.ndarray          # True where an attracting orbit was detected
    periods: np.ndarray         # detected period, 0 if none found


def window_detect(family: UnimodalFamily, gamma_grid, n: int = 10**6,
                  x0: float = 0.31234567891, burn: int = 10_000,
                  pmax: int = 256) -> WindowInventory:
    """Mask parameters with a negative orbit-averaged log-derivative slope
    and identify the attracting period by orbit closure."""
    from . import _kernels
    gammas = np.asarray(list(gamma_grid), dtype=float)
    slopes = np.empty(gammas.size)
    periods = np.zeros(gammas.size, dtype=np.int64)
    for i, g in enumerate(gammas):
        native = family.check_gamma(float(g))
        slopes[i] = _kernels.lyap_slope(native, x0, n, burn, -690.0)
        if slopes[i] < 0.0:
            periods[i] = _kernels.detect_period(native, x0, 200_000, pmax, 1e-7)
    return WindowInventory(gammas=gammas, slopes=slopes,
                           masked=slopes < 0.0, periods=periods)


def rung_window_fraction(family: UnimodalFamily, ladder: Ladder, l: int,
                         grid: int = 64, n: int = 10**6):
    """Fraction of a rung's theta grid carrying an attracting orbit."""
    thetas = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    warm = None
    gs = []
    for t in thetas:
        g = theta_map(ladder, l, float(t), warm=warm)
        warm = (g, l + float(t))
        gs.append(g)
    inv = window_detect(family, gs, n=n)
    return float(inv.masked.mean()), inv


# ---------------------------------------------------------------------------
# scaling law


@dataclass
class ScalingFit:
    gammas: np.ndarray
    chis: np.ndarray
    masked: np.ndarray
    slope: float
    k_band: Tuple[float, float]
    laminar_slope: float
    laminar_means: np.ndarray

    @property
    def k_ratio(self) -> float:
        return self.k_band[1] / self.k_band[0]


def scaling_fit(family: UnimodalFamily, ebar, gamma_grid, n: int = 10**7,
                min_points: int = 6, window_n: int = 10**6,
                seed: int = 1) -> ScalingFit:
    """Least-squares slope of ln(1 - chi) against ln gamma over the
    window-masked grid, with the (1-chi)/sqrt(gamma) band, plus the same
    analysis for the mean laminar length."""
    gammas = np.asarray(sorted(gamma_grid), dtype=float)
    inv = window_detect(family, gammas, n=window_n)
    keep = ~inv.masked
    if keep.sum() < min_points:
        raise DomainError(
            f"only {int(keep.sum())} unmasked grid points; need {min_points}")
    chis = np.full(gammas.size, np.nan)
    lam_means = np.full(gammas.size, np.nan)
    x0 = float(seed_sequence(seed, 1)[0])
    for i, g in enumerate(gammas):
        if not keep[i]:
            continue
        prof = laminar_segments(family, float(g), x0, n, ebar)
        chis[i] = prof.chi
        lam_means[i] = prof.mean_laminar
    lg = np.log(gammas[keep])
    one_minus = 1.0 - chis[keep]
    slope = float(np.polyfit(lg, np.log(one_minus), 1)[0])
    band_vals = one_minus / np.sqrt(gammas[keep])
    lam_slope = float(np.polyfit(lg, np.log(lam_means[keep]), 1)[0])
    return ScalingFit(gammas=gammas, chis=chis, masked=inv.masked, slope=slope,
                      k_band=(float(band_vals.min()), float(band_vals.max())),
                      laminar_slope=lam_slope, laminar_means=lam_means)


def passage_time_quadrature(gamma: float, lo: float = -1.0, hi: float = 1.0,
                            npts: int = 20001) -> float:
    """Independent oracle for the normal-form passage time
    integral dx/(x^2 + gamma) = pi/sqrt(gamma) over the real line."""
    xs = np.linspace(lo, hi, npts)
    return float(np.trapezoid(1.0 / (xs * xs + gamma), xs))


# ---------------------------------------------------------------------------
# empirical measures


def measure_estimate(family: UnimodalFamily, gamma: float, mode: str, n: int,
                     bins: int = 4096, ctx: Optional[InducedContext] = None,
                     x0: float = 0.31234567891,
                     burn: int = BURN_IN) -> EmpiricalMeasure:
    """Occupation histogram of the plain orbit, the induced orbit, or the
    fiber-expanded induced orbit (the pushed-forward construction)."""
    native = family.check_gamma(gamma)
    from . import _kernels
    edges = np.linspace(0.0, 1.0, bins + 1)
    if mode == "base":
        counts = _kernels.hist_base(native, x0, n, burn, bins)
    elif mode == "induced":
        if ctx is None:
            raise DomainError("induced mode needs an InducedContext")
        counts = _kernels.hist_induced(native, ctx.boundaries, ctx.q, x0, n,
                                       burn, bins)
    elif mode == "pushforward":
        if ctx is None:
            raise DomainError("pushforward mode needs an InducedContext")
        counts, _base = _kernels.hist_pushforward(native, ctx.boundaries,
                                                  ctx.q, x0, n, burn, bins)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    masses = counts / counts.sum()
    return EmpiricalMeasure(bin_edges=edges, masses=masses, source=mode,
                            gamma=gamma, n=n)


def tv_distance(m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    if m1.bin_edges.size != m2.bin_edges.size:
        raise DomainError("total-variation comparison needs matched binnings")
    return 0.5 * float(np.abs(m1.masses - m2.masses).sum())


def push_once(family: UnimodalFamily, measure: EmpiricalMeasure,
              subsamples: int = 8) -> EmpiricalMeasure:
    """Transport the histogram through one map step by subsampling bins."""
    native = family.check_gamma(measure.gamma)
    bins = measure.masses.size
    out = np.zeros(bins)
    edges = measure.bin_edges
    for b in range(bins):
        m = measure.masses[b]
        if m == 0.0:
            continue
        share = m / subsamples
        for s in range(subsamples):
            x = edges[b] + (edges[b + 1] - edges[b]) * (s + 0.5) / subsamples
            y = family.eval_native(x, native)[0]
            t = min(bins - 1, max(0, int(y * bins)))
            out[t] += share
    return EmpiricalMeasure(bin_edges=measure.bin_edges, masses=out,
                            source=measure.source + "+push", gamma=measure.gamma,
                            n=measure.n)


def sqrt_mass_bound(measure: EmpiricalMeasure, n_intervals: int = 100,
                    seed: int = 7) -> float:
    """Smallest K with mass(A) <= K sqrt(|A|) over random test intervals."""
    rng = np.random.default_rng(seed)
    k = 0.0
    for _ in range(n_intervals):
        w = 10.0 ** rng.uniform(-4, -0.5)
        lo = rng.uniform(0.0, 1.0 - w)
        mass = measure.mass_in(lo, lo + w)
        k = max(k, mass / math.sqrt(w))
    return k


def atomic_distance(measure: EmpiricalMeasure, atoms: Sequence[float]) -> float:
    """Levy-Prokhorov-style distance to the uniform atomic measure on the
    fold orbit: the smallest eps with at least 1-eps of the mass within
    eps of the atoms and each atom's eps-ball holding its share up to eps."""
    atoms = np.asarray(atoms, dtype=float)
    share = 1.0 / atoms.size

    def ok(eps):
        total = 0.0
        for p in atoms:
            m = measure.mass_in(p - eps, p + eps)
            if abs(m - share) > eps:
                return False
            total += m
        return total >= 1.0 - eps

    lo, hi = 0.0, 0.5
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def mass_outside_support(measure: EmpiricalMeasure, family: UnimodalFamily,
                         gamma: float) -> float:
    """Mass outside [f^2(c), f(c)] (one bin of slack on each side)."""
    native = family.check_gamma(gamma)
    c = family.critical_point
    f1 = family.eval_native(c, native)[0]
    f2 = family.eval_native(f1, native)[0]
    binw = measure.bin_edges[1] - measure.bin_edges[0]
    inside = measure.mass_in(f2 - binw, f1 + binw)
    return max(0.0, 1.0 - inside)


# ---------------------------------------------------------------------------
# hitting times


def hitting_time_stats(ctx: InducedContext, v: Tuple[float, float], n: int,
                       x0: float = 0.31234567891,
                       n_base: Optional[int] = None):
    """Mean hitting times: of V under the induced map, and of the skipped
    union under the plain map.  Estimated by return-time tallies along one
    long orbit; the degenerate V = [0,1] gives 0."""
    from . import _kernels
    vlo, vhi = v
    if not (vhi > vlo):
        raise DomainError("empty target interval")
    sum_l, counted, inside = _kernels.induced_hitting(
        ctx.native, ctx.boundaries, ctx.q, x0, n, vlo, vhi)
    total = counted + inside
    mean_induced = sum_l / counted if counted else 0.0
    frac_outside = counted / total if total else 0.0
    if n_base is None:
        n_base = n
    blo, bhi = float(ctx.boundaries[0]), float(ctx.boundaries[-1])
    sum_b, counted_b, inside_b = _kernels.base_hitting(
        ctx.native, x0, n_base, blo, bhi)
    mean_base = sum_b / counted_b if counted_b else 0.0
    return {
        "induced_mean": float(mean_induced),
        "induced_outside_fraction": float(frac_outside),
        "base_mean": float(mean_base),
        "base_outside_fraction": float(counted_b / max(1, counted_b + inside_b)),
    }
