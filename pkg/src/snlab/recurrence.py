"""Critical-orbit recurrence bookkeeping: the shrinking-neighborhood
partition around c, binding periods, the bounded-recurrence condition,
Collet-Eckmann slopes, and parameter-grid survival scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError
from .family import UnimodalFamily
from .induced import InducedContext, breve_interval_step, build_induced
from .phase import Ladder, theta_map


@dataclass(frozen=True)
class RecurrenceParams:
    """Neighborhoods of c graded by e-folding depth.

    I_r = [c + e^{-r}, c + e^{-r+1}) and its mirror; the inner union over
    |r| > r_delta is the return target, over |r| > r_delta_plus the wider
    binding region.  Each I_r splits into r^2 equal pieces.
    """

    c: float
    alpha: float
    delta: float
    iota: float
    r_delta: int
    r_delta_plus: int

    @property
    def delta_eff(self) -> float:
        return math.exp(-self.r_delta)

    @property
    def delta_plus_eff(self) -> float:
        return math.exp(-self.r_delta_plus)

    def depth(self, x: float) -> int:
        """Signed depth r with x in I_r; 0 at x = c."""
        t = x - self.c
        if t == 0.0:
            return 0
        r = int(math.ceil(-math.log(abs(t))))
        return r if t > 0 else -r

    def locate(self, x: float) -> Optional[Tuple[int, int]]:
        """(r, m) for x inside the graded region, None outside."""
        r = self.depth(x)
        if r == 0:
            return (0, 0)
        if abs(r) < self.r_delta + 1:
            return None
        t = abs(x - self.c)
        lo = math.exp(-abs(r))
        hi = math.exp(-abs(r) + 1)
        frac = (t - lo) / (hi - lo)
        m = min(r * r, int(frac * r * r) + 1)
        return (r, m)

    def in_delta(self, x: float) -> bool:
        return abs(x - self.c) < self.delta_eff

    def in_delta_plus(self, x: float) -> bool:
        return abs(x - self.c) < self.delta_plus_eff


def delta_partition(c: float, alpha: float = 0.05, delta: float = math.exp(-10),
                    iota: float = 0.3) -> RecurrenceParams:
    if not (0.0 < delta < 1.0 and 0.0 < iota < 1.0 and alpha > 0.0):
        raise DomainError("need 0 < delta < 1, 0 < iota < 1, alpha > 0")
    r_delta = int(round(-math.log(delta)))
    r_plus = int(round(-iota * math.log(delta)))
    return RecurrenceParams(c=c, alpha=alpha, delta=delta, iota=iota,
                            r_delta=r_delta, r_delta_plus=r_plus)


# ---------------------------------------------------------------------------
# binding periods


@dataclass
class BindingResult:
    p: int
    reason: str          # 'growth' | 'split' | 'cap'
    lengths: List[float] = field(default_factory=list)


def binding_period_detail(ctx: InducedContext, x: float, alpha: float,
                          cap: int = 10_000) -> BindingResult:
    """Largest m with the joined-interval iterates of (c, x) staying inside
    the e^{-2 alpha j} tube through step m-1.

    The interval is advanced with the join rule; if an image ever splits
    into two components the binding is declared over at that step.
    """
    c = ctx.family.critical_point
    if x == c:
        raise DomainError("binding period undefined at x = c")
    lo, hi = (c, x) if x > c else (x, c)
    lengths = [hi - lo]
    j = 0
    while True:
        if lengths[-1] > math.exp(-2.0 * alpha * j):
            return BindingResult(p=j, reason="growth", lengths=lengths)
        if j >= cap:
            return BindingResult(p=cap, reason="cap", lengths=lengths)
        img = breve_interval_step(ctx, (lo, hi))
        if len(img.pieces) > 1:
            return BindingResult(p=j + 1, reason="split", lengths=lengths)
        (lo, hi), _ = img.pieces[0]
        lengths.append(hi - lo)
        j += 1


def binding_period(ctx: InducedContext, x: float, alpha: float,
                   cap: int = 10_000) -> int:
    return binding_period_detail(ctx, x, alpha, cap).p


# ---------------------------------------------------------------------------
# bounded recurrence along the induced critical orbit


@dataclass
class RecurrenceReport:
    l: int
    theta: float
    gamma: float
    horizon: int
    br_pass: bool
    first_fail: int                    # -1 when br_pass
    returns: List[Tuple[int, int, str]]  # (induced time, depth r, 'bound'|'free')
    binding: List[Tuple[int, int]]       # (return time, binding period)
    log_product: float
    ce_slope: float
    base_iterates: int
    n_returns_total: int
    return_positions: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    return_times: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


def _ce_slope_from_samples(idx: np.ndarray, logd: np.ndarray,
                           burn_frac: float = 0.1) -> float:
    if idx.size < 4:
        return float("nan")
    cut = int(burn_frac * idx.size)
    k = idx[cut:].astype(float)
    s = logd[cut:]
    k = k - k.mean()
    denom = float(np.dot(k, k))
    if denom == 0.0:
        return float("nan")
    return float(np.dot(k, s - s.mean()) / denom)


def br_check(ctx: InducedContext, params: RecurrenceParams, n: int,
             classify: bool = True, binding_cap: int = 10_000,
             early_stop: bool = False) -> RecurrenceReport:
    """Iterate the induced critical orbit and audit the return product.

    A return is any entry of the orbit into the graded neighborhood; the
    product of |distance to c| over returns up to time k must stay above
    e^{-alpha k} for every k.  Returns falling inside an active binding
    window are flagged 'bound'.
    """
    if n > 10**7:
        raise DomainError("horizon capped at 1e7 induced steps")
    fam = ctx.family
    if fam.kernel != "quadratic":
        raise DomainError("br_check currently requires the built-in family kernel")
    from . import _kernels
    stride = max(1, n // 4096)
    (ok, first_fail, s_ret, base, nret, ret_i, ret_x, samp_i, samp_s) = \
        _kernels.br_orbit(ctx.native, ctx.boundaries, ctx.q, fam.critical_point,
                          params.delta_eff, params.alpha, n, 1 << 16, stride,
                          early_stop)
    ce = _ce_slope_from_samples(np.asarray(samp_i), np.asarray(samp_s))
    returns: List[Tuple[int, int, str]] = []
    binding: List[Tuple[int, int]] = []
    if classify and len(ret_i):
        active_until = -1
        for t, x in zip(ret_i, ret_x):
            r = params.depth(float(x))
            kind = "bound" if t <= active_until else "free"
            if kind == "free":
                p = binding_period(ctx, float(x), params.alpha, binding_cap)
                binding.append((int(t), p))
                active_until = max(active_until, int(t) + p)
            returns.append((int(t), r, kind))
    else:
        returns = [(int(t), params.depth(float(x)), "?")
                   for t, x in zip(ret_i, ret_x)]
    return RecurrenceReport(
        l=ctx.l, theta=ctx.theta, gamma=ctx.gamma, horizon=n,
        br_pass=bool(ok), first_fail=int(first_fail), returns=returns,
        binding=binding, log_product=float(s_ret), ce_slope=ce,
        base_iterates=int(base), n_returns_total=int(nret),
        return_positions=np.asarray(ret_x), return_times=np.asarray(ret_i))


def br_check_base(ctx: InducedContext, params: RecurrenceParams,
                  n_base: int, early_stop: bool = False):
    """The same recurrence audit on the plain orbit, base-indexed."""
    from . import _kernels
    ok, first_fail, s_ret, nret, ret_i = _kernels.br_base_orbit(
        ctx.native, ctx.family.critical_point, params.delta_eff, params.alpha,
        n_base, 1 << 16, early_stop)
    return bool(ok), int(first_fail), float(s_ret), int(nret)


@dataclass
class ScanResult:
    l: int
    center: float
    eps: float
    thetas: np.ndarray
    gammas: np.ndarray
    br_mask: np.ndarray
    first_fail: np.ndarray
    ce_slopes: np.ndarray
    failures: List[Tuple[int, str]]

    @property
    def survival(self) -> float:
        return float(self.br_mask.mean())

    @property
    def survival_ce(self) -> float:
        return float((self.br_mask & (self.ce_slopes > 0)).mean())


def br_scan(family: UnimodalFamily, ladder: Ladder, l: int, center: float,
            eps: float, grid: int, params: RecurrenceParams, n: int,
            classify: bool = False) -> ScanResult:
    """br_check over a theta grid centered on a target parameter.

    Solver failures at individual grid points are recorded and the point
    counted as not surviving; the scan never aborts.
    """
    if grid < 2:
        raise DomainError("grid must have at least 2 points")
    thetas = np.linspace(center - eps, center + eps, grid)
    gammas = np.empty(grid)
    mask = np.zeros(grid, dtype=bool)
    ffail = np.full(grid, -2, dtype=np.int64)
    ces = np.full(grid, np.nan)
    failures: List[Tuple[int, str]] = []
    warm = None
    for i, th in enumerate(thetas):
        th_c = float(min(1.0, max(0.0, th)))
        try:
            g = theta_map(ladder, l, th_c, warm=warm)
            warm = (g, l + th_c)
            ctx = build_induced(family, ladder, l, th_c, gamma=g)
            rep = br_check(ctx, params, n, classify=classify, early_stop=True)
        except Exception as exc:        # failures are data
            gammas[i] = np.nan
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        gammas[i] = g
        mask[i] = rep.br_pass
        ffail[i] = rep.first_fail
        ces[i] = rep.ce_slope
    return ScanResult(l=l, center=center, eps=eps, thetas=thetas,
                      gammas=gammas, br_mask=mask, first_fail=ffail,
                      ce_slopes=ces, failures=failures)


# ---------------------------------------------------------------------------
# secondary diagnostics


def depth_sums(report: RecurrenceReport, kinds=("free",)) -> np.ndarray:
    """Cumulative |depth| over the selected return kinds, by return index."""
    vals = [abs(r) for (_, r, k) in report.returns if k in kinds]
    return np.cumsum(vals) if vals else np.zeros(0)


def expansion_outside(ctx: InducedContext, params: RecurrenceParams,
                      x0: float, n: int, min_len: int = 10):
    """Exponent fits of log|D induced^m| over maximal orbit segments that
    avoid the graded neighborhood; a positive bulk exponent is the
    empirical form of expansion away from c."""
    from .induced import induced_orbit_deriv
    fam = ctx.family
    ev = fam.eval_native
    x = x0
    segs = []
    cur = 0.0
    cur_len = 0
    for _ in range(n):
        i = ctx.domain_of(x)
        m = 1 if i is None else i * ctx.q + 1
        logd = 0.0
        for _ in range(m):
            fx, d1, _ = ev(x, ctx.native)
            logd += math.log(max(abs(d1), 1e-300))
            x = fx
        if params.in_delta_plus(x):
            if cur_len >= min_len:
                segs.append(cur / cur_len)
            cur, cur_len = 0.0, 0
        else:
            cur += logd
            cur_len += 1
    if cur_len >= min_len:
        segs.append(cur / cur_len)
    return np.array(segs)
