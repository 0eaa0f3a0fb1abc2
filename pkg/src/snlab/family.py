"""One-parameter unimodal families: evaluation, iteration, derivative sums.

A family is described by an evaluator in its *native* parameter together
with the affine signed-parameter convention ``native = offset - sign * g``,
where ``g`` is the signed distance to the bifurcation (g = 0 at the fold,
g > 0 on the side where the periodic orbit has disappeared).  Everything
downstream works in the signed parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, SingularityError

LOG_DERIV_FLOOR = -690.0   # stands in for ln|f'| when |f'| underflows
_DERIV_TINY = 1e-300
MU_SN_QUADRATIC = 1.0 + 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class UnimodalFamily:
    """Immutable family descriptor; safe to share across workers."""

    name: str
    native_parameter_range: tuple
    critical_point: float
    q: int
    gamma_offset: float
    eval_native: Callable[[float, float], tuple]
    gamma_sign: float = 1.0
    gamma_window: float = 0.05
    third_deriv_native: Optional[Callable[[float, float], float]] = None
    kernel: Optional[str] = None

    def native_of_gamma(self, gamma: float) -> float:
        return self.gamma_offset - self.gamma_sign * gamma

    def gamma_of_native(self, native: float) -> float:
        return (self.gamma_offset - native) / self.gamma_sign

    def check_gamma(self, gamma: float) -> float:
        native = self.native_of_gamma(gamma)
        lo, hi = self.native_parameter_range
        if not (lo <= native <= hi):
            raise DomainError(
                f"signed parameter {gamma} maps to native {native}, outside {self.native_parameter_range}")
        return native


@dataclass
class OrbitRecord:
    """Raw orbit with running log-derivative sums.

    ``log_deriv_partial_sums[k]`` is sum of ln|f'| over the first k steps,
    with the underflow guard applied, so entry 0 is 0.
    """

    x0: float
    gamma: float
    samples: np.ndarray
    log_deriv_partial_sums: np.ndarray = field(repr=False)


def quadratic_family(q: int = 3) -> UnimodalFamily:
    """The built-in family mu*x*(1-x) around the period-q fold.

    For q = 3 the fold sits at mu = 1 + 2*sqrt(2) and the signed parameter
    is g = mu_sn - mu, so g > 0 (mu below the fold) is the intermittent
    side.
    """

    def _eval(x, mu):
        return mu * x * (1.0 - x), mu * (1.0 - 2.0 * x), -2.0 * mu

    if q != 3:
        raise DomainError("built-in quadratic family is set up for the period-3 fold (q=3)")
    return UnimodalFamily(
        name="quadratic",
        native_parameter_range=(1.0, 4.0),
        critical_point=0.5,
        q=3,
        gamma_offset=MU_SN_QUADRATIC,
        gamma_sign=1.0,
        eval_native=_eval,
        third_deriv_native=lambda x, mu: 0.0,
        kernel="quadratic",
    )


def evaluate(family: UnimodalFamily, x: float, gamma: float):
    """Map value and first two space derivatives at (x, gamma)."""
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x={x} outside [0,1]")
    native = family.check_gamma(gamma)
    return family.eval_native(x, native)


def _eval_unchecked(family, x, native):
    return family.eval_native(x, native)


def iterate(family: UnimodalFamily, x0: float, gamma: float, n: int) -> OrbitRecord:
    """Orbit of length n+1 with guarded running log-derivative sums."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if not (0.0 <= x0 <= 1.0):
        raise DomainError(f"x0={x0} outside [0,1]")
    native = family.check_gamma(gamma)
    if family.kernel == "quadratic":
        from . import _kernels
        samples, sums = _kernels.orbit_with_logsums(native, x0, n, LOG_DERIV_FLOOR)
        return OrbitRecord(x0, gamma, samples, sums)
    samples = np.empty(n + 1)
    sums = np.empty(n + 1)
    samples[0] = x0
    sums[0] = 0.0
    x = x0
    acc = 0.0
    ev = family.eval_native
    for i in range(n):
        fx, d1, _ = ev(x, native)
        acc += LOG_DERIV_FLOOR if abs(d1) < _DERIV_TINY else math.log(abs(d1))
        x = fx
        samples[i + 1] = x
        sums[i + 1] = acc
    return OrbitRecord(x0, gamma, samples, sums)


def iterate_point(family: UnimodalFamily, x: float, gamma: float, n: int) -> float:
    """f^n(x) without storing the orbit."""
    native = family.check_gamma(gamma)
    if family.kernel == "quadratic":
        from . import _kernels
        return _kernels.final_point(native, x, n)
    ev = family.eval_native
    for _ in range(n):
        x = ev(x, native)[0]
    return x


def iterate_with_derivs(family: UnimodalFamily, x: float, gamma: float, n: int):
    """(f^n(x), D f^n(x), D^2 f^n(x)) by chain rule along the orbit."""
    native = family.check_gamma(gamma)
    ev = family.eval_native
    d1, d2 = 1.0, 0.0
    for _ in range(n):
        fx, g1, g2 = ev(x, native)
        d2 = g2 * d1 * d1 + g1 * d2
        d1 = g1 * d1
        x = fx
    return x, d1, d2


def schwarzian_at(family: UnimodalFamily, x: float, gamma: float) -> float:
    """Sf = f'''/f' - (3/2)(f''/f')^2; raises near the critical point."""
    _, d1, d2 = evaluate(family, x, gamma)
    if abs(d1) < 1e-8:
        raise SingularityError(f"f' vanishes at x={x} (|f'|={abs(d1):.2e})")
    native = family.native_of_gamma(gamma)
    if family.third_deriv_native is not None:
        d3 = family.third_deriv_native(x, native)
    else:
        h = 1e-5
        lo = max(0.0, x - h)
        hi = min(1.0, x + h)
        _, _, p2 = family.eval_native(hi, native)
        _, _, m2 = family.eval_native(lo, native)
        d3 = (p2 - m2) / (hi - lo)
    r = d2 / d1
    return d3 / d1 - 1.5 * r * r


def lyapunov_slope(family: UnimodalFamily, x0: float, gamma: float, n: int,
                   burn_in: int = 0) -> float:
    """Least-squares slope of the log-derivative partial sums over [burn_in, n]."""
    if not n > burn_in >= 0:
        raise DomainError("need n > burn_in >= 0")
    native = family.check_gamma(gamma)
    if family.kernel == "quadratic":
        from . import _kernels
        return _kernels.lyap_slope(native, x0, n, burn_in, LOG_DERIV_FLOOR)
    rec = iterate(family, x0, gamma, n)
    k = np.arange(burn_in, n + 1, dtype=float)
    s = rec.log_deriv_partial_sums[burn_in:]
    k -= k.mean()
    return float(np.dot(k, s) / np.dot(k, k))


def unimodality_profile(family: UnimodalFamily, gamma: float, grid: int = 200):
    """Map values on a grid; helper for the increasing/decreasing check."""
    native = family.check_gamma(gamma)
    xs = np.linspace(0.0, 1.0, grid)
    vals = np.array([family.eval_native(x, native)[0] for x in xs])
    return xs, vals


def orbit_min_distance(family: UnimodalFamily, x0: float, gamma: float, n: int,
                       target: float) -> float:
    """min |f^i(x0) - target| over 0 <= i <= n."""
    native = family.check_gamma(gamma)
    ev = family.eval_native
    x = x0
    best = abs(x - target)
    for _ in range(n):
        x = ev(x, native)[0]
        d = abs(x - target)
        if d < best:
            best = d
    return best
