"""Source/relay power split that minimises the IDF outage probability.

With the source taking a fraction p of the total power, every link enters the
outage through a Q-function whose argument is affine in ln p or ln(1 - p):

    a0 = v0 ln p - u0,   a1 = v1 ln p - u1,   a2 = v2 ln(1 - p) - u2

and the exact IDF outage is Q(a0) [Q(a1) + Q(a2) - Q(a1) Q(a2)]. Dropping the
product gives the approximation that is differentiated and minimised here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import Link, SystemConfig, q_func, q_prime, q_second, received_power

CERT_GRID = np.arange(1, 100) / 100.0
HIGH_POWER_ENDS = (0.05, 0.95)


@dataclass(frozen=True)
class AllocationProblem:
    """Slopes ``v`` and offsets ``u`` of the three Q arguments (SD, SR, RD)."""

    v: tuple[float, float, float]
    u: tuple[float, float, float]
    pmin: float = 1e-3

    def __post_init__(self):
        if len(self.v) != 3 or len(self.u) != 3:
            raise ValueError("v and u need one entry per link")
        if not all(x > 0 for x in self.v):
            raise ValueError("slopes v must be positive")
        if not 0 < self.pmin < 0.5:
            raise ValueError("pmin must lie in (0, 0.5)")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.pmin, 1.0 - self.pmin)

    @classmethod
    def from_config(cls, cfg: SystemConfig, pmin: float = 1e-3) -> "AllocationProblem":
        """Offsets follow the dB path-loss model, so the exact form equals
        the IDF outage of ``cfg.replace(p_f=p)``."""
        th = cfg.thresholds()
        noise = cfg.noise()
        gammas = (th.gamma_0, th.gamma_th, th.gamma_th)
        v, u = [], []
        for link, fad, gam in zip(Link, cfg.fading, gammas):
            # received power per unit of the transmitter's share of P_T
            share = cfg.budget.p_s if link is not Link.RD else cfg.budget.p_r
            gain = received_power(link, cfg.topology, cfg.budget) / share
            sigma = 2.0 * fad.xi_nat
            v.append(1.0 / sigma)
            u.append((math.log(gam) - 2.0 * fad.Xi - math.log(cfg.budget.p_t * gain / noise.n0)) / sigma)
        return cls(v=tuple(v), u=tuple(u), pmin=pmin)


@dataclass(frozen=True)
class AllocationResult:
    p_star: float
    outage_at_star: float
    convexity_certified: bool
    derivative_residual: float
    p_star_exact: float
    outage_at_exact: float
    high_power: bool
    method: str


def _check(p):
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0)) or np.any(~(arr < 1)):
        raise ValueError("p_f must lie strictly inside (0, 1)")
    return arr


def arguments(problem: AllocationProblem, p):
    p = _check(p)
    v, u = problem.v, problem.u
    lp, lq = np.log(p), np.log1p(-p)
    return v[0] * lp - u[0], v[1] * lp - u[1], v[2] * lq - u[2]


def high_power_condition(problem: AllocationProblem, p) -> bool:
    """All three Q arguments positive, i.e. every mean log-SNR clears its threshold."""
    return bool(all(np.all(a > 0) for a in arguments(problem, p)))


def outage_of_pf(problem: AllocationProblem, p, form: str = "exact"):
    a0, a1, a2 = arguments(problem, p)
    q0, q1, q2 = q_func(a0), q_func(a1), q_func(a2)
    if form == "exact":
        return q0 * (q1 + q2 - q1 * q2)
    if form == "approx":
        return q0 * (q1 + q2)
    raise ValueError(f"unknown form {form!r}; valid: exact, approx")


def derivatives(problem: AllocationProblem, p):
    """First and second derivative of the approximate outage in p."""
    p = _check(p)
    a0, a1, a2 = arguments(problem, p)
    v0, v1, v2 = problem.v
    q = 1.0 - p
    d0, d1, d2 = v0 / p, v1 / p, -v2 / q
    dd0, dd1, dd2 = -v0 / p ** 2, -v1 / p ** 2, -v2 / q ** 2

    f = q_func(a0)
    f1 = q_prime(a0) * d0
    f2 = q_second(a0) * d0 ** 2 + q_prime(a0) * dd0
    g = q_func(a1) + q_func(a2)
    g1 = q_prime(a1) * d1 + q_prime(a2) * d2
    g2 = (q_second(a1) * d1 ** 2 + q_prime(a1) * dd1
          + q_second(a2) * d2 ** 2 + q_prime(a2) * dd2)
    return f1 * g + f * g1, f2 * g + 2.0 * f1 * g1 + f * g2


def _first(problem, p):
    return float(derivatives(problem, p)[0])


def _golden_min(fun, lo, hi, grid=CERT_GRID):
    """Grid search followed by golden-section refinement around the best point."""
    pts = np.concatenate(([lo], grid[(grid > lo) & (grid < hi)], [hi]))
    vals = np.array([fun(x) for x in pts])
    k = int(np.argmin(vals))
    if k == 0 or k == len(pts) - 1:
        return float(pts[k])
    return float(optimize.golden(fun, brack=(pts[k - 1], pts[k], pts[k + 1]), tol=1e-12))


def optimize_allocation(problem: AllocationProblem) -> AllocationResult:
    """Root of the approximate first derivative by bisection; golden-section
    search on the exact outage when the derivative has no sign change."""
    lo, hi = problem.interval
    exact = lambda x: float(outage_of_pf(problem, x, "exact"))
    if _first(problem, lo) < 0 < _first(problem, hi):
        p_star = optimize.bisect(lambda x: _first(problem, x), lo, hi, xtol=1e-15, maxiter=200)
        method = "bisection"
    else:
        p_star = _golden_min(exact, lo, hi)
        method = "golden"
    p_exact = _golden_min(exact, lo, hi)
    second = derivatives(problem, CERT_GRID)[1]
    return AllocationResult(
        p_star=float(p_star),
        outage_at_star=exact(p_star),
        convexity_certified=bool(np.all(second > 0)),
        derivative_residual=abs(_first(problem, p_star)),
        p_star_exact=p_exact,
        outage_at_exact=exact(p_exact),
        high_power=high_power_condition(problem, np.array(HIGH_POWER_ENDS)),
        method=method,
    )
