"""Closed-form performance metrics for IDF / ISDF relaying.

Outage and relay usage are exact. Average capacity rests on the high-SNR
capacity expression, and the ISDF capacity and both BER expressions
additionally replace Q(x) or Q(exp(x)) by a Gaussian sum (see
:mod:`plcrelay.qapprox`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (
    Link,
    LinkParams,
    NoiseModel,
    Strategy,
    SystemConfig,
    Thresholds,
    normal_pdf,
    q_func,
)
from .qapprox import GaussianSumFit, Target, table1_constants

LN2 = math.log(2.0)

# Probability mass outside the fit domain above which a warning is raised.
FIT_MASS_TOL = 1e-3


class FitDomainWarning(UserWarning):
    """Integrand mass falls where the Gaussian-sum approximation is not trusted."""


@dataclass(frozen=True)
class Scenario:
    links: tuple[LinkParams, LinkParams, LinkParams]
    noise: NoiseModel
    thresholds: Thresholds
    strategy: Strategy = Strategy.IDF

    def __post_init__(self):
        if tuple(l.link for l in self.links) != (Link.SD, Link.SR, Link.RD):
            raise ValueError("links must be ordered SD, SR, RD")
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def with_strategy(self, strategy) -> "Scenario":
        return Scenario(self.links, self.noise, self.thresholds, Strategy(strategy))

    def with_gamma_1(self, gamma_1: float) -> "Scenario":
        return Scenario(self.links, self.noise, self.thresholds.with_gamma_1(gamma_1), self.strategy)


def build_scenario(cfg: SystemConfig, strategy=None) -> Scenario:
    return Scenario(cfg.links(), cfg.noise(), cfg.thresholds(),
                    Strategy(strategy) if strategy is not None else cfg.strategy)


@lru_cache(maxsize=None)
def default_fit(target: Target) -> GaussianSumFit:
    return table1_constants(target)


def _p_below(link: LinkParams, x: float) -> float:
    """Pr[gamma < x]."""
    return q_func((link.mu - math.log(x)) / link.sigma)


def _p_above(link: LinkParams, x: float) -> float:
    """Pr[gamma > x]."""
    return q_func((math.log(x) - link.mu) / link.sigma)


# --------------------------------------------------------------------------
#  Outage probability
# --------------------------------------------------------------------------

def outage_idf(s: Scenario) -> float:
    l0, l1, l2 = s.links
    th = s.thresholds
    return _p_below(l0, th.gamma_0) * (1.0 - _p_above(l1, th.gamma_th) * _p_above(l2, th.gamma_th))


def outage_isdf(s: Scenario) -> float:
    """Piecewise in the relay admission threshold: above the relayed
    threshold it blocks otherwise-successful relaying, below it it does not
    change the outage at all."""
    l0, l1, l2 = s.links
    th = s.thresholds
    g1, gth = th.gamma_1, th.gamma_th
    direct_fail = _p_below(l0, th.gamma_0)
    if g1 >= gth:
        return (direct_fail * _p_below(l1, g1)
                + direct_fail * _p_above(l1, g1) * _p_below(l2, gth))
    return (direct_fail * _p_below(l1, g1)
            + direct_fail * _p_above(l1, gth) * _p_below(l2, gth)
            + direct_fail * (_p_above(l1, g1) - _p_above(l1, gth)))


def outage_df(s: Scenario) -> float:
    l0, l1, l2 = s.links
    gth = s.thresholds.gamma_th
    return 1.0 - _p_above(l1, gth) * _p_above(l2, gth)


def outage_direct(s: Scenario) -> float:
    return _p_below(s.links[0], s.thresholds.gamma_0)


# --------------------------------------------------------------------------
#  Average capacity (high-SNR)
# --------------------------------------------------------------------------

def _log_moment_above(mu, sigma, a):
    """E[ln(g) 1{ln g > a}] for ln g ~ N(mu, sigma^2)."""
    z = (a - mu) / sigma
    return mu * q_func(z) + sigma * normal_pdf(z)


def _log_moment_below(mu, sigma, a):
    z = (a - mu) / sigma
    return mu * (1.0 - q_func(z)) - sigma * normal_pdf(z)


def _log_min_mean(l1: LinkParams, l2: LinkParams) -> float:
    """E[ln min(g1, g2)] for independent log-normal g1, g2."""
    s = math.hypot(l1.sigma, l2.sigma)
    d = (l1.mu - l2.mu) / s
    return (l1.mu * q_func(d) - l1.sigma ** 2 / s * normal_pdf(d)
            + l2.mu * q_func(-d) - l2.sigma ** 2 / s * normal_pdf(d))


def capacity_idf(s: Scenario) -> float:
    l0, l1, l2 = s.links
    k = s.noise.log_tau_weighted
    z0 = (math.log(s.thresholds.gamma_0) - l0.mu) / l0.sigma
    direct_ok = q_func(z0)
    return ((k + l0.mu) * direct_ok
            + l0.sigma * normal_pdf(z0)
            + 0.5 * (1.0 - direct_ok) * (k + _log_min_mean(l1, l2))) / LN2


def capacity_direct(s: Scenario) -> float:
    return (s.noise.log_tau_weighted + s.links[0].mu) / LN2


def capacity_df(s: Scenario) -> float:
    """Two-hop half-duplex DF that always relays and never uses the direct link."""
    return 0.5 * (s.noise.log_tau_weighted + _log_min_mean(s.links[1], s.links[2])) / LN2


@dataclass(frozen=True)
class CapacityTerms:
    """Per-term constants of the ISDF capacity and the three log-moments.

    ``S, E, G`` belong to the integral over the SR-link variable weighted by
    the approximated RD tail, ``T, F, H`` to the mirror-image integral.
    """

    S: np.ndarray
    T: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    I4: float
    I5: float
    I6: float


def _gauss_sum_tail_terms(lower, mu_a, sig_a, mu_b, sig_b, fit: GaussianSumFit):
    """Constants for  int_lower^inf (mu_a + sig_a u) phi(u) Qfit((sig_a u + mu_a - mu_b)/sig_b) du.

    Each Gaussian bump times phi(u) is weight * N(u; mean, width^2).
    Returns (width, mean, weight, value).
    """
    amp, psi, om = fit.arrays()
    c = mu_a - mu_b - sig_b * psi
    den = sig_b ** 2 * om ** 2 + 2.0 * sig_a ** 2
    width = om * sig_b / np.sqrt(den)
    mean = -2.0 * sig_a * c / den
    weight = amp * width * np.exp(-c ** 2 / den)
    z = (lower - mean) / width
    tail = q_func(z)
    value = weight * (mu_a * tail + sig_a * (mean * tail + width * normal_pdf(z)))
    return width, mean, weight, float(np.sum(value))


def _check_q_domain(lower, mu_a, sig_a, mu_b, sig_b, fit: GaussianSumFit, what: str):
    # Qfit argument below the fit domain where Q -> 1 but the bumps decay
    u_cut = (fit.domain[0] * sig_b - mu_a + mu_b) / sig_a
    mass = max(0.0, q_func(lower) - q_func(u_cut))
    if mass > FIT_MASS_TOL:
        warnings.warn(
            f"{what}: {mass:.2e} of the integrand mass lies below the Q-fit domain "
            f"{fit.domain}", FitDomainWarning, stacklevel=3)


def capacity_terms(s: Scenario, qfit: GaussianSumFit | None = None) -> CapacityTerms:
    qfit = default_fit(Target.Q) if qfit is None else qfit
    if qfit.target is not Target.Q:
        raise ValueError("ISDF capacity needs a Q(x) fit")
    l0, l1, l2 = s.links
    th = s.thresholds
    ln_g0, ln_g1 = math.log(th.gamma_0), math.log(th.gamma_1)

    i4 = _log_moment_above(l0.mu, l0.sigma, ln_g0)
    i5 = _log_moment_below(l0.mu, l0.sigma, ln_g0)

    a1 = (ln_g1 - l1.mu) / l1.sigma
    a2 = (ln_g1 - l2.mu) / l2.sigma
    # min(g1, g2) <= Gamma_1 with g1 > Gamma_1: the minimum is g2
    below = q_func(a1) * _log_moment_below(l2.mu, l2.sigma, ln_g1)
    _check_q_domain(a1, l1.mu, l1.sigma, l2.mu, l2.sigma, qfit, "ISDF capacity")
    _check_q_domain(a2, l2.mu, l2.sigma, l1.mu, l1.sigma, qfit, "ISDF capacity")
    S, E, G, g_part = _gauss_sum_tail_terms(a1, l1.mu, l1.sigma, l2.mu, l2.sigma, qfit)
    T, F, H, h_part = _gauss_sum_tail_terms(a2, l2.mu, l2.sigma, l1.mu, l1.sigma, qfit)
    return CapacityTerms(S=S, T=T, E=E, F=F, G=G, H=H, I4=i4, I5=i5, I6=below + g_part + h_part)


def capacity_isdf(s: Scenario, qfit: GaussianSumFit | None = None) -> float:
    l0, l1, _ = s.links
    th = s.thresholds
    terms = capacity_terms(s, qfit)
    direct_ok = _p_above(l0, th.gamma_0)
    direct_fail = 1.0 - direct_ok
    relay_ok = _p_above(l1, th.gamma_1)
    relay_fail = 1.0 - relay_ok
    k = s.noise.log_tau_weighted
    return (k * (direct_ok + relay_fail * direct_fail + 0.5 * direct_fail * relay_ok)
            + terms.I4 + relay_fail * terms.I5 + 0.5 * direct_fail * terms.I6) / LN2


# --------------------------------------------------------------------------
#  Average BER (BPSK)
# --------------------------------------------------------------------------

def _segment_limit(tau, x):
    if x == 0:
        return -math.inf
    if math.isinf(x):
        return math.inf
    return math.log(math.sqrt(tau * x))


def expected_ber_segment(link: LinkParams, noise: NoiseModel, fit: GaussianSumFit | None,
                         x1: float, x2: float) -> float:
    """E[P_e(g) 1{x1 < g <= x2}] with the Q(exp(.)) fit replacing Q(sqrt(tau g))."""
    fit = default_fit(Target.QOFEXP) if fit is None else fit
    if fit.target is not Target.QOFEXP:
        raise ValueError("BER segments need a Q(exp(x)) fit")
    if not 0 <= x1 < x2:
        raise ValueError(f"need 0 <= x1 < x2, got x1={x1}, x2={x2}")
    alpha, beta, delta = fit.arrays()
    sig, mu = link.sigma, link.mu
    A = np.sqrt(1.0 / delta ** 2 + 2.0 / sig ** 2)
    total = 0.0
    for lam_j, tau_j in zip(noise.weights, noise.tau):
        if lam_j == 0:
            continue
        m = math.log(tau_j) + mu
        B = beta / delta ** 2 + m / sig ** 2
        C = beta ** 2 / delta ** 2 + m ** 2 / (2.0 * sig ** 2)
        coef = 2.0 * lam_j * alpha / (sig * math.sqrt(2.0) * A) * np.exp(-(C - (B / A) ** 2))
        t1, t2 = _segment_limit(tau_j, x1), _segment_limit(tau_j, x2)
        lo = q_func(math.sqrt(2.0) * (A * t1 - B / A)) if np.isfinite(t1) else 1.0
        hi = q_func(math.sqrt(2.0) * (A * t2 - B / A)) if np.isfinite(t2) else 0.0
        total += float(np.sum(coef * (lo - hi)))

        # t = ln sqrt(tau g) ~ N(m/2, (sig/2)^2); below the domain Q(e^t) -> 1/2
        cut = min(fit.domain[0], t2)
        if cut > t1:
            mass = q_func((t1 - m / 2.0) / (sig / 2.0)) - q_func((cut - m / 2.0) / (sig / 2.0))
            if lam_j * mass > FIT_MASS_TOL:
                warnings.warn(
                    f"BER segment on link {link.link.name}: {mass:.2e} of the SNR mass lies "
                    f"below the Q(exp) fit domain {fit.domain}", FitDomainWarning, stacklevel=2)
    return total


def ber_direct(s: Scenario, fit: GaussianSumFit | None = None) -> float:
    return expected_ber_segment(s.links[0], s.noise, fit, 0.0, math.inf)


def ber_df(s: Scenario, fit: GaussianSumFit | None = None) -> float:
    e1 = expected_ber_segment(s.links[1], s.noise, fit, 0.0, math.inf)
    e2 = expected_ber_segment(s.links[2], s.noise, fit, 0.0, math.inf)
    return (1.0 - e1) * e2 + e1 * (1.0 - e2)


def ber_idf(s: Scenario, fit: GaussianSumFit | None = None) -> float:
    l0, l1, l2 = s.links
    g0 = s.thresholds.gamma_0
    direct = expected_ber_segment(l0, s.noise, fit, g0, math.inf)
    e1 = expected_ber_segment(l1, s.noise, fit, 0.0, math.inf)
    e2 = expected_ber_segment(l2, s.noise, fit, 0.0, math.inf)
    return direct + _p_below(l0, g0) * ((1.0 - e1) * e2 + e1 * (1.0 - e2))


def ber_isdf(s: Scenario, fit: GaussianSumFit | None = None, form: str = "exact") -> float:
    """Average ISDF BER.

    ``form="exact"`` (default) restricts the SR error average to
    g1 > Gamma_1, which is the event algebra of the protocol.
    ``form="typeset"`` uses the unconditioned SR error average and scales the
    RD average by Pr[g1 > Gamma_1], as in the published closed form; it
    overstates the BER where Pr[g1 < Gamma_1] is not small.
    """
    l0, l1, l2 = s.links
    th = s.thresholds
    direct_ok = expected_ber_segment(l0, s.noise, fit, th.gamma_0, math.inf)
    direct_weak = expected_ber_segment(l0, s.noise, fit, 0.0, th.gamma_0)
    relay_ok = _p_above(l1, th.gamma_1)
    e2 = expected_ber_segment(l2, s.noise, fit, 0.0, math.inf)
    if form == "typeset":
        e1 = expected_ber_segment(l1, s.noise, fit, 0.0, math.inf)
        relayed = (1.0 - e1) * (e2 * relay_ok) + e1 * (1.0 - e2 * relay_ok)
    elif form == "exact":
        a = expected_ber_segment(l1, s.noise, fit, th.gamma_1, math.inf)
        relayed = a + relay_ok * e2 - 2.0 * a * e2
    else:
        raise ValueError(f"unknown BER form {form!r}")
    return direct_ok + (1.0 - relay_ok) * direct_weak + _p_below(l0, th.gamma_0) * relayed


# --------------------------------------------------------------------------
#  Relay usage
# --------------------------------------------------------------------------

def relay_usage(s: Scenario, strategy=None) -> float:
    strategy = s.strategy if strategy is None else Strategy(strategy)
    l0, l1, _ = s.links
    th = s.thresholds
    if strategy is Strategy.IDF:
        return _p_below(l0, th.gamma_0)
    if strategy is Strategy.ISDF:
        return _p_below(l0, th.gamma_0) * _p_above(l1, th.gamma_1)
    if strategy is Strategy.DF:
        return 1.0
    return 0.0


# --------------------------------------------------------------------------
#  Dispatch
# --------------------------------------------------------------------------

METRICS = ("outage", "capacity", "ber", "usage")

_OUTAGE = {Strategy.IDF: outage_idf, Strategy.ISDF: outage_isdf,
           Strategy.DF: outage_df, Strategy.DIRECT: outage_direct}
_CAPACITY = {Strategy.IDF: capacity_idf, Strategy.DF: capacity_df, Strategy.DIRECT: capacity_direct}
_BER = {Strategy.IDF: ber_idf, Strategy.DF: ber_df, Strategy.DIRECT: ber_direct}


def evaluate(s: Scenario, metric: str, strategy=None, qfit: GaussianSumFit | None = None,
             efit: GaussianSumFit | None = None) -> float:
    """Closed-form ``metric`` for ``strategy`` (defaults to the scenario's)."""
    strategy = s.strategy if strategy is None else Strategy(strategy)
    if metric == "outage":
        return _OUTAGE[strategy](s)
    if metric == "capacity":
        if strategy is Strategy.ISDF:
            return capacity_isdf(s, qfit)
        return _CAPACITY[strategy](s)
    if metric == "ber":
        if strategy is Strategy.ISDF:
            return ber_isdf(s, efit)
        return _BER[strategy](s, efit)
    if metric == "usage":
        return relay_usage(s, strategy)
    raise ValueError(f"unknown metric {metric!r}; valid: {', '.join(METRICS)}")
