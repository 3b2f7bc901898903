"""Physical-layer parameter algebra for a three-node power-line relay link.

Log-normal channel gains, Bernoulli-Gaussian noise, distance-dependent
attenuation in dB/km and the rate-to-SNR thresholds used by the incremental
relaying strategies all live here. Every type is a frozen dataclass.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import erfc

LN10 = math.log(10.0)
SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


class Link(enum.IntEnum):
    SD = 0
    SR = 1
    RD = 2


class Strategy(str, enum.Enum):
    IDF = "idf"
    ISDF = "isdf"
    DF = "df"
    DIRECT = "direct"


# --------------------------------------------------------------------------
#  dB helpers
# --------------------------------------------------------------------------

def db_to_lin(db):
    """Power ratio in dB to linear scale."""
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def lin_to_db(x):
    return 10.0 * np.log10(x)


def xi_db_to_nat(xi_db):
    """Log-amplitude spread in dB (10 xi / ln 10 convention) to natural units."""
    return xi_db * LN10 / 10.0


def xi_nat_to_db(xi_nat):
    return 10.0 * xi_nat / LN10


# --------------------------------------------------------------------------
#  Gaussian Q-function and its derivatives (machine precision)
# --------------------------------------------------------------------------

def q_func(x):
    """Gaussian tail probability Q(x) via erfc; accurate far into both tails."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / SQRT2)
    return float(out) if out.ndim == 0 else out


def q_prime(x):
    return -np.exp(-0.5 * np.square(x)) / SQRT2PI


def q_second(x):
    return x * np.exp(-0.5 * np.square(x)) / SQRT2PI


def normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / SQRT2PI


# --------------------------------------------------------------------------
#  Domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FadingParams:
    """Log-normal fading of one link with unit channel energy, E[h^2] = 1."""

    xi_db: float

    def __post_init__(self):
        if not self.xi_db > 0:
            raise ValueError(f"xi_db must be positive, got {self.xi_db}")

    @property
    def xi_nat(self) -> float:
        return xi_db_to_nat(self.xi_db)

    @property
    def Xi(self) -> float:
        return -self.xi_nat ** 2


@dataclass(frozen=True)
class NoiseModel:
    """Bernoulli-Gaussian noise: background N(0, sigma_w2) plus, with
    probability ``lam``, an impulse N(0, sigma_l2 = eta * sigma_w2)."""

    lam: float
    eta: float
    sigma_w2: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"impulse probability must lie in [0, 1], got {self.lam}")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if not self.sigma_w2 > 0:
            raise ValueError("sigma_w2 must be positive")

    @property
    def sigma_l2(self) -> float:
        return self.eta * self.sigma_w2

    @property
    def weights(self) -> tuple[float, float]:
        return (1.0 - self.lam, self.lam)

    @property
    def eps2(self) -> tuple[float, float]:
        return (self.sigma_w2, self.sigma_w2 + self.sigma_l2)

    @property
    def n0(self) -> float:
        return self.sigma_w2 * (1.0 + self.lam * self.eta)

    @property
    def tau(self) -> tuple[float, float]:
        k = 1.0 + self.lam * self.eta
        return (k / 2.0, k / (2.0 * (1.0 + self.eta)))

    @property
    def log_tau_weighted(self) -> float:
        """sum_j Lambda_j ln(tau_j), the constant of the high-SNR capacity."""
        (w1, w2), (t1, t2) = self.weights, self.tau
        return w1 * math.log(t1) + w2 * math.log(t2)


def derive_noise(lam: float, eta: float, n0_target: float = 1.0) -> NoiseModel:
    """Build the noise model whose average power equals ``n0_target``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"impulse probability must lie in [0, 1], got {lam}")
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    if not n0_target > 0:
        raise ValueError("n0_target must be positive")
    return NoiseModel(lam=lam, eta=eta, sigma_w2=n0_target / (1.0 + lam * eta))


@dataclass(frozen=True)
class Topology:
    d0_m: float
    d_f: float
    p_l_db_per_km: float

    def __post_init__(self):
        if not self.d0_m > 0:
            raise ValueError("d0_m must be positive")
        if not 0.0 < self.d_f < 1.0:
            raise ValueError(f"d_f must lie in (0, 1), got {self.d_f}")
        if self.p_l_db_per_km < 0:
            raise ValueError("path loss must be non-negative")

    @property
    def distances_m(self) -> tuple[float, float, float]:
        return (self.d0_m, self.d_f * self.d0_m, (1.0 - self.d_f) * self.d0_m)


@dataclass(frozen=True)
class PowerBudget:
    """Total power in dB relative to the noise power, split p_f : 1 - p_f."""

    p_t_db: float
    p_f: float

    def __post_init__(self):
        if not 0.0 < self.p_f < 1.0:
            raise ValueError(f"p_f must lie in (0, 1), got {self.p_f}")

    @property
    def p_t(self) -> float:
        return db_to_lin(self.p_t_db)

    @property
    def p_s(self) -> float:
        return self.p_f * self.p_t

    @property
    def p_r(self) -> float:
        return (1.0 - self.p_f) * self.p_t


@dataclass(frozen=True)
class LinkParams:
    """Log-normal parameters of the instantaneous SNR of one link."""

    link: Link
    received_power: float
    mu: float
    sigma: float
    Xi: float

    @property
    def xi_nat(self) -> float:
        return self.sigma / 2.0

    @property
    def mean_snr(self) -> float:
        """E[gamma] = P/N0 (unit channel energy)."""
        return math.exp(self.mu - 2.0 * self.Xi)


@dataclass(frozen=True)
class Thresholds:
    r_th: float
    gamma_0: float
    gamma_th: float
    gamma_1: float

    def with_gamma_1(self, gamma_1: float) -> "Thresholds":
        return replace(self, gamma_1=gamma_1)


# --------------------------------------------------------------------------
#  Operations
# --------------------------------------------------------------------------

_TX_OF_LINK = {Link.SD: "source", Link.SR: "source", Link.RD: "relay"}


def received_power(link: Link, topology: Topology, budget: PowerBudget) -> float:
    """Linear received power: transmitter dB minus d(km) * P_L(dB/km)."""
    link = Link(link)
    p_tx = budget.p_s if _TX_OF_LINK[link] == "source" else budget.p_r
    d_km = topology.distances_m[link] / 1000.0
    return db_to_lin(lin_to_db(p_tx) - d_km * topology.p_l_db_per_km)


def snr_params(link: Link, fading: FadingParams, power: float, noise: NoiseModel) -> LinkParams:
    if not power > 0:
        raise ValueError("received power must be positive")
    xi = fading.xi_nat
    return LinkParams(
        link=Link(link),
        received_power=power,
        mu=2.0 * fading.Xi + math.log(power / noise.n0),
        sigma=2.0 * xi,
        Xi=fading.Xi,
    )


def snr_cdf(x, link: LinkParams):
    """Pr[gamma <= x] for the log-normal SNR of ``link``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("SNR must be non-negative")
    with np.errstate(divide="ignore"):
        z = (np.log(x) - link.mu) / link.sigma
    out = 1.0 - np.asarray(q_func(z))
    return float(out) if out.ndim == 0 else out


def snr_sf(x: float, link: LinkParams) -> float:
    """Pr[gamma > x]; computed directly to keep precision in the upper tail."""
    return q_func((math.log(x) - link.mu) / link.sigma)


def thresholds(r_th: float, noise: NoiseModel, gamma_1: float | None = None) -> Thresholds:
    """SNR thresholds for rate ``r_th``; ``gamma_1`` defaults to the relayed threshold."""
    if not r_th > 0:
        raise ValueError("r_th must be positive")
    (w1, w2), (t1, t2) = noise.weights, noise.tau
    base = t1 ** (-w1) * t2 ** (-w2)
    g0 = base * 2.0 ** r_th
    gth = base * 2.0 ** (2.0 * r_th)
    g1 = gth if gamma_1 is None else float(gamma_1)
    if not g1 > 0:
        raise ValueError("gamma_1 must be positive")
    return Thresholds(r_th=r_th, gamma_0=g0, gamma_th=gth, gamma_1=g1)


def instantaneous_capacity(gamma, noise: NoiseModel, mode: str = "exact"):
    """Capacity in bit/s/Hz of a link with SNR ``gamma`` under the mixture noise.

    ``mode="high_snr"`` drops the ``1 +`` inside the logarithms.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    (w1, w2), (t1, t2) = noise.weights, noise.tau
    if mode == "exact":
        out = w1 * np.log2(1.0 + t1 * g) + w2 * np.log2(1.0 + t2 * g)
    elif mode == "high_snr":
        if np.any(g == 0):
            raise ValueError("high_snr capacity diverges at gamma = 0")
        out = (noise.log_tau_weighted + np.log(g)) / math.log(2.0)
    else:
        raise ValueError(f"unknown capacity mode {mode!r}")
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
#  Full scenario configuration
# --------------------------------------------------------------------------

def _xi_triple(xi_db) -> tuple[float, float, float]:
    if np.ndim(xi_db) == 0:
        return (float(xi_db),) * 3
    vals = tuple(float(v) for v in xi_db)
    if len(vals) != 3:
        raise ValueError("xi_db must be a scalar or a triple (SD, SR, RD)")
    return vals


@dataclass(frozen=True)
class SystemConfig:
    """Everything needed to evaluate one operating point.

    ``gamma1_factor`` sets the relay admission threshold as a multiple of the
    relayed end-to-end threshold; ``gamma1_db`` overrides it with an absolute
    value when given.
    """

    p_t_db: float = 30.0
    p_f: float = 0.5
    d0_m: float = 400.0
    d_f: float = 0.5
    p_l_db_per_km: float = 50.0
    xi_db: float | Sequence[float] = 3.0
    impulse_prob: float = 0.1
    eta: float = 10.0
    r_th: float = 4.0
    gamma1_factor: float = 1.0
    gamma1_db: float | None = None
    n0: float = 1.0
    strategy: Strategy = Strategy.IDF
    _xi: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_xi", _xi_triple(self.xi_db))
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    @property
    def topology(self) -> Topology:
        return Topology(self.d0_m, self.d_f, self.p_l_db_per_km)

    @property
    def budget(self) -> PowerBudget:
        return PowerBudget(self.p_t_db, self.p_f)

    @property
    def fading(self) -> tuple[FadingParams, FadingParams, FadingParams]:
        return tuple(FadingParams(x) for x in self._xi)

    def noise(self) -> NoiseModel:
        return derive_noise(self.impulse_prob, self.eta, self.n0)

    def thresholds(self) -> Thresholds:
        noise = self.noise()
        th = thresholds(self.r_th, noise)
        g1 = db_to_lin(self.gamma1_db) if self.gamma1_db is not None else self.gamma1_factor * th.gamma_th
        return th.with_gamma_1(g1)

    def links(self) -> tuple[LinkParams, LinkParams, LinkParams]:
        noise, topo, budget = self.noise(), self.topology, self.budget
        return tuple(
            snr_params(k, f, received_power(k, topo, budget), noise)
            for k, f in zip(Link, self.fading)
        )
