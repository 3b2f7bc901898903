"""Per-symbol Monte Carlo of the relaying protocols.

Every trial draws three log-normal channel gains, one impulse indicator and
one Gaussian noise sample per reception (SD slot 1 at D, SR slot 1 at R, RD
slot 2 at D), and a random BPSK bit. The draw is the same whatever strategy
is evaluated, so runs with equal seeds are matched trial by trial.

Random numbers come from Philox substreams keyed by (seed, chunk index);
chunk boundaries are fixed, so results do not depend on how chunks are
scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import Scenario
from .model import NoiseModel, Strategy, instantaneous_capacity

CHUNK = 1 << 18
SIM_METRICS = ("outage", "ber", "capacity", "usage")


@dataclass(frozen=True)
class ChannelDraw:
    """Channel gains, impulse indicators and SNRs for a batch of trials.

    Arrays have shape (n, 3) with columns SD, SR, RD.
    """

    h: np.ndarray
    b: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class TrialOutcome:
    used_relay: np.ndarray
    outage: np.ndarray
    bit_error: np.ndarray
    rate: np.ndarray

    def __len__(self):
        return len(self.used_relay)


@dataclass(frozen=True)
class SimConfig:
    n_trials: int = 1_000_000
    seed: int = 0
    strategy: Strategy = Strategy.IDF
    metric: str = "outage"
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.metric not in SIM_METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; valid: {', '.join(SIM_METRICS)}")


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    method: str
    n_samples: int
    stderr: float
    reliable: bool = True

    def within(self, other: float, k: float = 3.0) -> bool:
        return abs(self.value - other) <= k * self.stderr


def rng_stream(seed: int, chunk: int = 0, key: tuple = ()) -> np.random.Generator:
    """Philox generator for substream ``key + (chunk,)`` of ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key) + (chunk,))
    return np.random.Generator(np.random.Philox(ss))


def sample_channel(links, noise: NoiseModel, rng: np.random.Generator, n: int = 1) -> ChannelDraw:
    """Draw ``n`` independent channel realisations for the three links."""
    xi = np.array([l.xi_nat for l in links])
    Xi = np.array([l.Xi for l in links])
    snr_mean = np.array([l.mean_snr for l in links])
    h = np.exp(Xi + xi * rng.standard_normal((n, 3)))
    b = rng.random((n, 3)) < noise.lam
    return ChannelDraw(h=h, b=b, gamma=snr_mean * h ** 2)


def _detect_errors(draw: ChannelDraw, links, noise: NoiseModel, bits: np.ndarray,
                   g: np.ndarray) -> np.ndarray:
    """Hard-decision BPSK errors on each of the three receptions.

    The decision statistic is sqrt(P) h s + sqrt(2) z with z the mixture
    noise, which makes the conditional error probability Q(sqrt(tau_j gamma))
    in impulse state j.
    """
    power = np.array([l.received_power for l in links])
    sw = math.sqrt(noise.sigma_w2)
    sl = math.sqrt(noise.sigma_l2)
    z = sw * g[:, :3] + draw.b * sl * g[:, 3:]
    r = np.sqrt(power) * draw.h * bits[:, None] + math.sqrt(2.0) * z
    return (r * bits[:, None]) < 0


def _decide(strategy: Strategy, gamma: np.ndarray, err: np.ndarray, th, noise: NoiseModel):
    g0, g1, g2 = gamma[:, 0], gamma[:, 1], gamma[:, 2]
    gmin = np.minimum(g1, g2)
    direct_ok = g0 >= th.gamma_0
    hop_ok = gmin >= th.gamma_th
    relayed_err = err[:, 1] ^ err[:, 2]
    c_direct = instantaneous_capacity(g0, noise)
    c_relay = 0.5 * instantaneous_capacity(gmin, noise)

    if strategy is Strategy.DIRECT:
        used = np.zeros_like(direct_ok)
        outage = ~direct_ok
    elif strategy is Strategy.DF:
        used = np.ones_like(direct_ok)
        outage = ~hop_ok
    elif strategy is Strategy.IDF:
        used = ~direct_ok
        outage = used & ~hop_ok
    elif strategy is Strategy.ISDF:
        admitted = g1 >= th.gamma_1
        used = ~direct_ok & admitted
        outage = ~direct_ok & (~admitted | ~hop_ok)
    else:
        raise ValueError(strategy)
    bit_error = np.where(used, relayed_err, err[:, 0])
    rate = np.where(used, c_relay, c_direct)
    return TrialOutcome(used_relay=used, outage=outage, bit_error=bit_error, rate=rate)


def _draw_batch(s: Scenario, rng: np.random.Generator, n: int):
    draw = sample_channel(s.links, s.noise, rng, n)
    g = rng.standard_normal((n, 6))
    bits = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    err = _detect_errors(draw, s.links, s.noise, bits, g)
    return draw, err


def run_trial(s: Scenario, draw: ChannelDraw, data_bit: int, rng: np.random.Generator) -> TrialOutcome:
    """One protocol run on a single channel draw (arrays of length 1).

    ``data_bit`` is 0/1 and mapped to -1/+1; ``rng`` supplies the receiver
    noise samples.
    """
    bits = np.array([1.0 if data_bit else -1.0])
    g = rng.standard_normal((len(draw.h), 6))
    err = _detect_errors(draw, s.links, s.noise, bits, g)
    return _decide(s.strategy, draw.gamma, err, s.thresholds, s.noise)


def run_batch(s: Scenario, n: int, rng: np.random.Generator, strategies=None) -> dict:
    """Outcomes of ``n`` trials for each strategy, all on the same draws."""
    strategies = [s.strategy] if strategies is None else [Strategy(x) for x in strategies]
    draw, err = _draw_batch(s, rng, n)
    return {st: _decide(st, draw.gamma, err, s.thresholds, s.noise) for st in strategies}


def _field(outcome: TrialOutcome, metric: str) -> np.ndarray:
    return {"outage": outcome.outage, "ber": outcome.bit_error,
            "capacity": outcome.rate, "usage": outcome.used_relay}[metric]


def estimate_many(s: Scenario, n_trials: int, seed: int, strategies, metrics=SIM_METRICS,
                  workers: int = 1, chunk: int = CHUNK, key: tuple = ()) -> dict:
    """Monte Carlo estimates keyed by (strategy, metric) from one set of draws.

    ``key`` selects an independent family of substreams, e.g. one per sweep
    point.
    """
    strategies = [Strategy(x) for x in strategies]
    for m in metrics:
        if m not in SIM_METRICS:
            raise ValueError(f"unknown metric {m!r}; valid: {', '.join(SIM_METRICS)}")
    sizes = [min(chunk, n_trials - k * chunk) for k in range(-(-n_trials // chunk))]

    def one(k):
        out = run_batch(s, sizes[k], rng_stream(seed, k, key), strategies)
        sums = {}
        for st, o in out.items():
            for m in metrics:
                v = _field(o, m).astype(float)
                sums[st, m] = (float(v.sum()), float(np.dot(v, v)))
        return sums

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(one, range(len(sizes))))
    else:
        parts = [one(k) for k in range(len(sizes))]

    result = {}
    for st in strategies:
        for m in metrics:
            tot = sum(p[st, m][0] for p in parts)
            sq = sum(p[st, m][1] for p in parts)
            mean = tot / n_trials
            if m == "capacity":
                var = max(sq / n_trials - mean * mean, 0.0) * n_trials / max(n_trials - 1, 1)
            else:
                var = mean * (1.0 - mean)
            se = math.sqrt(var / n_trials)
            result[st, m] = MetricEstimate(value=mean, method="monte_carlo", n_samples=n_trials,
                                           stderr=se, reliable=n_trials > 1 and se > 0)
    return result


def estimate(s: Scenario, sim: SimConfig) -> MetricEstimate:
    res = estimate_many(s, sim.n_trials, sim.seed, [sim.strategy], [sim.metric], workers=sim.workers)
    return res[sim.strategy, sim.metric]
