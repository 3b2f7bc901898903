"""Incremental and incremental-selective decode-and-forward relaying over
power-line channels: closed-form metrics, Gaussian-sum Q approximations,
a Monte Carlo oracle and an outage-optimal power split."""

__version__ = "0.1.0"

from .model import Link, Strategy, SystemConfig  # noqa: E402,F401
from .analytic import Scenario, build_scenario, evaluate  # noqa: E402,F401
