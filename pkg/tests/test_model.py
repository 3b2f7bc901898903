import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from plcrelay.model import (Link, NoiseModel, PowerBudget, SystemConfig, Topology, FadingParams,
                            db_to_lin, derive_noise, instantaneous_capacity, lin_to_db, q_func,
                            received_power, snr_cdf, snr_params, snr_sf, thresholds, xi_db_to_nat,
                            xi_nat_to_db)


def test_db_round_trip():
    assert db_to_lin(30.0) == pytest.approx(1000.0)
    assert lin_to_db(db_to_lin(17.3)) == pytest.approx(17.3)


def test_xi_conversion():
    assert xi_db_to_nat(3.0) == pytest.approx(0.690776, rel=1e-6)
    assert xi_nat_to_db(xi_db_to_nat(4.2)) == pytest.approx(4.2)


def test_fading_unit_energy_mean():
    f = FadingParams(3.0)
    assert f.Xi == pytest.approx(-f.xi_nat ** 2)
    # E[h^2] = exp(2 Xi + 2 xi^2) = 1
    assert math.exp(2 * f.Xi + 2 * f.xi_nat ** 2) == pytest.approx(1.0)


def test_fading_rejects_nonpositive():
    with pytest.raises(ValueError):
        FadingParams(0.0)


def test_q_func_against_scipy():
    x = np.linspace(-8, 8, 33)
    assert np.allclose(q_func(x), stats.norm.sf(x), rtol=1e-13, atol=0)
    assert isinstance(q_func(0.3), float)


class TestNoise:
    def test_no_impulses(self):
        n = derive_noise(0.0, 10.0)
        assert n.sigma_w2 == 1.0
        assert n.eps2[1] == pytest.approx(11.0)
        assert n.weights == (1.0, 0.0)
        assert n.n0 == pytest.approx(1.0)

    def test_reference_values(self):
        n = derive_noise(0.1, 10.0)
        assert n.sigma_w2 == pytest.approx(0.5)
        assert n.eps2[1] == pytest.approx(5.5)
        assert n.tau[0] == pytest.approx(1.0)
        assert n.tau[1] == pytest.approx(1.0 / 11.0)
        assert 0.9 * 0.5 + 0.1 * 5.5 == pytest.approx(n.n0)

    def test_degenerate_mixture(self):
        n = derive_noise(1.0, 0.0)
        assert n.sigma_l2 == 0.0
        assert n.eps2[0] == n.eps2[1]

    @pytest.mark.parametrize("lam,eta", [(-0.1, 1.0), (1.1, 1.0), (0.5, -1.0)])
    def test_rejects(self, lam, eta):
        with pytest.raises(ValueError):
            derive_noise(lam, eta)

    @given(st.floats(0, 1), st.floats(0, 100), st.floats(1e-3, 1e3))
    def test_n0_identity_and_tau_order(self, lam, eta, n0):
        n = derive_noise(lam, eta, n0)
        w1, w2 = n.weights
        e1, e2 = n.eps2
        assert w1 * e1 + w2 * e2 == pytest.approx(n.n0, rel=1e-12)
        assert n.n0 == pytest.approx(n0, rel=1e-12)
        assert n.sigma_l2 == pytest.approx(eta * n.sigma_w2)
        assert n.tau[0] >= n.tau[1]
        if eta > 1e-9:
            assert n.tau[0] > n.tau[1]


class TestPower:
    def test_direct_link(self):
        topo = Topology(400.0, 0.5, 50.0)
        budget = PowerBudget(p_t_db=30.0 + 10 * math.log10(2), p_f=0.5)  # P_S = 30 dB
        assert lin_to_db(received_power(Link.SD, topo, budget)) == pytest.approx(10.0)
        assert lin_to_db(received_power(Link.SR, topo, budget)) == pytest.approx(20.0)

    def test_zero_path_loss(self):
        topo = Topology(400.0, 0.3, 0.0)
        budget = PowerBudget(p_t_db=25.0, p_f=0.7)
        assert received_power(Link.SD, topo, budget) == pytest.approx(budget.p_s)
        assert received_power(Link.SR, topo, budget) == pytest.approx(budget.p_s)
        assert received_power(Link.RD, topo, budget) == pytest.approx(budget.p_r)

    @given(st.floats(100, 2000), st.floats(0.01, 0.99), st.floats(-20, 80), st.floats(0.01, 0.99))
    def test_budget_and_distances(self, d0, df, pt, pf):
        topo = Topology(d0, df, 50.0)
        _, d1, d2 = topo.distances_m
        assert d1 + d2 == pytest.approx(d0)
        b = PowerBudget(pt, pf)
        assert b.p_s + b.p_r == pytest.approx(b.p_t)


class TestSnr:
    def test_reference_params(self):
        lp = snr_params(Link.SD, FadingParams(3.0), 1.0, derive_noise(0.1, 10.0))
        assert lp.mu == pytest.approx(-0.9544, abs=1e-4)
        assert lp.sigma == pytest.approx(1.3816, abs=1e-4)

    def test_doubling_power(self):
        n = derive_noise(0.1, 10.0)
        a = snr_params(Link.SD, FadingParams(3.0), 5.0, n)
        b = snr_params(Link.SD, FadingParams(3.0), 10.0, n)
        assert b.mu - a.mu == pytest.approx(math.log(2))
        assert a.sigma == b.sigma

    def test_cdf_values(self):
        lp = snr_params(Link.SD, FadingParams(3.0), 10.0, derive_noise(0.1, 10.0))
        assert snr_cdf(math.exp(lp.mu), lp) == pytest.approx(0.5)
        assert snr_cdf(0.0, lp) == 0.0
        assert snr_cdf(1e300, lp) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            snr_cdf(-1.0, lp)

    def test_cdf_standard_point(self):
        lp = snr_params(Link.SD, FadingParams(3.0), 1.0, derive_noise(0.1, 10.0))
        lp = type(lp)(link=lp.link, received_power=1.0, mu=0.0, sigma=1.0, Xi=lp.Xi)
        assert snr_cdf(math.e, lp) == pytest.approx(0.841345, abs=1e-6)
        assert snr_sf(math.e, lp) == pytest.approx(1 - 0.841345, abs=1e-6)

    @given(st.lists(st.floats(0, 1e6), min_size=2, max_size=20))
    def test_cdf_monotone(self, xs):
        lp = SystemConfig().links()[0]
        xs = sorted(xs)
        vals = [snr_cdf(x, lp) for x in xs]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestThresholds:
    def test_no_impulses(self):
        th = thresholds(1.0, derive_noise(0.0, 7.0))
        assert th.gamma_0 == pytest.approx(4.0)
        assert th.gamma_th == pytest.approx(8.0)

    def test_reference(self):
        th = thresholds(4.0, derive_noise(0.1, 10.0))
        assert th.gamma_0 == pytest.approx(16 * 11 ** 0.1)
        assert th.gamma_0 == pytest.approx(20.34, abs=5e-3)
        assert th.gamma_1 == th.gamma_th

    @given(st.floats(0, 1), st.floats(0, 50), st.floats(0.1, 8))
    def test_ratio(self, lam, eta, r):
        th = thresholds(r, derive_noise(lam, eta))
        assert th.gamma_th / th.gamma_0 == pytest.approx(2 ** r, rel=1e-12)

    def test_gamma1_from_config(self):
        cfg = SystemConfig(gamma1_factor=0.25)
        th = cfg.thresholds()
        assert th.gamma_1 == pytest.approx(th.gamma_th / 4)
        th = SystemConfig(gamma1_db=10.0).thresholds()
        assert th.gamma_1 == pytest.approx(10.0)


class TestCapacity:
    def test_zero(self):
        assert instantaneous_capacity(0.0, derive_noise(0.1, 10.0)) == 0.0
        with pytest.raises(ValueError):
            instantaneous_capacity(0.0, derive_noise(0.1, 10.0), mode="high_snr")

    def test_no_impulses(self):
        g = np.array([0.5, 3.0, 100.0])
        assert np.allclose(instantaneous_capacity(g, derive_noise(0.0, 10.0)), np.log2(1 + g / 2))

    def test_high_snr_gap(self):
        n = derive_noise(0.1, 10.0)
        g = np.geomspace(100 / n.tau[1], 1e8, 50)
        ex = instantaneous_capacity(g, n)
        hi = instantaneous_capacity(g, n, mode="high_snr")
        assert np.all(np.abs(ex - hi) / ex < 0.01)
        g = np.geomspace(1e3 / min(n.tau), 1e9, 50)
        assert np.all(np.abs(instantaneous_capacity(g, n) - instantaneous_capacity(g, n, mode="high_snr")) < 1e-3)

    @given(st.floats(0, 1), st.floats(0, 50))
    def test_increasing_concave(self, lam, eta):
        n = derive_noise(lam, eta)
        g = np.linspace(0, 200, 401)
        c = instantaneous_capacity(g, n)
        assert np.all(np.diff(c) > 0)
        assert np.all(np.diff(c, 2) < 1e-12)


def test_unit_energy_sampled():
    rng = np.random.default_rng(7)
    for lp in SystemConfig(xi_db=(2.0, 3.0, 4.0)).links():
        h2 = np.exp(2 * (lp.Xi + lp.xi_nat * rng.standard_normal(1_000_000)))
        se = h2.std(ddof=1) / math.sqrt(h2.size)
        assert abs(h2.mean() - 1.0) < 3 * se


def test_config_links_and_replace():
    cfg = SystemConfig()
    links = cfg.links()
    assert [l.link for l in links] == list(Link)
    # SD is 20 dB below the 27 dB source power at the defaults
    assert lin_to_db(links[0].received_power) == pytest.approx(27.0 - 20.0, abs=0.02)
    assert cfg.replace(p_t_db=40.0).p_t_db == 40.0
    with pytest.raises(ValueError):
        SystemConfig(xi_db=(1.0, 2.0))
    with pytest.raises((TypeError, ValueError)):
        cfg.replace(nonsense=1)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(lam=0.1, eta=1.0, sigma_w2=0.0)
