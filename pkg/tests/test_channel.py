import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from cpsim.channel import (LinkClass, ShadowingProcess, achievable_rate, blockage_loss_db, classify_link,
                           fading_from_normals, fading_gain, large_scale_loss, link_state, pathloss_db,
                           rician_k_linear, snr_db)
from cpsim.config import ChannelParams
from cpsim.world import building, vehicle, world_from_entities

P = ChannelParams()


def loss_for_snr(snr_target_db, bandwidth, params=P):
    """Total loss that yields ``snr_target_db`` with unit fading."""
    noise = params.noise_psd_dbm_hz + 10 * math.log10(bandwidth) + params.noise_figure_db
    return params.tx_power_dbm - noise - snr_target_db


# --- classification --------------------------------------------------------

def scene(*extra):
    return world_from_entities([vehicle(0, 0, 0), vehicle(1, 60, 0), *extra], ego_id=0)


def test_clear_link_is_los():
    assert classify_link(scene(), 1, 0) == (LinkClass.LOS, 0)


def test_building_makes_nlos():
    w = scene(building(10, 30, 0, 5, 5))
    assert classify_link(w, 1, 0) == (LinkClass.NLOS, 0)


def test_two_vehicles_make_nlosv():
    w = scene(vehicle(2, 20, 0, is_cov=False), vehicle(3, 40, 0.5))
    assert classify_link(w, 1, 0) == (LinkClass.NLOSV, 2)


def test_building_dominates_vehicles():
    w = scene(vehicle(2, 20, 0), building(10, 40, 0, 3, 3))
    assert classify_link(w, 1, 0)[0] == LinkClass.NLOS


def test_pedestrians_do_not_block_links():
    from cpsim.world import pedestrian
    w = scene(pedestrian(5, 30, 0))
    assert classify_link(w, 1, 0) == (LinkClass.LOS, 0)


def test_unknown_endpoint():
    with pytest.raises(KeyError):
        classify_link(scene(), 99, 0)


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.booleans()), max_size=8),
       st.floats(-60, 60), st.floats(-60, 60))
def test_classification_symmetric(obstacles, x, y):
    ents = [vehicle(0, 0, 0), vehicle(1, x + 200, y)]
    for k, (ox, oy, is_bld) in enumerate(obstacles):
        ents.append(building(10 + k, ox + 100, oy, 4, 3) if is_bld else vehicle(10 + k, ox + 100, oy))
    w = world_from_entities(ents, ego_id=0)
    assert classify_link(w, 0, 1) == classify_link(w, 1, 0)


# --- path loss and large-scale loss -----------------------------------------

def test_pathloss_reference_values():
    # oracle: closed form by hand, 38.77 + 16.7 log10(d) + 18.2 log10(5.9)
    assert pathloss_db(P, LinkClass.LOS, 100.0) == pytest.approx(86.20, abs=0.005)
    assert pathloss_db(P, LinkClass.LOS, 10.0) == pytest.approx(69.50, abs=0.005)
    assert pathloss_db(P, LinkClass.NLOSV, 100.0) == pathloss_db(P, LinkClass.LOS, 100.0)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        pathloss_db(P, LinkClass.LOS, 0.0)
    with pytest.raises(ValueError):
        large_scale_loss(P, LinkClass.NLOS, -1.0)


def test_pathloss_strictly_increasing_random_pairs():
    rng = np.random.default_rng(0)
    d = rng.uniform(0.5, 2000.0, size=(10_000, 2))
    d.sort(axis=1)
    d = d[d[:, 0] < d[:, 1]]
    for cls in LinkClass:
        assert np.all(pathloss_db(P, cls, d[:, 0]) < pathloss_db(P, cls, d[:, 1]))


@given(st.floats(0.1, 5000), st.floats(0.1, 5000))
def test_pathloss_monotone_property(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    for cls in LinkClass:
        assert pathloss_db(P, cls, lo) < pathloss_db(P, cls, hi)


def test_blockage_only_for_nlosv():
    assert large_scale_loss(P, LinkClass.LOS, 50, 1.0, 12.0) == pytest.approx(pathloss_db(P, LinkClass.LOS, 50) + 1.0)
    assert large_scale_loss(P, LinkClass.NLOSV, 50, 1.0, 12.0) == pytest.approx(
        pathloss_db(P, LinkClass.LOS, 50) + 13.0)
    s = link_state(P, LinkClass.NLOS, 100.0, 0.0, 7.0, 1.0, 1e5)
    assert s.blockage_db == 0.0


def test_blockage_draws():
    rng = np.random.default_rng(1)
    assert blockage_loss_db(P, 0, rng) == 0.0
    draws = np.array([blockage_loss_db(P, 1, rng) for _ in range(20_000)])
    assert draws.min() >= 0.0
    # mean of max(0, N(10, 4.5)) from the truncated-normal closed form
    mu, s = P.blockage_loss_mean, P.blockage_loss_sigma
    expect = mu * stats.norm.cdf(mu / s) + s * stats.norm.pdf(mu / s)
    assert draws.mean() == pytest.approx(expect, abs=0.1)


# --- shadowing --------------------------------------------------------------

def test_shadowing_unchanged_when_not_moving():
    sp = ShadowingProcess(P)
    rng = np.random.default_rng(0)
    first = sp.sample("a", (10.0, 0.0), LinkClass.LOS, rng)
    assert sp.sample("a", (10.0, 0.0), LinkClass.LOS, rng) == first


@pytest.mark.parametrize("step", [2.0, 5.0, 10.0])
def test_shadowing_autocorrelation(step):
    sp = ShadowingProcess(P)
    rng = np.random.default_rng(11)
    n = 100_000
    x = np.empty(n)
    for k in range(n):
        x[k] = sp.sample("link", (k * step, 0.0), LinkClass.LOS, rng)
    for lag in (1, 2):
        r = np.corrcoef(x[:-lag], x[lag:])[0, 1]
        assert abs(r - math.exp(-lag * step / P.shadow_corr_dist)) <= 0.05
    assert x.std() == pytest.approx(P.shadow_sigma_los, rel=0.05)
    assert abs(x.mean()) < 0.1


def test_shadowing_retain_restarts_chain():
    sp = ShadowingProcess(P)
    rng = np.random.default_rng(0)
    sp.sample(1, (0, 0), LinkClass.LOS, rng)
    sp.sample(2, (0, 0), LinkClass.LOS, rng)
    sp.retain([2])
    assert set(sp.state) == {2}


# --- fading -----------------------------------------------------------------

@pytest.mark.parametrize("cls", [LinkClass.NLOS, LinkClass.LOS, LinkClass.NLOSV])
def test_fading_unit_mean(cls):
    g = fading_gain(P, cls, np.random.default_rng(5), size=1_000_000)
    assert abs(g.mean() - 1.0) <= 0.01
    assert g.min() >= 0.0


def test_rician_variance_matches_closed_form():
    k = rician_k_linear(P, LinkClass.LOS)
    g = fading_gain(P, LinkClass.LOS, np.random.default_rng(6), size=1_000_000)
    # oracle: 2(K+1)|h|^2 is noncentral chi-square with 2 dof and noncentrality 2K
    scale = 2 * (k + 1)
    oracle = stats.ncx2(df=2, nc=2 * k).var() / scale ** 2
    assert oracle == pytest.approx((1 + 2 * k) / (k + 1) ** 2)
    assert g.var() == pytest.approx(oracle, rel=0.02)


def test_rayleigh_is_exponential():
    g = fading_gain(P, LinkClass.NLOS, np.random.default_rng(8), size=200_000)
    assert stats.kstest(g, "expon").pvalue > 0.001


def test_pure_specular_limit():
    z = np.random.default_rng(0).standard_normal((1000, 2))
    assert np.all(fading_from_normals(math.inf, z) == 1.0)
    assert np.allclose(fading_from_normals(1e12, z), 1.0, atol=1e-5)


# --- rate -------------------------------------------------------------------

def test_rate_at_zero_db_snr():
    b = 0.6e6
    assert achievable_rate(P, b, loss_for_snr(0.0, b), 1.0) == pytest.approx(0.6e6, rel=1e-9)


def test_rate_at_fifteen_db():
    # oracle: 150e3 * log2(1 + 10**1.5) evaluated by hand = 754.18 kbit/s
    b = 150e3
    assert achievable_rate(P, b, loss_for_snr(15.0, b), 1.0) == pytest.approx(754.2e3, abs=50)


def test_rate_deep_fade_and_cap():
    assert achievable_rate(P, 1e5, 80.0, 0.0) == 0.0
    assert achievable_rate(P, 1e5, 0.0, 1.0) == pytest.approx(1e5 * P.spectral_efficiency_cap)
    with pytest.raises(ValueError):
        achievable_rate(P, 0.0, 80.0, 1.0)


def test_snr_accounts_for_fading():
    assert snr_db(P, 1e5, 100.0, 10.0) == pytest.approx(snr_db(P, 1e5, 100.0, 1.0) + 10.0)


@given(st.floats(1e3, 1e7), st.floats(1e3, 1e7), st.floats(40, 160), st.floats(0, 20), st.floats(0, 20))
def test_rate_monotone(b1, b2, loss, f1, f2):
    lo, hi = sorted((b1, b2))
    assert achievable_rate(P, lo, loss, f1) <= achievable_rate(P, hi, loss, f1) + 1e-6
    lo, hi = sorted((f1, f2))
    assert achievable_rate(P, b1, loss, lo) <= achievable_rate(P, b1, loss, hi) + 1e-6
