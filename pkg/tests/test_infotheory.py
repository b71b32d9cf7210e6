import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mbofdm.bitloading import all_qpsk, load_bands
from mbofdm.chanest import CsiModel, equivalent_snr
from mbofdm.infotheory import (
    OutageCurve,
    bicm_capacity,
    bicm_cutoff,
    capacity_and_cutoff,
    compute_tone_tables,
    outage_value,
    tone_bhattacharyya,
    tone_capacity,
)
from mbofdm.modem import constellation, data_tone_bins, soft_demap
from mbofdm.uwb_channel import link_response

LSE = CsiModel("lse")


def _qpsk_capacity_oracle(snr):
    # each quadrature branch is a binary-input AWGN channel whose LLR is N(2s, 4s)
    mu, sd = 2 * snr, 2 * math.sqrt(snr)

    def integrand(llr):
        return stats.norm.pdf(llr, mu, sd) * np.logaddexp(0.0, -llr) / math.log(2)

    loss, _ = integrate.quad(integrand, mu - 12 * sd, mu + 12 * sd, limit=200)
    return 2 * (1 - loss)


@pytest.mark.parametrize("snr_db", [-5.0, 0.0, 5.0, 12.0])
def test_qpsk_capacity_matches_integration_oracle(snr_db):
    s = 10 ** (snr_db / 10)
    assert bicm_capacity(np.ones(100), s, 2) == pytest.approx(_qpsk_capacity_oracle(s), abs=0.01)


@pytest.mark.parametrize("snr_db", [0.0, 5.0, 10.0])
def test_qpsk_bhattacharyya_is_closed_form(snr_db):
    s = 10 ** (snr_db / 10)
    assert tone_bhattacharyya(np.array([s]), 2)[0] == pytest.approx(math.exp(-s / 2), rel=1e-6, abs=1e-9)


def test_awgn_cutoff_below_capacity_at_5db():
    s = 10 ** 0.5
    c, r0 = capacity_and_cutoff(np.ones(100), s, 2)
    assert r0 < c
    assert r0 == pytest.approx(2 * (1 - math.log2(1 + math.exp(-s / 2))), abs=1e-6)


def test_tables_agree_with_fresh_quadrature():
    grid = np.array([-3.0, 4.3, 11.7, 19.9])
    fresh = compute_tone_tables(grid, ms=(1, 4, 6))
    for m in (1, 4, 6):
        s = 10 ** (grid / 10)
        np.testing.assert_allclose(tone_capacity(s, m), fresh[f"c_{m}"], atol=1e-6)
        np.testing.assert_allclose(tone_bhattacharyya(s, m), fresh[f"b_{m}"], atol=1e-6)


@pytest.mark.parametrize("m", range(1, 7))
def test_limits(m):
    assert tone_capacity(np.array([1e6]), m)[0] == pytest.approx(m, abs=1e-6)
    assert tone_bhattacharyya(np.array([1e6]), m)[0] == pytest.approx(0.0, abs=1e-6)
    assert tone_capacity(np.array([0.0]), m)[0] == pytest.approx(0.0, abs=1e-12)
    assert tone_bhattacharyya(np.array([0.0]), m)[0] == pytest.approx(1.0, abs=1e-12)


def test_capacity_vanishes_and_saturates():
    H = np.exp(1j * np.linspace(0, 3, 300))
    c, r0 = capacity_and_cutoff(H, 1e-9, 2)
    assert c < 1e-6 and r0 < 1e-6
    c, r0 = capacity_and_cutoff(H, 1e6, 2)
    assert c == pytest.approx(2.0) and r0 == pytest.approx(2.0)


@pytest.mark.parametrize("m", range(1, 7))
def test_tables_monotone(m):
    s = 10 ** (np.arange(-20, 50, 0.05) / 10)
    c, b = tone_capacity(s, m), tone_bhattacharyya(s, m)
    assert np.all(np.diff(c) >= -1e-12)
    assert np.all(np.diff(b) <= 1e-12)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    snr_db=st.floats(-10, 40),
    step=st.floats(0.01, 10),
    m=st.integers(1, 6),
)
def test_cutoff_below_capacity_and_monotone(seed, snr_db, step, m):
    rng = np.random.default_rng(seed)
    H = (rng.standard_normal(300) + 1j * rng.standard_normal(300)) / math.sqrt(2)
    c1, r1 = capacity_and_cutoff(H, 10 ** (snr_db / 10), m)
    c2, r2 = capacity_and_cutoff(H, 10 ** ((snr_db + step) / 10), m)
    assert 0 <= r1 <= c1 + 1e-12 <= m + 1e-9
    assert c2 >= c1 - 1e-12 and r2 >= r1 - 1e-12


def test_mc_cutoff_below_capacity_on_same_draws():
    rng = np.random.default_rng(3)
    H = (rng.standard_normal(50) + 1j * rng.standard_normal(50)) / math.sqrt(2)
    for snr_db in (0, 8, 16):
        c, r0 = capacity_and_cutoff(H, 10 ** (snr_db / 10), 4, method="mc", rng=1, n_draws=2000)
        assert r0 <= c


def test_mc_agrees_with_quadrature():
    rng = np.random.default_rng(9)
    H = (rng.standard_normal(60) + 1j * rng.standard_normal(60)) / math.sqrt(2)
    bits = rng.choice([1, 2, 4, 6], size=60)
    cq, rq = capacity_and_cutoff(H, 10.0**1.4, bits)
    cm, rm = capacity_and_cutoff(H, 10.0**1.4, bits, method="mc", rng=2, n_draws=10_000)
    assert cm == pytest.approx(cq, abs=0.02)
    assert rm == pytest.approx(rq, abs=0.02)


@pytest.mark.parametrize("method", ["quadrature", "mc"])
def test_all_qpsk_loading_reduces_to_uniform(method):
    resp = link_response("CM1", 5)
    H = resp.H[:, data_tone_bins()]
    plan = np.stack([p.bits for p in (all_qpsk(),) * 3])
    for snr_db in (4.0, 12.0):
        s = 10 ** (snr_db / 10)
        a = capacity_and_cutoff(H, s, 2, method=method, rng=11, n_draws=2000)
        b = capacity_and_cutoff(H, s, plan, method=method, rng=11, n_draws=2000)
        assert a == pytest.approx(b, abs=0.005)


def test_zero_bit_tones_contribute_nothing():
    H = np.ones(4)
    c, r0 = capacity_and_cutoff(H, 1e6, np.array([0, 4, 0, 4]))
    assert c == pytest.approx(2.0)
    assert r0 == pytest.approx(2.0)


@pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
def test_imperfect_csi_equals_perfect_at_equivalent_snr(snr_db):
    gamma = 10 ** (snr_db / 10)
    rng = np.random.default_rng(int(snr_db) + 100)
    n = 40_000
    H = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    H2 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    c_lse = bicm_capacity(H, gamma, 2, LSE, rng=rng)
    c_eq = bicm_capacity(H2, float(equivalent_snr(gamma, LSE.eta)), 2)
    assert c_lse == pytest.approx(c_eq, abs=0.02)
    r_lse = bicm_cutoff(H, gamma, 2, LSE, rng=rng)
    assert r_lse < bicm_cutoff(H, gamma, 2)


@pytest.mark.parametrize("m", [2, 4, 6])
def test_demapper_mutual_information_matches_capacity(m):
    rng = np.random.default_rng(m)
    const = constellation(m)
    snr = 10.0
    n = 40_000
    idx = rng.integers(0, const.size, n)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(0.5 / snr)
    y = const.points[idx] + noise
    llr = soft_demap(y, np.ones(n), m, 1 / snr)
    sign = 1 - 2 * const.bits[idx].astype(float)
    mi = m - np.mean(np.logaddexp(0.0, -sign * llr).sum(axis=-1)) / math.log(2)
    assert mi == pytest.approx(tone_capacity(np.array([snr]), m)[0], abs=0.02)


def test_outage_value_matches_sorting_oracle():
    rng = np.random.default_rng(0)
    for n in (100, 37, 1000):
        x = rng.normal(size=n)
        k = math.ceil(0.9 * n)
        assert outage_value(x, 0.1) == sorted(x, reverse=True)[k - 1]
        assert outage_value(x, 0.1, higher_is_better=False) == sorted(x)[k - 1]
    x = rng.permutation(100).astype(float)
    assert outage_value(x, 0.1) == 10.0


def test_outage_curve_for_constant_channel():
    snr_db = np.arange(0, 20, 2.0)
    per_real = np.array([bicm_capacity(np.ones(10), 10 ** (s / 10), 2) for s in snr_db])
    curve = OutageCurve(snr_db, np.tile(per_real, (100, 1)))
    np.testing.assert_allclose(curve.values, per_real)
    p = curve.outage_probability(1.0)
    assert np.all(np.diff(p) <= 0)
    assert curve.snr_for_rate(1.0) == pytest.approx(np.interp(1.0, per_real, snr_db), abs=1e-9)
    assert math.isnan(curve.snr_for_rate(2.5))


def test_loading_ordering_on_cm1():
    # mean loaded capacity at 14 dB over 100 CM1 realizations
    snr = 10 ** 1.4
    bins = data_tone_bins()
    means = {"ccb": [], "piazzo": [], "none": []}
    for seed in range(100):
        resp = link_response("CM1", seed)
        H = resp.H[:, bins]
        s = np.abs(H) ** 2 * snr
        for alg in means:
            plan = np.stack([p.bits for p in load_bands(s, alg, gap_db=6.0)])
            means[alg].append(capacity_and_cutoff(H, snr, plan)[0])
    ccb, pz, none = (np.mean(means[k]) for k in ("ccb", "piazzo", "none"))
    assert ccb >= pz >= none
