import itertools

import numpy as np
import pytest

from mbofdm.fec import convolutional as cc
from mbofdm.fec.turbo import (
    CodeConfigError,
    bcjr_posteriors,
    internal_interleaver,
    interleaver_dimensions,
    rate_match_mask,
    rsc_encode,
    turbo_decode,
    turbo_encode,
)


@pytest.mark.parametrize("k", [40, 150, 159, 160, 300, 481, 530, 600, 2281, 5114])
def test_internal_interleaver_is_permutation(k):
    pi = internal_interleaver(k)
    np.testing.assert_array_equal(np.sort(pi), np.arange(k))


@pytest.mark.parametrize("k,dims", [(40, (5, 7, 8)), (150, (5, 29, 30)), (300, (20, 17, 16)), (600, (20, 29, 30)), (500, (10, 53, 53))])
def test_interleaver_dimensions(k, dims):
    assert interleaver_dimensions(k) == dims


def test_full_matrix_exchange_rule():
    # K = R*C with C = p + 1: first output comes from the swapped last-row entry
    assert internal_interleaver(40)[0] == 39
    assert internal_interleaver(600)[0] == 599


def test_rsc_is_terminated():
    from mbofdm.fec.turbo import NEXT_STATE

    rng = np.random.default_rng(3)
    for _ in range(20):
        u = rng.integers(0, 2, 30)
        sys, _ = rsc_encode(u)
        state = 0
        for b in sys:
            state = NEXT_STATE[state, b]
        assert sys.size == 33 and state == 0


def _exhaustive_app(sys_llr, par_llr, apr):
    n = apr.size
    words = np.array(list(itertools.product([0, 1], repeat=n)))
    metric = np.empty(len(words))
    for w_i, w in enumerate(words):
        s, p = rsc_encode(w)
        metric[w_i] = 0.5 * (
            (sys_llr * (1 - 2.0 * s)).sum() + (par_llr * (1 - 2.0 * p)).sum() + (apr * (1 - 2.0 * w)).sum()
        )
    out = np.empty(n)
    for t in range(n):
        out[t] = np.logaddexp.reduce(metric[words[:, t] == 0]) - np.logaddexp.reduce(metric[words[:, t] == 1])
    return out


@pytest.mark.parametrize("seed", range(5))
def test_bcjr_equals_exhaustive_app(seed):
    rng = np.random.default_rng(seed)
    n = 12
    sys_llr = rng.normal(0, 3, n + 3)
    par_llr = rng.normal(0, 3, n + 3)
    apr = rng.normal(0, 2, n)
    np.testing.assert_allclose(bcjr_posteriors(sys_llr, par_llr, apr), _exhaustive_app(sys_llr, par_llr, apr), atol=1e-6, rtol=0)


@pytest.mark.parametrize("k", [150, 300, 600])
@pytest.mark.parametrize("rate", ["1/2", "3/4"])
def test_noiseless_round_trip(k, rate):
    u = np.random.default_rng(k).integers(0, 2, k)
    c = turbo_encode(u, rate)
    assert c.size == int(k / eval(rate))
    np.testing.assert_array_equal(turbo_decode(1.0 - 2.0 * c, k, rate), u)


def test_rate_matching_keeps_systematic_and_tail_and_alternates():
    mask = rate_match_mask(600, 800)
    body = mask[:1800].reshape(600, 3)
    assert body[:, 0].all() and mask[1800:].all()
    assert abs(int(body[:, 1].sum()) - int(body[:, 2].sum())) <= 1
    gaps = np.diff(np.flatnonzero(body[:, 1:].any(axis=1)))
    assert gaps.max() - gaps.min() <= 1


def test_unsupported_block_length():
    with pytest.raises(CodeConfigError):
        turbo_encode(np.zeros(100, int))


def test_turbo_beats_convolutional_at_2db():
    k, rate = 600, "1/2"
    ebn0 = 10 ** (2.0 / 10)
    sigma2 = 1 / (2 * 0.5 * ebn0)  # BPSK, code rate 1/2
    rng = np.random.default_rng(11)
    n_blocks = 30
    err_tc = err_cc = 0
    k_cc = cc.info_length_for(1200, rate)
    for _ in range(n_blocks):
        noise = rng.normal(0, np.sqrt(sigma2), 1200)
        u = rng.integers(0, 2, k)
        y = 1.0 - 2.0 * turbo_encode(u, rate) + noise
        err_tc += np.count_nonzero(turbo_decode(2 * y / sigma2, k, rate) != u)
        v = rng.integers(0, 2, k_cc)
        y = 1.0 - 2.0 * cc.conv_encode(v, rate) + noise
        err_cc += np.count_nonzero(cc.viterbi_decode(2 * y / sigma2, rate, k_cc) != v)
    assert err_tc / (n_blocks * k) < err_cc / (n_blocks * k_cc)
