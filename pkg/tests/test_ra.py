import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbofdm.fec.ra import CodeConfigError, FrameError, ra_decode, ra_encode, ra_permutation


@pytest.mark.parametrize("rate,k", [("1/4", 300), ("1/8", 150), ("1/4", 8)])
def test_noiseless_round_trip(rate, k):
    u = np.random.default_rng(k).integers(0, 2, k)
    res = ra_decode(8.0 * (1 - 2.0 * ra_encode(u, rate)), k, rate)
    np.testing.assert_array_equal(res.bits, u)
    assert 1 <= res.iterations < 60


def test_permutation_is_fixed_and_bijective():
    a = ra_permutation(150, 8)
    np.testing.assert_array_equal(a, ra_permutation(150, 8))
    np.testing.assert_array_equal(np.sort(a), np.arange(1200))


def test_accumulator_structure():
    # weight-one input produces a run of ones from its first repeated position to the end
    c = ra_encode(np.r_[1, np.zeros(9, int)], "1/4")
    first = np.sort(np.flatnonzero(np.isin(ra_permutation(10, 4), np.arange(4))))
    expected = np.zeros(40, int)
    for p in first:
        expected[p:] ^= 1
    np.testing.assert_array_equal(c, expected)


def test_single_flipped_bit_corrected_exhaustively():
    k = 8
    for msg in itertools.product([0, 1], repeat=k):
        u = np.array(msg)
        llr = 10.0 * (1 - 2.0 * ra_encode(u, "1/4"))
        for j in range(llr.size):
            bad = llr.copy()
            bad[j] = -0.3 * bad[j]
            np.testing.assert_array_equal(ra_decode(bad, k, "1/4").bits, u)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 80), st.integers(0, 2**32 - 1), st.sampled_from(["1/4", "1/8"]))
def test_linearity(k, seed, rate):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 2, (2, k))
    np.testing.assert_array_equal(ra_encode(a ^ b, rate), ra_encode(a, rate) ^ ra_encode(b, rate))


def test_rate_and_length_errors():
    with pytest.raises(CodeConfigError):
        ra_encode(np.zeros(4, int), "1/3")
    with pytest.raises(FrameError):
        ra_decode(np.zeros(10), 4, "1/4")


def test_average_iterations_below_ten_at_operating_point():
    # rate 1/4, Eb/N0 = 2 dB: error-free region for K = 300
    k, q = 300, 4
    sigma2 = 1 / (2 * 10 ** 0.2 / q)
    rng = np.random.default_rng(5)
    its, errs = [], 0
    for _ in range(100):
        u = rng.integers(0, 2, k)
        y = 1 - 2.0 * ra_encode(u, "1/4") + rng.normal(0, np.sqrt(sigma2), k * q)
        res = ra_decode(2 * y / sigma2, k, "1/4")
        its.append(res.iterations)
        errs += np.count_nonzero(res.bits != u)
    assert errs / (100 * k) < 1e-3
    assert np.mean(its) < 10
