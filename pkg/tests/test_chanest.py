import numpy as np
import pytest

from mbofdm.chanest import (
    CsiModel,
    PilotError,
    equivalent_snr,
    estimation_error,
    estimation_loss_db,
    lse_estimate,
)
from mbofdm.modem import pilot_symbols


def test_eta():
    assert CsiModel("lse", P=2, L=32, N=128).eta == 0.125
    assert CsiModel("perfect").eta == 0.0


def test_noiseless_estimate_is_exact_for_short_channels():
    rng = np.random.default_rng(0)
    taps = rng.normal(size=20) + 1j * rng.normal(size=20)
    H = np.fft.fft(taps, 128)
    X = np.stack([pilot_symbols(128), pilot_symbols(128, seed=5)])
    np.testing.assert_allclose(lse_estimate(H * X, X, 32), H, atol=1e-12)


def test_non_unit_pilots_rejected():
    with pytest.raises(PilotError):
        lse_estimate(np.ones((2, 128)), 2 * np.ones(128), 32)


def _mc_error(noise_var, trials=10000, seed=1):
    rng = np.random.default_rng(seed)
    X = pilot_symbols(128)
    taps = (rng.normal(size=(trials, 16)) + 1j * rng.normal(size=(trials, 16))) / np.sqrt(32)
    H = np.fft.fft(taps, 128, axis=1)
    noise = np.sqrt(noise_var / 2) * (rng.normal(size=(trials, 2, 128)) + 1j * rng.normal(size=(trials, 2, 128)))
    Y = H[:, None] * X + noise
    raw = np.mean(np.conj(X) * Y, axis=1)
    est = np.fft.fft(np.fft.ifft(raw, axis=1)[:, :32], 128, axis=1)
    # spot-check the vectorized path against the public estimator
    np.testing.assert_allclose(est[0], lse_estimate(Y[0], X, 32), atol=1e-12)
    return est - H, H


@pytest.mark.parametrize("noise_var", [0.01, 0.1])
def test_error_variance(noise_var):
    E, _ = _mc_error(noise_var)
    assert np.mean(np.abs(E) ** 2) == pytest.approx(0.125 * noise_var, rel=0.05)


def test_unbiased_and_independent_of_channel():
    E, H = _mc_error(0.1, seed=2)
    assert np.abs(E.mean(axis=0)).max() < 0.01
    c = np.abs(np.mean(E * np.conj(H))) / np.sqrt(np.mean(np.abs(E) ** 2) * np.mean(np.abs(H) ** 2))
    assert c < 0.02


@pytest.mark.parametrize("correlated", [False, True])
def test_fast_error_models(correlated):
    rng = np.random.default_rng(3)
    csi = CsiModel("lse")
    e = np.array([estimation_error(0.1, csi, 128, rng, correlated) for _ in range(5000)])
    assert np.mean(np.abs(e) ** 2) == pytest.approx(0.0125, rel=0.05)
    adjacent = np.abs(np.mean(e[:, 1:] * np.conj(e[:, :-1]))) / 0.0125
    assert (adjacent > 0.5) if correlated else (adjacent < 0.05)


def test_equivalent_snr_values():
    assert equivalent_snr(10.0, 0.0) == 10.0
    assert equivalent_snr(10.0, 0.125) == pytest.approx(10 / 1.1375, abs=1e-3)
    assert 10 * np.log10(equivalent_snr(10.0, 0.125)) == pytest.approx(9.44, abs=0.01)
    assert estimation_loss_db(1e4, 0.125) == pytest.approx(10 * np.log10(1.125), abs=1e-3)


def test_loss_monotone_in_snr_and_eta():
    # loss = 10 log10(1 + eta (1 + 1/gamma)): falls with gamma towards 10 log10(1 + eta)
    g = np.logspace(-1, 4, 50)
    for eta in (0.0625, 0.125, 0.25):
        loss = estimation_loss_db(g, eta)
        assert (np.diff(loss) < 0).all()
        assert loss[-1] == pytest.approx(10 * np.log10(1 + eta), abs=1e-3)
    assert (estimation_loss_db(g, 0.25) > estimation_loss_db(g, 0.125)).all()
    gap = estimation_loss_db(1e4, 0.25) - estimation_loss_db(1e4, 0.125)
    assert 0.45 <= gap <= 0.55


def test_invalid_inputs():
    with pytest.raises(ValueError):
        equivalent_snr(0.0, 0.1)
    with pytest.raises(ValueError):
        CsiModel("lse", L=200)
