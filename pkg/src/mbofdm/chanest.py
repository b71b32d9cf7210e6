"""Pilot-based least-squares channel estimation and its error model.

With ``P`` all-tone constant-modulus pilot symbols per band and an assumed
impulse-response length ``L`` out of ``N`` tones, the estimate is the raw
per-tone estimate projected onto the first ``L`` time-domain taps. Its error
is zero-mean Gaussian with per-tone variance ``eta * noise_var`` where
``eta = L / (N * P)``; errors are correlated across tones, which the receiver
does not exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PilotError(ValueError):
    """Pilots violate the constant-modulus precondition."""


@dataclass(frozen=True)
class CsiModel:
    """Receiver channel-state knowledge.

    Parameters
    ----------
    kind : {"perfect", "lse"}
    P : int
        Pilot OFDM symbols per band.
    L : int
        Assumed impulse-response length in samples.
    N : int
        Tones per OFDM symbol.
    """

    kind: str = "perfect"
    P: int = 2
    L: int = 32
    N: int = 128

    def __post_init__(self):
        if self.kind not in ("perfect", "lse"):
            raise ValueError(f"unknown CSI kind {self.kind!r}")
        if self.P < 1 or not 1 <= self.L <= self.N:
            raise ValueError("need P >= 1 and 1 <= L <= N")

    @property
    def eta(self) -> float:
        return self.L / (self.N * self.P) if self.kind == "lse" else 0.0

    def mu2(self, shadowing_G, noise_var):
        """Shrinkage ``G^2 / (G^2 + eta * noise_var)`` of the LMMSE-conditioned estimate."""
        g2 = np.asarray(shadowing_G, dtype=float) ** 2
        return g2 / (g2 + self.eta * noise_var)

    def likelihood_params(self, h_est, noise_var, shadowing_G=1.0):
        """Mean scale and noise variance of ``p(Y | H_est, X)``.

        Returns ``(a, v)`` so that ``Y ~ CN(a X, v)``. Perfect CSI gives
        ``(H, noise_var)``; the LSE model gives ``(H_est mu^2,
        noise_var (eta mu^2 + 1))``.
        """
        h_est = np.asarray(h_est)
        if self.kind == "perfect":
            return h_est, np.broadcast_to(np.asarray(noise_var, dtype=float), h_est.shape)
        mu2 = self.mu2(shadowing_G, noise_var)
        return h_est * mu2, np.broadcast_to(noise_var * (self.eta * mu2 + 1.0), h_est.shape)


PERFECT = CsiModel("perfect")


def lse_estimate(pilot_rx, pilot_tx, L: int) -> np.ndarray:
    """Least-squares estimate of the ``N`` tone gains of one band.

    Parameters
    ----------
    pilot_rx : array, shape (P, N)
        Received pilot tones.
    pilot_tx : array, shape (P, N) or (N,)
        Transmitted pilots, each of unit modulus.
    L : int
        Assumed channel length; the raw estimate is projected onto ``L`` taps.
    """
    pilot_rx = np.atleast_2d(pilot_rx)
    pilot_tx = np.broadcast_to(pilot_tx, pilot_rx.shape)
    n = pilot_rx.shape[-1]
    if not 1 <= L <= n:
        raise ValueError(f"L={L} must lie in 1..{n}")
    if np.max(np.abs(np.abs(pilot_tx) - 1.0)) > 1e-9:
        raise PilotError("pilot symbols must have unit modulus")
    raw = np.mean(np.conj(pilot_tx) * pilot_rx, axis=0)
    taps = np.fft.ifft(raw)[:L]
    return np.fft.fft(taps, n)


def estimation_error(noise_var: float, csi: CsiModel, n_tones: int, rng: np.random.Generator, correlated: bool = False):
    """Draw an estimation error vector without simulating pilots.

    ``correlated=True`` reproduces the projected (tone-correlated) error of
    :func:`lse_estimate`; otherwise tones get i.i.d. ``CN(0, eta * noise_var)``.
    """
    if csi.kind == "perfect":
        return np.zeros(n_tones, complex)
    if correlated:
        w = np.sqrt(noise_var / (2 * csi.P)) * (rng.standard_normal(csi.N) + 1j * rng.standard_normal(csi.N))
        e = np.fft.fft(np.fft.ifft(w)[: csi.L], csi.N)
        return e[:n_tones]
    s = np.sqrt(csi.eta * noise_var / 2)
    return s * (rng.standard_normal(n_tones) + 1j * rng.standard_normal(n_tones))


def equivalent_snr(gamma, eta):
    """SNR of a perfect-CSI receiver matching LSE estimation at ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0) or np.any(np.asarray(eta) < 0):
        raise ValueError("need gamma > 0 and eta >= 0")
    return gamma / (eta * (1.0 + 1.0 / gamma) + 1.0)


def estimation_loss_db(gamma, eta):
    """``10 log10(gamma / gamma_e)``."""
    return 10 * np.log10(np.asarray(gamma, dtype=float) / equivalent_snr(gamma, eta))
