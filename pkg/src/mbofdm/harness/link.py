"""One decode unit through the coded Multiband OFDM link.

The channel is static for a realization. Every decode unit is sent as its
own packet with a pilot header, so under LSE estimation each unit gets a
fresh estimate. OFDM symbol ``k`` of a packet's data part uses band
``k % 3``; a frame always starts in band 0 because it spans 6 symbols.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chanest import PERFECT, CsiModel, lse_estimate
from ..fec.codec import decode_unit, encode_unit, info_bits_per_unit
from ..fec.modes import TransmissionMode
from ..fec.spreading import SYMBOLS_PER_FRAME, equivalent_channel, mrc_despread, spread
from ..modem import awgn, constellation, data_tone_bins, demap_symbols, map_bits, pilot_symbols, soft_demap

N_BANDS = 3


@dataclass(frozen=True)
class UnitOutcome:
    n_bits: int
    n_errors: int
    iterations: float


def _estimate_bands(H_full, noise_var, csi: CsiModel, rng, noiseless: bool):
    """LSE estimate of each band's 128 tone gains from its pilot symbols."""
    pilots = pilot_symbols(H_full.shape[1])
    est = np.empty_like(H_full)
    for b in range(H_full.shape[0]):
        rx = np.broadcast_to(H_full[b] * pilots, (csi.P, pilots.size))
        if not noiseless:
            rx = rx + awgn(rx.shape, noise_var, rng)
        est[b] = lse_estimate(rx, pilots, csi.L)
    return est


def _band_rows(H_bands):
    """(6, 100) per-symbol tone gains for one frame."""
    return H_bands[np.arange(SYMBOLS_PER_FRAME) % N_BANDS]


def simulate_unit(mode: TransmissionMode, H_full: np.ndarray, snr: float, rng: np.random.Generator,
                  plans: np.ndarray | None = None, csi: CsiModel = PERFECT, shadowing_G: float = 1.0,
                  noiseless: bool = False, n_iter: int | None = None) -> UnitOutcome:
    """Encode, transmit and decode one unit of random info bits.

    Parameters
    ----------
    H_full : (3, 128) complex
        Per-band tone gains including shadowing.
    snr : float
        Linear Es/N0; the noise variance per tone is ``1 / snr``.
    plans : (3, 100) int, optional
        Per-band bit loading; only valid without spreading.
    """
    noise_var = 1.0 / snr
    bins = data_tone_bins()
    info = rng.integers(0, 2, info_bits_per_unit(mode), dtype=np.int8)
    frames = encode_unit(info, mode).interleaved_bits
    if csi.kind == "perfect":
        H_est = H_full
    else:
        H_est = _estimate_bands(H_full, noise_var, csi, rng, noiseless)
    h_true = _band_rows(H_full[:, bins])
    h_est = _band_rows(H_est[:, bins])
    if plans is not None and mode.spreading != 1:
        raise ValueError("bit loading is only defined without spreading")

    llr = np.empty(frames.shape)
    qpsk = constellation(2)
    for f, bits in enumerate(frames):
        if mode.spreading == 1:
            x = map_bits(bits, plans)
        else:
            x = spread(qpsk.map(bits), mode.spreading)
        y = h_true * x
        if not noiseless:
            y = y + awgn(y.shape, noise_var, rng)
        if mode.spreading == 1:
            llr[f] = demap_symbols(y, h_est, noise_var, plans, csi=csi, shadowing_G=shadowing_G)
        else:
            z, gain = mrc_despread(y, h_est, mode.spreading)
            y_eq, h_eq = equivalent_channel(z, gain)
            llr[f] = soft_demap(y_eq, h_eq, 2, noise_var, csi, shadowing_G).ravel()

    decoded, its = decode_unit(llr, mode, n_iter)
    return UnitOutcome(info.size, int(np.count_nonzero(decoded != info)), float(np.mean(its)))
