"""Time/frequency repetition of QPSK symbols and maximum-ratio combining.

A frame always fills 6 OFDM symbols of 100 data tones. Distinct symbols are
arranged in slots; with time spreading slot ``g`` is sent in OFDM symbols
``2g`` and ``2g + 1``, and with frequency spreading tone ``j`` is repeated on
tone ``j + 50``.
"""

from __future__ import annotations

import numpy as np

from .convolutional import FrameError
from .modes import spreading_layout

SYMBOLS_PER_FRAME = 6
DATA_TONES = 100


def _layout(factor):
    t, f = spreading_layout(factor)
    slots = SYMBOLS_PER_FRAME // t
    return t, f, slots, DATA_TONES // f


def distinct_symbols(factor: int) -> int:
    _, _, slots, width = _layout(factor)
    return slots * width


def spread(symbols, factor: int) -> np.ndarray:
    """Map one frame of distinct symbols onto a (6, 100) OFDM grid."""
    t, f, slots, width = _layout(factor)
    symbols = np.asarray(symbols)
    if symbols.size != slots * width:
        raise FrameError(f"spreading x{factor} expects {slots * width} symbols, got {symbols.size}")
    grid = symbols.reshape(slots, 1, width)
    grid = np.tile(grid, (1, 1, f))  # tone j and j + width
    return np.repeat(grid, t, axis=1).reshape(SYMBOLS_PER_FRAME, DATA_TONES)


def _replicas(grid, factor):
    t, f, slots, width = _layout(factor)
    # (slots, t, f, width) -> (slots*width, t*f)
    g = np.asarray(grid).reshape(slots, t, f, width)
    return g.transpose(0, 3, 1, 2).reshape(slots * width, t * f)


def replicas(grid, factor: int) -> np.ndarray:
    """Regroup a (6, 100) grid into (distinct symbols, replicas)."""
    if np.shape(grid) != (SYMBOLS_PER_FRAME, DATA_TONES):
        raise FrameError(f"expected a (6, 100) grid, got {np.shape(grid)}")
    return _replicas(grid, factor)


def mrc_despread(received, h_est, factor: int):
    """Maximum-ratio combining of all replicas.

    Returns
    -------
    z : ndarray
        Combined statistic ``sum(conj(H) * Y)`` per distinct symbol.
    gain : ndarray
        Effective gain ``sum(|H|^2)``; ``z = gain * X + noise`` with noise
        variance ``gain * noise_var``.
    """
    y = replicas(received, factor)
    h = replicas(h_est, factor)
    return (np.conj(h) * y).sum(axis=1), (np.abs(h) ** 2).sum(axis=1)


def equivalent_channel(z, gain):
    """Rewrite combined outputs as ``Y' = H' X + N`` with real ``H' = sqrt(gain)``
    and unchanged per-replica noise variance."""
    root = np.sqrt(gain)
    safe = np.where(root > 0, root, 1.0)
    return np.where(root > 0, z / safe, 0.0), root
