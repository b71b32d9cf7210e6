"""Two-stage block channel interleaver (format version 1).

Stage 1 deals coded bits round-robin over the OFDM symbol slots of a frame
(6 slots for 1200 bits, 3 for 600 and 300). Stage 2 permutes the bits of each
slot with a row/column block interleaver of 20 columns: bits are written
column by column and read row by row, so bits adjacent after stage 1 land 10
tones apart on QPSK.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .convolutional import FrameError
from .modes import interleaver_geometry

INTERLEAVER_VERSION = 1


@lru_cache(maxsize=None)
def interleaver_permutation(length: int) -> np.ndarray:
    """Index map: output position of input bit ``b`` is ``perm[b]``."""
    groups, cols = interleaver_geometry(length)
    slot_len = length // groups
    rows = slot_len // cols
    b = np.arange(length)
    slot, within = b % groups, b // groups
    perm = slot * slot_len + (within % rows) * cols + within // rows
    perm.flags.writeable = False
    return perm


def _check(bits, length):
    if np.shape(bits)[-1] != length:
        raise FrameError(f"interleaver expects {length} values, got {np.shape(bits)[-1]}")


def channel_interleave(bits, length: int | None = None) -> np.ndarray:
    bits = np.asarray(bits)
    length = bits.shape[-1] if length is None else length
    _check(bits, length)
    out = np.empty_like(bits)
    out[..., interleaver_permutation(length)] = bits
    return out


def channel_deinterleave(values, length: int | None = None) -> np.ndarray:
    """Inverse of :func:`channel_interleave`; works on bits or LLRs."""
    values = np.asarray(values)
    length = values.shape[-1] if length is None else length
    _check(values, length)
    return values[..., interleaver_permutation(length)]


def export_permutation(length: int) -> str:
    """Whitespace-separated index list with a version header, for cross-checks."""
    perm = interleaver_permutation(length)
    return f"# channel interleaver v{INTERLEAVER_VERSION} length {length}\n" + " ".join(map(str, perm)) + "\n"
