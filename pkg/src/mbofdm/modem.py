"""Constellations, soft demapping, OFDM framing with band hopping, and the
frequency-domain channel.

Labelings
---------
``m`` bits are split into ``ceil(m/2)`` in-phase and ``floor(m/2)``
quadrature bits (first bits go to I). Each axis uses a Gray-coded PAM whose
all-zero label is the most positive level, so QPSK maps ``00`` to
``(1 + 1j)/sqrt(2)``. ``m = 3`` is the rectangular 4x2 grid. ``m = 5`` is the
32-point cross: the first two bits are the signs of I and Q, the last three
label the point within a quadrant, mirrored across both axes, using the
quadrant labeling with the fewest label-bit changes between grid neighbours.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml
from scipy.special import logsumexp

from .chanest import PERFECT, CsiModel

BITS_PER_OFDM_SYMBOL = 200
MAX_BITS_PER_TONE = 6
DUMMY_SYMBOL = 1.0 + 0.0j  # sent on tones loaded with zero bits


class PlanError(ValueError):
    """Loading plan does not carry the required bits per OFDM symbol."""


@lru_cache(maxsize=None)
def ofdm_config() -> dict:
    return yaml.safe_load(resources.files("mbofdm").joinpath("data/ofdm.yaml").read_text())


def data_tone_bins() -> np.ndarray:
    """FFT bin of each data tone, in transmission order."""
    cfg = ofdm_config()
    return np.asarray(cfg["data_tone_offsets"]) % cfg["n_fft"]


def _gray_pam(k: int) -> np.ndarray:
    """Amplitudes indexed by label integer (MSB first)."""
    labels = np.arange(1 << k)
    binary = labels.copy()
    shift = labels >> 1
    while shift.any():
        binary ^= shift
        shift >>= 1
    return ((1 << k) - 1) - 2.0 * binary


def _bits_of(labels: np.ndarray, m: int) -> np.ndarray:
    return ((labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)


@lru_cache(maxsize=None)
def _cross32_quadrant_labels() -> tuple[int, ...]:
    pos = [(1, 1), (1, 3), (1, 5), (3, 1), (3, 3), (3, 5), (5, 1), (5, 3)]
    edges = [(i, j) for i, j in itertools.combinations(range(8), 2) if abs(pos[i][0] - pos[j][0]) + abs(pos[i][1] - pos[j][1]) == 2]
    perms = np.array(list(itertools.permutations(range(8))))
    cost = np.zeros(len(perms), dtype=int)
    for i, j in edges:
        x = perms[:, i] ^ perms[:, j]
        cost += (x & 1) + ((x >> 1) & 1) + ((x >> 2) & 1)
    return tuple(int(v) for v in perms[np.argmin(cost)])


def _cross32():
    pos = [(1, 1), (1, 3), (1, 5), (3, 1), (3, 3), (3, 5), (5, 1), (5, 3)]
    quad = _cross32_quadrant_labels()
    points = np.empty(32, complex)
    for (ai, aq), q in zip(pos, quad):
        for si in (0, 1):
            for sq in (0, 1):
                label = (si << 4) | (sq << 3) | q
                points[label] = complex(ai * (1 - 2 * si), aq * (1 - 2 * sq))
    return points


@dataclass(frozen=True)
class Constellation:
    """Unit-energy constellation; ``points[label]`` with label bits MSB first."""

    m: int
    points: np.ndarray = field(repr=False)
    bits: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.points.size

    def map(self, bits) -> np.ndarray:
        b = np.asarray(bits, dtype=np.int64).reshape(-1, self.m)
        return self.points[b @ (1 << np.arange(self.m - 1, -1, -1))]

    def export(self) -> str:
        rows = [f"# m={self.m} label re im"]
        rows += [f"{''.join(map(str, b))} {p.real:.12f} {p.imag:.12f}" for b, p in zip(self.bits, self.points)]
        return "\n".join(rows) + "\n"


@lru_cache(maxsize=None)
def constellation(m: int) -> Constellation:
    if not 1 <= m <= MAX_BITS_PER_TONE:
        raise ValueError(f"constellation size m={m} not in 1..6")
    if m == 5:
        pts = _cross32()
    else:
        ki, kq = (m + 1) // 2, m // 2
        labels = np.arange(1 << m)
        i_amp = _gray_pam(ki)[labels >> kq]
        q_amp = _gray_pam(kq)[labels & ((1 << kq) - 1)] if kq else np.zeros(labels.size)
        pts = i_amp + 1j * q_amp
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.flags.writeable = False
    bits = _bits_of(np.arange(1 << m), m)
    bits.flags.writeable = False
    return Constellation(m, pts, bits)


def soft_demap(y, h_est, m: int, noise_var, csi: CsiModel = PERFECT, shadowing_G=1.0) -> np.ndarray:
    """Exact per-bit LLRs (positive means bit 0).

    ``LLR_l = log sum_{X: b_l=0} p(Y|H,X) - log sum_{X: b_l=1} p(Y|H,X)`` with
    ``p`` Gaussian of mean ``a X`` and variance ``v`` as given by
    :meth:`CsiModel.likelihood_params`. Output shape ``y.shape + (m,)``.
    """
    const = constellation(m)
    a, v = csi.likelihood_params(np.asarray(h_est), noise_var, shadowing_G)
    y = np.asarray(y)
    a = np.broadcast_to(a, y.shape)
    v = np.broadcast_to(v, y.shape)
    metric = -np.abs(y[..., None] - a[..., None] * const.points) ** 2 / v[..., None]
    out = np.empty(y.shape + (m,))
    for ell in range(m):
        zero = const.bits[:, ell] == 0
        out[..., ell] = logsumexp(metric[..., zero], axis=-1) - logsumexp(metric[..., ~zero], axis=-1)
    return out


def _check_plan(plan):
    plan = np.atleast_2d(np.asarray(plan, dtype=np.int64))
    if plan.shape[-1] != 100 or plan.shape[0] not in (1, 3):
        raise PlanError(f"plan must have shape (100,) or (3, 100), got {plan.shape}")
    if plan.min() < 0 or plan.max() > MAX_BITS_PER_TONE:
        raise PlanError("bits per tone must lie in 0..6")
    if (plan.sum(axis=1) != BITS_PER_OFDM_SYMBOL).any():
        raise PlanError(f"plan carries {plan.sum(axis=1)} bits, expected {BITS_PER_OFDM_SYMBOL}")
    return np.broadcast_to(plan, (3, 100))


QPSK_PLAN = np.full(100, 2, dtype=np.int64)


def map_bits(bits, plan=None, first_symbol: int = 0) -> np.ndarray:
    """Map a bit stream to (n_symbols, 100) data-tone symbols.

    ``plan`` gives bits per tone, either one plan for all bands or one per
    band (shape (3, 100)); OFDM symbol ``k`` uses the plan of band
    ``(first_symbol + k) % 3``. ``None`` means uniform QPSK.
    """
    plans = _check_plan(QPSK_PLAN if plan is None else plan)
    bits = np.asarray(bits, dtype=np.int8)
    if bits.size % BITS_PER_OFDM_SYMBOL:
        raise PlanError(f"{bits.size} bits is not a whole number of OFDM symbols")
    n_sym = bits.size // BITS_PER_OFDM_SYMBOL
    out = np.full((n_sym, 100), DUMMY_SYMBOL, dtype=complex)
    for k, chunk in enumerate(bits.reshape(n_sym, BITS_PER_OFDM_SYMBOL)):
        p = plans[(first_symbol + k) % 3]
        start = np.concatenate([[0], np.cumsum(p)[:-1]])
        for m in range(1, MAX_BITS_PER_TONE + 1):
            tones = np.flatnonzero(p == m)
            if tones.size:
                idx = start[tones, None] + np.arange(m)
                out[k, tones] = constellation(m).map(chunk[idx])
    return out


def demap_symbols(y, h_est, noise_var, plan=None, first_symbol: int = 0, csi: CsiModel = PERFECT, shadowing_G=1.0) -> np.ndarray:
    """Inverse of :func:`map_bits`: LLR stream for (n_symbols, 100) observations."""
    plans = _check_plan(QPSK_PLAN if plan is None else plan)
    y = np.asarray(y)
    h_est = np.broadcast_to(h_est, y.shape)
    out = np.empty((y.shape[0], BITS_PER_OFDM_SYMBOL))
    for k in range(y.shape[0]):
        p = plans[(first_symbol + k) % 3]
        start = np.concatenate([[0], np.cumsum(p)[:-1]])
        for m in range(1, MAX_BITS_PER_TONE + 1):
            tones = np.flatnonzero(p == m)
            if tones.size:
                llr = soft_demap(y[k, tones], h_est[k, tones], m, noise_var, csi, shadowing_G)
                out[k, (start[tones, None] + np.arange(m)).ravel()] = llr.ravel()
    return out.ravel()


def hop_band(symbol_index) -> np.ndarray:
    return np.asarray(symbol_index) % ofdm_config()["n_bands"]


@lru_cache(maxsize=None)
def pilot_symbols(n_tones: int = 128, seed: int | None = None) -> np.ndarray:
    """Fixed all-tone unit-modulus QPSK pilot symbol."""
    seed = ofdm_config()["pilot_seed"] if seed is None else seed
    phase = np.random.default_rng(seed).integers(0, 4, n_tones)
    p = np.exp(1j * (np.pi / 4 + np.pi / 2 * phase))
    p.flags.writeable = False
    return p


@dataclass(frozen=True)
class LinkSignal:
    """Full-band tone grid: pilot header followed by data symbols.

    ``tones`` has shape (n_symbols, 128); symbol ``k`` is sent in band
    ``k % 3``. The header holds ``n_pilot_per_band`` all-pilot symbols per band.
    """

    tones: np.ndarray
    n_pilot_per_band: int

    @property
    def bands(self) -> np.ndarray:
        return hop_band(np.arange(self.tones.shape[0]))

    @property
    def n_header(self) -> int:
        return 3 * self.n_pilot_per_band

    def data(self) -> np.ndarray:
        return self.tones[self.n_header :, data_tone_bins()]


def build_link_signal(data_symbols, n_pilot_per_band: int | None = None) -> LinkSignal:
    """Prepend the pilot header and place data on the data tones (nulls elsewhere)."""
    cfg = ofdm_config()
    p = cfg["pilot_symbols_per_band"] if n_pilot_per_band is None else n_pilot_per_band
    n = cfg["n_fft"]
    data_symbols = np.atleast_2d(data_symbols)
    grid = np.zeros((3 * p + data_symbols.shape[0], n), complex)
    grid[: 3 * p] = pilot_symbols(n)
    grid[3 * p :, data_tone_bins()] = data_symbols
    return LinkSignal(grid, p)


def awgn(shape, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    s = np.sqrt(noise_var / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_channel(tones, H_bands, noise_var: float, rng: np.random.Generator | int | None = None, first_symbol: int = 0):
    """``Y = H X + N`` per tone; symbol ``k`` sees ``H_bands[(first_symbol + k) % 3]``.

    ``tones`` may be a :class:`LinkSignal` (full 128-tone grid, hopping starts
    at band 0) or an (n_symbols, n_tones) array matching ``H_bands``'s last axis.
    """
    if isinstance(tones, LinkSignal):
        tones = tones.tones
        first_symbol = 0
    tones = np.atleast_2d(tones)
    H_bands = np.asarray(H_bands)
    y = H_bands[hop_band(first_symbol + np.arange(tones.shape[0]))] * tones
    if noise_var > 0:
        rng = np.random.default_rng(rng)
        y = y + awgn(y.shape, noise_var, rng)
    return y


def ofdm_modulate(tones) -> np.ndarray:
    """Unitary IFFT plus cyclic prefix; shape (n_symbols, n_fft + cp)."""
    cp = ofdm_config()["cyclic_prefix"]
    x = np.fft.ifft(np.atleast_2d(tones), norm="ortho")
    return np.concatenate([x[:, -cp:], x], axis=1)


def ofdm_demodulate(samples) -> np.ndarray:
    cp = ofdm_config()["cyclic_prefix"]
    return np.fft.fft(np.atleast_2d(samples)[:, cp:], norm="ortho")


def time_domain_channel(tones, taps_bands, G: float = 1.0) -> np.ndarray:
    """Noiseless time-domain path: modulate, convolve each band's symbol
    stream with its taps (inter-symbol tails included), demodulate."""
    cp = ofdm_config()["cyclic_prefix"]
    taps_bands = np.atleast_2d(taps_bands)
    if taps_bands.shape[1] > cp + 1:
        raise ValueError("channel longer than the cyclic prefix")
    tx = ofdm_modulate(tones)
    out = np.empty_like(tx)
    bands = hop_band(np.arange(tx.shape[0]))
    for b in range(taps_bands.shape[0]):
        rows = np.flatnonzero(bands == b)
        if rows.size == 0:
            continue
        stream = tx[rows].ravel()
        rx = np.convolve(stream, G * taps_bands[b])[: stream.size]
        out[rows] = rx.reshape(rows.size, -1)
    return ofdm_demodulate(out)
