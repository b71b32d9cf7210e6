"""Per-tone bit allocation for one 100-tone OFDM band.

* CCB margin-adaptive loading: ``b = log2(1 + SNR 10^-((gap + margin)/10))``
  rounded to 0..6, with the margin updated until the rounded total hits the
  target, then a residual-driven fine adjustment.
* Clustered CCB: the same loop over clusters of ``D`` adjacent tones using the
  cluster-mean of ``log2(1 + ...)``; each tone inherits its cluster's bits.
* Piazzo-style greedy loading: bits are added one at a time where the extra
  transmit power needed to keep the uncoded BER at the target is smallest.
  Only SNR ratios matter.

Every plan carries exactly 200 bits; if CCB cannot produce one it returns
the all-QPSK plan.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, log_ndtr

from .modem import BITS_PER_OFDM_SYMBOL, MAX_BITS_PER_TONE, constellation

N_DATA_TONES = 100
CLUSTER_SIZES = (1, 2, 5, 10)
MARGIN_ITERATIONS = 30


class LoadingError(ValueError):
    """Invalid loading parameters."""


@dataclass(frozen=True)
class LoadingPlan:
    bits: np.ndarray  # (100,) ints in 0..6
    algorithm: str
    cluster_size: int = 1
    gap_db: float | None = None
    margin_db: float | None = None
    fallback: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.shape != (N_DATA_TONES,) or b.sum() != BITS_PER_OFDM_SYMBOL or b.min() < 0 or b.max() > MAX_BITS_PER_TONE:
            raise LoadingError(f"invalid plan: shape {b.shape}, total {b.sum()}")
        if (b.reshape(-1, self.cluster_size) != b[:: self.cluster_size, None]).any():
            raise LoadingError("plan is not constant within clusters")

    @property
    def total_bits(self) -> int:
        return int(np.sum(self.bits))

    def feedback(self) -> list[int]:
        """Compact payload: one integer per cluster."""
        return [int(v) for v in self.bits[:: self.cluster_size]]

    @classmethod
    def from_feedback(cls, values, cluster_size: int = 1, algorithm: str = "feedback") -> "LoadingPlan":
        return cls(np.repeat(np.asarray(values, dtype=np.int64), cluster_size), algorithm, cluster_size)


def all_qpsk(algorithm: str = "none", cluster_size: int = 1, **kw) -> LoadingPlan:
    return LoadingPlan(np.full(N_DATA_TONES, 2, dtype=np.int64), algorithm, cluster_size, **kw)


def _validate_snr(snr) -> np.ndarray:
    snr = np.asarray(snr, dtype=float)
    if snr.shape != (N_DATA_TONES,):
        raise LoadingError(f"expected {N_DATA_TONES} tone SNRs, got shape {snr.shape}")
    if np.any(~np.isfinite(snr)) or np.any(snr < 0):
        raise LoadingError("tone SNRs must be finite and nonnegative")
    return snr


def _ccb_units(snr_units: np.ndarray, gap_db: float, target: int, max_bits: int):
    """CCB on ``snr_units`` of shape (units, tones per unit); returns (bits, margin) or None."""

    def real_bits(margin):
        scale = 10.0 ** (-(gap_db + margin) / 10.0)
        return np.mean(np.log2(1.0 + snr_units * scale), axis=1)

    margin = 0.0
    for _ in range(MARGIN_ITERATIONS):
        b = real_bits(margin)
        b_hat = np.clip(np.round(b), 0, max_bits)
        total = int(b_hat.sum())
        used = int(np.count_nonzero(b_hat))
        if used == 0:
            return None
        if total == target:
            break
        margin += 10.0 * math.log10(2.0) * (total - target) / used
    b = real_bits(margin)
    b_hat = np.clip(np.round(b), 0, max_bits).astype(np.int64)
    diff = b - b_hat
    total = int(b_hat.sum())
    # fine adjustment: move the tones whose rounding residual is largest first
    while total > target:
        cand = np.where(b_hat > 0, diff, np.inf)
        i = int(np.argmin(cand))
        if not np.isfinite(cand[i]):
            return None
        b_hat[i] -= 1
        diff[i] += 1.0
        total -= 1
    while total < target:
        cand = np.where(b_hat < max_bits, diff, -np.inf)
        i = int(np.argmax(cand))
        if not np.isfinite(cand[i]) or b[i] <= 0:
            return None
        b_hat[i] += 1
        diff[i] -= 1.0
        total += 1
    return b_hat, margin


def ccb_load_clustered(snr_per_tone, cluster_size: int = 1, gap_db: float = 6.0,
                       target_bits: int = BITS_PER_OFDM_SYMBOL) -> LoadingPlan:
    """Clustered margin-adaptive loading of ``target_bits`` over 100 tones."""
    snr = _validate_snr(snr_per_tone)
    D = int(cluster_size)
    if D < 1 or N_DATA_TONES % D or target_bits % D:
        raise LoadingError(f"cluster size {cluster_size} must divide {N_DATA_TONES} and the bit target")
    algo = "ccb" if D == 1 else f"ccb_d{D}"
    res = _ccb_units(snr.reshape(-1, D), gap_db, target_bits // D, MAX_BITS_PER_TONE)
    if res is None:
        return all_qpsk(algo, D, gap_db=gap_db, fallback=True)
    b_hat, margin = res
    return LoadingPlan(np.repeat(b_hat, D), algo, D, gap_db=gap_db, margin_db=margin)


def ccb_load(snr_per_tone, gap_db: float = 6.0, target_bits: int = BITS_PER_OFDM_SYMBOL) -> LoadingPlan:
    return ccb_load_clustered(snr_per_tone, 1, gap_db, target_bits)


# ------------------------------------------------------------------- Piazzo
def _q(x):
    return 0.5 * erfc(x / math.sqrt(2.0))


@lru_cache(maxsize=None)
def _nn_stats(m: int):
    """(unit-energy min distance, mean nearest neighbours, mean label bits flipped)."""
    c = constellation(m)
    d = np.abs(c.points[:, None] - c.points[None])
    dmin = d[d > 1e-9].min()
    pairs = np.argwhere(np.abs(d - dmin) < 1e-9)
    flips = np.array([(c.bits[i] != c.bits[j]).sum() for i, j in pairs])
    return float(dmin), pairs.shape[0] / c.size, float(flips.mean())


def uncoded_ber(snr, m: int) -> np.ndarray:
    """Nearest-neighbour approximation ``(K w / m) Q(sqrt(dmin^2 snr / 2))``."""
    dmin, k, w = _nn_stats(m)
    return k * w / m * _q(np.sqrt(dmin**2 * np.asarray(snr, dtype=float) / 2.0))


@lru_cache(maxsize=None)
def required_snr(m: int, target_ber: float = 1e-5) -> float:
    """Linear SNR at which ``uncoded_ber(., m)`` equals the target (0 for m = 0)."""
    if m == 0:
        return 0.0
    dmin, k, w = _nn_stats(m)

    def f(x_db):
        return math.log(k * w / m) + log_ndtr(-math.sqrt(dmin**2 * 10.0 ** (x_db / 10) / 2.0)) - math.log(target_ber)

    return 10.0 ** (brentq(f, -30.0, 60.0, xtol=1e-12) / 10.0)


def piazzo_load(relative_snr, target_ber: float = 1e-5, target_bits: int = BITS_PER_OFDM_SYMBOL) -> LoadingPlan:
    """Greedy minimum-power loading against an uncoded-BER target.

    Adding a bit to tone ``i`` at ``m`` bits costs
    ``(required_snr(m+1) - required_snr(m)) / snr_i``; the cheapest increment
    wins, ties to the lower tone index. Scaling all SNRs leaves the plan
    unchanged.
    """
    snr = _validate_snr(relative_snr)
    if not np.any(snr > 0):
        return all_qpsk("piazzo", fallback=True)
    req = [required_snr(m, target_ber) for m in range(MAX_BITS_PER_TONE + 1)]
    step = np.diff(req)
    # normalize so the cost comparison does not depend on the SNR scale
    g = snr / snr.max()
    bits = np.zeros(N_DATA_TONES, dtype=np.int64)
    heap = [(step[0] / g[i], i) for i in range(N_DATA_TONES) if g[i] > 0]
    heapq.heapify(heap)
    placed = 0
    while placed < target_bits and heap:
        _, i = heapq.heappop(heap)
        bits[i] += 1
        placed += 1
        if bits[i] < MAX_BITS_PER_TONE:
            heapq.heappush(heap, (step[bits[i]] / g[i], i))
    if placed < target_bits:
        return all_qpsk("piazzo", fallback=True)
    return LoadingPlan(bits, "piazzo", meta={"target_ber": target_ber})


def load_bands(snr_bands, algorithm: str, gap_db: float = 6.0, cluster_size: int = 1, target_ber: float = 1e-5):
    """Apply a loading algorithm to each band of a (3, 100) SNR array."""
    plans = []
    for snr in np.atleast_2d(snr_bands):
        if algorithm == "none":
            plans.append(all_qpsk())
        elif algorithm == "ccb":
            plans.append(ccb_load_clustered(snr, cluster_size, gap_db))
        elif algorithm == "piazzo":
            plans.append(piazzo_load(snr, target_ber))
        else:
            raise LoadingError(f"unknown loading algorithm {algorithm!r}")
    return plans
