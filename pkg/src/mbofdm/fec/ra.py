"""Nonsystematic regular repeat-accumulate codes.

Encoder: repeat each info bit ``q = 1/rate`` times, permute, then accumulate
(1/(1+D)). The decoder alternates a two-state accumulator BCJR with the
repetition (variable) node update and stops as soon as the hard info
decisions re-encode to the hard decisions on the accumulator's posterior code
bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numba
import numpy as np

from .convolutional import CodeConfigError, FrameError
from .modes import mode_config

SUPPORTED_RATES = (Fraction(1, 4), Fraction(1, 8))


def _repetition(rate) -> int:
    r = Fraction(rate)
    if r not in SUPPORTED_RATES:
        raise CodeConfigError(f"RA rate {rate} not in {[str(x) for x in SUPPORTED_RATES]}")
    return r.denominator


@lru_cache(maxsize=None)
def ra_permutation(k: int, q: int) -> np.ndarray:
    """Fixed random permutation of the ``k*q`` repeated bits: v[j] = rep[perm[j]]."""
    seed = mode_config()["ra"]["interleaver_seed"]
    perm = np.random.default_rng(np.random.SeedSequence([seed, k, q])).permutation(k * q)
    perm.flags.writeable = False
    return perm


def ra_encode(info_bits, rate="1/4") -> np.ndarray:
    q = _repetition(rate)
    u = np.asarray(info_bits, dtype=np.int64) & 1
    v = np.repeat(u, q)[ra_permutation(u.size, q)]
    return (np.cumsum(v) & 1).astype(np.int8)


@numba.njit(inline="always")
def _maxstar(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@numba.njit(cache=True)
def _accumulator_bcjr(lc, la):
    """Extrinsic LLRs on accumulator inputs and posterior LLRs on its outputs."""
    n = lc.size
    alpha = np.full((n + 1, 2), -np.inf)
    beta = np.zeros((n + 1, 2))
    alpha[0, 0] = 0.0
    for j in range(n):
        for ns in range(2):
            acc = -np.inf
            for s in range(2):
                v = s ^ ns
                acc = _maxstar(acc, alpha[j, s] + 0.5 * la[j] * (1 - 2 * v) + 0.5 * lc[j] * (1 - 2 * ns))
            alpha[j + 1, ns] = acc
        m = max(alpha[j + 1, 0], alpha[j + 1, 1])
        alpha[j + 1, 0] -= m
        alpha[j + 1, 1] -= m
    for j in range(n - 1, -1, -1):
        for s in range(2):
            acc = -np.inf
            for v in range(2):
                ns = s ^ v
                acc = _maxstar(acc, beta[j + 1, ns] + 0.5 * la[j] * (1 - 2 * v) + 0.5 * lc[j] * (1 - 2 * ns))
            beta[j, s] = acc
        m = max(beta[j, 0], beta[j, 1])
        beta[j, 0] -= m
        beta[j, 1] -= m
    ext = np.empty(n)
    post_c = np.empty(n)
    for j in range(n):
        e0 = -np.inf
        e1 = -np.inf
        c0 = -np.inf
        c1 = -np.inf
        for s in range(2):
            # v = 0 keeps the state, v = 1 flips it
            t0 = alpha[j, s] + 0.5 * lc[j] * (1 - 2 * s) + beta[j + 1, s]
            t1 = alpha[j, s] + 0.5 * lc[j] * (1 - 2 * (1 - s)) + beta[j + 1, 1 - s]
            e0 = _maxstar(e0, t0)
            e1 = _maxstar(e1, t1)
            # output c = s ^ v
            g0 = t0 + 0.5 * la[j]
            g1 = t1 - 0.5 * la[j]
            if s == 0:
                c0 = _maxstar(c0, g0)
                c1 = _maxstar(c1, g1)
            else:
                c1 = _maxstar(c1, g0)
                c0 = _maxstar(c0, g1)
        ext[j] = e0 - e1
        post_c[j] = c0 - c1
    return ext, post_c


@numba.njit(cache=True)
def _ra_decode(lc, perm, k, q, max_iter):
    n = k * q
    la = np.zeros(n)
    e_rep = np.empty(n)
    hard = np.zeros(k, dtype=np.int8)
    total = np.zeros(k)
    for it in range(1, max_iter + 1):
        ext, post_c = _accumulator_bcjr(lc, la)
        for j in range(n):
            e_rep[perm[j]] = ext[j]
        for i in range(k):
            acc = 0.0
            for m in range(q):
                acc += e_rep[i * q + m]
            total[i] = acc
            hard[i] = 1 if acc < 0 else 0
        # early exit: re-encoded hard info bits agree with the posterior code word
        c = 0
        match = True
        for j in range(n):
            c ^= hard[perm[j] // q]
            if c != (1 if post_c[j] < 0 else 0):
                match = False
                break
        if match:
            return hard, total, it
        for j in range(n):
            r = perm[j]
            la[j] = total[r // q] - e_rep[r]
    return hard, total, max_iter


@dataclass(frozen=True)
class RaDecodeResult:
    bits: np.ndarray
    llr: np.ndarray
    iterations: int


def ra_decode(llr, k: int, rate="1/4", max_iter: int = 60) -> RaDecodeResult:
    """Iterative decoding; ``llr`` holds one value per coded bit (positive = 0)."""
    q = _repetition(rate)
    llr = np.asarray(llr, dtype=np.float64)
    if llr.size != k * q:
        raise FrameError(f"expected {k * q} LLRs, got {llr.size}")
    bits, total, it = _ra_decode(llr, ra_permutation(k, q).astype(np.int64), k, q, max_iter)
    return RaDecodeResult(bits=bits, llr=total, iterations=int(it))
