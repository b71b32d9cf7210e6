"""Parallel-concatenated turbo code with the 3GPP internal interleaver.

Constituent code: 8-state recursive systematic encoder, feedback 13 and
feedforward 15 (octal). Both trellises are terminated with three tail steps;
the 12 tail bits follow the 3GPP ordering ``x1 z1 x1 z1 x1 z1 x2 z2 x2 z2 x2
z2``. Decoding is iterative log-MAP (exact Jacobian logarithm) BCJR.

Rate matching keeps every systematic and tail bit and selects parity bits at
evenly spaced trellis steps, alternating between the two constituent
encoders. LLRs are positive for bit 0.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numba
import numpy as np

from .convolutional import CodeConfigError, FrameError

SUPPORTED_BLOCKS = (150, 300, 600)
N_TAIL = 12
_INTER_ROW = {
    5: [4, 3, 2, 1, 0],
    10: [9, 8, 7, 6, 5, 4, 3, 2, 1, 0],
    20: [19, 9, 14, 4, 0, 2, 5, 7, 12, 18, 10, 8, 13, 17, 3, 1, 16, 6, 15, 11],
}
_INTER_ROW_ALT20 = [19, 9, 14, 4, 0, 2, 5, 7, 12, 18, 16, 13, 17, 15, 3, 1, 6, 11, 8, 10]


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % d for d in range(2, int(n**0.5) + 1))


def _primitive_root(p: int) -> int:
    factors = [q for q in range(2, p) if (p - 1) % q == 0 and _is_prime(q)]
    for v in range(2, p):
        if all(pow(v, (p - 1) // q, p) != 1 for q in factors):
            return v
    raise ValueError(p)


def interleaver_dimensions(k: int) -> tuple[int, int, int]:
    """(rows R, prime p, columns C) of the 3GPP rectangular interleaver."""
    if not 40 <= k <= 5114:
        raise CodeConfigError(f"interleaver length {k} outside 40..5114")
    if k <= 159:
        rows = 5
    elif k <= 200 or 481 <= k <= 530:
        rows = 10
    else:
        rows = 20
    if 481 <= k <= 530:
        return rows, 53, 53
    p = 7
    while not (_is_prime(p) and k <= rows * (p + 1)):
        p += 1
    if k <= rows * (p - 1):
        cols = p - 1
    elif k <= rows * p:
        cols = p
    else:
        cols = p + 1
    return rows, p, cols


@lru_cache(maxsize=None)
def internal_interleaver(k: int) -> np.ndarray:
    """Permutation ``pi`` with interleaved[i] = data[pi[i]]."""
    rows, p, cols = interleaver_dimensions(k)
    v = _primitive_root(p)
    s = [1]
    for _ in range(1, p - 1):
        s.append(s[-1] * v % p)
    q = [1]
    while len(q) < rows:
        c = q[-1] + 1
        while not (_is_prime(c) and c > 6 and np.gcd(c, p - 1) == 1):
            c += 1
        q.append(c)
    if rows == 20 and (2281 <= k <= 2480 or 3161 <= k <= 3210):
        t = _INTER_ROW_ALT20
    else:
        t = _INTER_ROW[rows]
    r = [0] * rows
    for i in range(rows):
        r[t[i]] = q[i]

    intra = []
    for i in range(rows):
        u = [s[(j * r[i]) % (p - 1)] for j in range(p - 1)]
        if cols == p:
            u.append(0)
        elif cols == p + 1:
            u += [0, p]
        else:
            u = [x - 1 for x in u]
        intra.append(u)
    if cols == p + 1 and k == rows * cols:
        last = intra[rows - 1]
        last[0], last[p] = last[p], last[0]

    idx = np.arange(rows * cols).reshape(rows, cols)
    permuted = np.array([idx[i, intra[i]] for i in range(rows)])[t]
    out = permuted.T.ravel()
    return out[out < k]


def _rsc_tables():
    nxt = np.zeros((8, 2), dtype=np.int64)
    par = np.zeros((8, 2), dtype=np.int64)
    tail_u = np.zeros(8, dtype=np.int64)
    for s in range(8):
        d1, d2, d3 = (s >> 2) & 1, (s >> 1) & 1, s & 1
        for u in (0, 1):
            a = u ^ d2 ^ d3
            par[s, u] = a ^ d1 ^ d3
            nxt[s, u] = (a << 2) | (d1 << 1) | d2
        tail_u[s] = d2 ^ d3
    return nxt, par, tail_u


NEXT_STATE, PARITY, TAIL_INPUT = _rsc_tables()


@numba.njit(cache=True)
def _rsc_encode(u, nxt, par, tail_u):
    k = u.size
    sys = np.empty(k + 3, dtype=np.int8)
    z = np.empty(k + 3, dtype=np.int8)
    s = 0
    for t in range(k + 3):
        b = u[t] if t < k else tail_u[s]
        sys[t] = b
        z[t] = par[s, b]
        s = nxt[s, b]
    return sys, z


def rsc_encode(info_bits) -> tuple[np.ndarray, np.ndarray]:
    """Terminated constituent encoding: (systematic incl. tail, parity incl. tail)."""
    u = np.asarray(info_bits, dtype=np.int64) & 1
    return _rsc_encode(u, NEXT_STATE, PARITY, TAIL_INPUT)


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
def _bcjr(sys, par, apr, n_info, nxt, pout, tail_u):
    n = sys.size
    alpha = np.full((n + 1, 8), -np.inf)
    beta = np.full((n + 1, 8), -np.inf)
    alpha[0, 0] = 0.0
    beta[n, 0] = 0.0
    gam = np.zeros((n, 8, 2))
    for t in range(n):
        for s in range(8):
            for u in range(2):
                g = 0.5 * (sys[t] * (1 - 2 * u) + par[t] * (1 - 2 * pout[s, u]))
                if t < n_info:
                    g += 0.5 * apr[t] * (1 - 2 * u)
                elif u != tail_u[s]:
                    g = -np.inf
                gam[t, s, u] = g
    for t in range(n):
        for s in range(8):
            a = alpha[t, s]
            if a == -np.inf:
                continue
            for u in range(2):
                if gam[t, s, u] == -np.inf:
                    continue
                ns = nxt[s, u]
                alpha[t + 1, ns] = _maxstar(alpha[t + 1, ns], a + gam[t, s, u])
        m = alpha[t + 1].max()
        alpha[t + 1] -= m
    for t in range(n - 1, -1, -1):
        for s in range(8):
            acc = -np.inf
            for u in range(2):
                if gam[t, s, u] == -np.inf:
                    continue
                acc = _maxstar(acc, gam[t, s, u] + beta[t + 1, nxt[s, u]])
            beta[t, s] = acc
        m = beta[t].max()
        beta[t] -= m
    post = np.empty(n_info)
    for t in range(n_info):
        num = -np.inf
        den = -np.inf
        for s in range(8):
            a = alpha[t, s]
            if a == -np.inf:
                continue
            m0 = a + gam[t, s, 0] + beta[t + 1, nxt[s, 0]]
            m1 = a + gam[t, s, 1] + beta[t + 1, nxt[s, 1]]
            num = _maxstar(num, m0)
            den = _maxstar(den, m1)
        post[t] = num - den
    return post


def bcjr_posteriors(sys_llr, par_llr, apriori) -> np.ndarray:
    """Log-MAP posterior LLRs of the info bits of one terminated constituent code.

    ``sys_llr`` and ``par_llr`` include the three tail steps; ``apriori`` covers
    the info bits only.
    """
    sys_llr = np.asarray(sys_llr, dtype=np.float64)
    apriori = np.asarray(apriori, dtype=np.float64)
    return _bcjr(sys_llr, np.asarray(par_llr, dtype=np.float64), apriori, apriori.size, NEXT_STATE, PARITY, TAIL_INPUT)


def _check_block(k: int, allow_any: bool = False) -> None:
    if not allow_any and k not in SUPPORTED_BLOCKS:
        raise CodeConfigError(f"turbo block length {k} not in {SUPPORTED_BLOCKS}")


@lru_cache(maxsize=None)
def rate_match_mask(k: int, n_coded: int) -> np.ndarray:
    """Boolean keep-mask over the mother stream ``[x z1 z2]*k + tail``."""
    n_par = n_coded - k - N_TAIL
    if not 0 <= n_par <= 2 * k:
        raise CodeConfigError(f"cannot rate-match {k} info bits to {n_coded} coded bits")
    keep = np.zeros((k, 3), dtype=bool)
    keep[:, 0] = True
    if n_par <= k:
        i = np.arange(n_par)
        keep[i * k // n_par, 1 + i % 2] = True
    else:
        t = np.arange(k)
        keep[t, 1 + t % 2] = True
        i = np.arange(n_par - k)
        keep[i * k // (n_par - k), 2 - (i * k // (n_par - k)) % 2] = True
    mask = np.concatenate([keep.ravel(), np.ones(N_TAIL, dtype=bool)])
    mask.flags.writeable = False
    return mask


def coded_length(k: int, rate) -> int:
    return int(k / Fraction(rate))


def _mother_stream(u: np.ndarray) -> np.ndarray:
    k = u.size
    x1, z1 = rsc_encode(u)
    x2, z2 = rsc_encode(u[internal_interleaver(k)])
    body = np.stack([x1[:k], z1[:k], z2[:k]], axis=1).ravel()
    tail = np.stack([np.r_[x1[k:], x2[k:]], np.r_[z1[k:], z2[k:]]], axis=1).ravel()
    return np.concatenate([body, tail]).astype(np.int8)


def turbo_encode(info_bits, rate="1/2", allow_any_length: bool = False) -> np.ndarray:
    """Encode one block and rate-match it to ``k / rate`` bits (tail excluded from the rate)."""
    u = np.asarray(info_bits, dtype=np.int64) & 1
    _check_block(u.size, allow_any_length)
    return _mother_stream(u)[rate_match_mask(u.size, coded_length(u.size, rate))]


def turbo_decode(llr, k: int, rate="1/2", n_iter: int = 10, allow_any_length: bool = False, return_llr: bool = False):
    """Iterative log-MAP decoding of a rate-matched block of ``k`` info bits."""
    _check_block(k, allow_any_length)
    mask = rate_match_mask(k, coded_length(k, rate))
    llr = np.asarray(llr, dtype=np.float64)
    if llr.size != mask.sum():
        raise FrameError(f"expected {mask.sum()} LLRs, got {llr.size}")
    full = np.zeros(mask.size)
    full[mask] = llr
    body = full[: 3 * k].reshape(k, 3)
    tail = full[3 * k :].reshape(6, 2)
    pi = internal_interleaver(k)
    sys1 = np.r_[body[:, 0], tail[:3, 0]]
    par1 = np.r_[body[:, 1], tail[:3, 1]]
    sys2 = np.r_[body[pi, 0], tail[3:, 0]]
    par2 = np.r_[body[:, 2], tail[3:, 1]]
    la1 = np.zeros(k)
    post2 = np.zeros(k)
    for _ in range(n_iter):
        post1 = _bcjr(sys1, par1, la1, k, NEXT_STATE, PARITY, TAIL_INPUT)
        la2 = (post1 - sys1[:k] - la1)[pi]
        post2 = _bcjr(sys2, par2, la2, k, NEXT_STATE, PARITY, TAIL_INPUT)
        ext2 = post2 - sys2[:k] - la2
        la1 = np.empty(k)
        la1[pi] = ext2
    out = np.empty(k)
    out[pi] = post2
    bits = (out < 0).astype(np.int8)
    return (bits, out) if return_llr else bits
