"""Punctured K=7 convolutional code with soft-input Viterbi decoding.

Mother code: rate 1/3, generators 133, 165, 171 (octal), 64 states. The
trellis is terminated with K-1 = 6 zero tail bits. Coded bits are serialized
per trellis step in generator order (A, B, C), skipping punctured positions.

State convention: ``state = (u[n-1] << 5) | ... | u[n-6]``. The generator MSB
taps the current input.
"""

from __future__ import annotations

import heapq
from fractions import Fraction

import numba
import numpy as np

from .modes import puncture_pattern

GENERATORS = (0o133, 0o165, 0o171)
CONSTRAINT_LENGTH = 7
MEMORY = CONSTRAINT_LENGTH - 1
N_STATES = 1 << MEMORY


class CodeConfigError(ValueError):
    """Unsupported code rate, block length or pattern."""


class FrameError(ValueError):
    """Soft input length does not match the code frame."""


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


def _build_trellis(generators=GENERATORS):
    n_out = len(generators)
    next_state = np.zeros((N_STATES, 2), dtype=np.int64)
    outputs = np.zeros((N_STATES, 2, n_out), dtype=np.int8)
    for s in range(N_STATES):
        for u in (0, 1):
            reg = (u << MEMORY) | s
            next_state[s, u] = reg >> 1
            for j, g in enumerate(generators):
                outputs[s, u, j] = _parity(g & reg)
    return next_state, outputs


NEXT_STATE, OUTPUTS = _build_trellis()


def _as_pattern(rate) -> np.ndarray:
    if isinstance(rate, np.ndarray):
        return rate.astype(np.int8)
    try:
        return puncture_pattern("CONV", rate)
    except KeyError:
        raise CodeConfigError(f"unsupported convolutional code rate {rate}") from None


def coded_length(n_info: int, rate) -> int:
    """Number of transmitted bits for ``n_info`` info bits plus tail."""
    pattern = _as_pattern(rate)
    steps = n_info + MEMORY
    period = pattern.shape[1]
    full, rem = divmod(steps, period)
    return int(full * pattern.sum() + pattern[:, :rem].sum())


def info_length_for(n_coded: int, rate) -> int:
    """Largest info length whose terminated codeword has exactly ``n_coded`` bits."""
    pattern = _as_pattern(rate)
    r = Fraction(int(pattern.shape[1]), int(pattern.sum()))
    k = int(n_coded * r) - MEMORY
    while k > 0 and coded_length(k, pattern) > n_coded:
        k -= 1
    if k <= 0 or coded_length(k, pattern) != n_coded:
        raise CodeConfigError(f"no terminated info length gives {n_coded} coded bits at rate {rate}")
    return k


def mother_encode(info_bits: np.ndarray) -> np.ndarray:
    """Rate-1/3 terminated encoding, shape (n_info + 6, 3)."""
    u = np.concatenate([np.asarray(info_bits, dtype=np.int64) & 1, np.zeros(MEMORY, dtype=np.int64)])
    out = np.empty((u.size, len(GENERATORS)), dtype=np.int8)
    for j, g in enumerate(GENERATORS):
        taps = np.array([(g >> (MEMORY - d)) & 1 for d in range(CONSTRAINT_LENGTH)])
        out[:, j] = np.convolve(u, taps)[: u.size] & 1
    return out


def puncture(mother: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    keep = np.resize(pattern.T, (mother.shape[0], pattern.shape[0])).astype(bool)
    return mother[keep]


def depuncture(llr: np.ndarray, pattern: np.ndarray, n_steps: int) -> np.ndarray:
    """Scatter LLRs into the (n_steps, 3) mother grid; punctured slots get 0."""
    keep = np.resize(pattern.T, (n_steps, pattern.shape[0])).astype(bool)
    llr = np.asarray(llr, dtype=np.float64)
    if llr.size != keep.sum():
        raise FrameError(f"expected {keep.sum()} LLRs, got {llr.size}")
    grid = np.zeros(keep.shape)
    grid[keep] = llr
    return grid


def conv_encode(info_bits, rate="1/2") -> np.ndarray:
    pattern = _as_pattern(rate)
    return puncture(mother_encode(info_bits), pattern).astype(np.int8)


@numba.njit(cache=True)
def _viterbi(grid, n_info, next_state, outputs):
    n_steps, n_out = grid.shape
    n_states = next_state.shape[0]
    neg = -1e300
    metric = np.full(n_states, neg)
    metric[0] = 0.0
    decision = np.zeros((n_steps, n_states), dtype=np.uint8)
    new = np.empty(n_states)
    # branch gain for every (state, input): sum_j (1 - 2c) * llr
    for t in range(n_steps):
        new[:] = neg
        n_inputs = 2 if t < n_info else 1
        for s in range(n_states):
            ms = metric[s]
            if ms == neg:
                continue
            for u in range(n_inputs):
                ns = next_state[s, u]
                g = 0.0
                for j in range(n_out):
                    if outputs[s, u, j]:
                        g -= grid[t, j]
                    else:
                        g += grid[t, j]
                m = ms + g
                # predecessors visited in increasing order; strict > keeps the lower index on ties
                if m > new[ns]:
                    new[ns] = m
                    decision[t, ns] = s & 1
        metric[:] = new
    bits = np.zeros(n_steps, dtype=np.int8)
    s = 0
    for t in range(n_steps - 1, -1, -1):
        bits[t] = s >> (6 - 1)
        s = ((s << 1) & (n_states - 1)) | decision[t, s]
    return bits[:n_info]


def viterbi_decode(llr, rate, n_info: int) -> np.ndarray:
    """ML decoding of a terminated, punctured codeword.

    ``llr`` holds one value per transmitted bit, positive meaning bit 0.
    """
    pattern = _as_pattern(rate)
    if coded_length(n_info, pattern) != np.size(llr):
        raise FrameError(f"{np.size(llr)} LLRs do not match {n_info} info bits at rate {rate}")
    grid = depuncture(llr, pattern, n_info + MEMORY)
    return _viterbi(grid, n_info, NEXT_STATE, OUTPUTS)


def free_distance(pattern: np.ndarray) -> int:
    """Free distance of the punctured code (minimum over puncturing phases)."""
    pattern = np.asarray(pattern)
    period = pattern.shape[1]
    best = np.inf
    w = (OUTPUTS * pattern.T[:, None, None, :]).sum(axis=-1)  # (phase, state, input)
    for phase0 in range(period):
        start = (int(w[phase0, 0, 1]), int(NEXT_STATE[0, 1]), (phase0 + 1) % period)
        heap = [start]
        seen = set()
        while heap:
            d, s, p = heapq.heappop(heap)
            if d >= best:
                break
            if s == 0:
                best = d
                break
            if (s, p) in seen:
                continue
            seen.add((s, p))
            for u in (0, 1):
                heapq.heappush(heap, (d + int(w[p, s, u]), int(NEXT_STATE[s, u]), (p + 1) % period))
    return int(best)
