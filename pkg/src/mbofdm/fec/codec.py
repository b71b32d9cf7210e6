"""Mode-level encode/decode of one decode unit.

A decode unit holds ``mode.blocks_per_unit`` code blocks whose concatenated
coded bits fill ``mode.frames_per_unit`` channel-interleaver frames exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import convolutional, ra, turbo
from .interleaver import channel_deinterleave, channel_interleave
from .modes import TransmissionMode


@dataclass(frozen=True)
class CodedFrame:
    info_bits: np.ndarray
    coded_bits: np.ndarray  # post-puncture, pre-interleave
    interleaved_bits: np.ndarray  # shape (frames, interleaver_len)
    mode: TransmissionMode


def info_bits_per_unit(mode: TransmissionMode) -> int:
    return mode.blocks_per_unit * mode.info_block_len


def _encode_block(u, mode):
    if mode.code_family == "CONV":
        return convolutional.conv_encode(u, mode.punctured_rate)
    if mode.code_family == "TURBO":
        return turbo.turbo_encode(u, mode.punctured_rate)
    return ra.ra_encode(u, mode.punctured_rate)


def _decode_block(llr, mode, k, n_iter):
    if mode.code_family == "CONV":
        return convolutional.viterbi_decode(llr, mode.punctured_rate, k), 1
    if mode.code_family == "TURBO":
        return turbo.turbo_decode(llr, k, mode.punctured_rate, n_iter=n_iter or 10), n_iter or 10
    res = ra.ra_decode(llr, k, mode.punctured_rate, max_iter=n_iter or 60)
    return res.bits, res.iterations


def encode_unit(info_bits, mode: TransmissionMode) -> CodedFrame:
    info = np.asarray(info_bits, dtype=np.int8)
    if info.size != info_bits_per_unit(mode):
        raise convolutional.FrameError(f"{mode.name} expects {info_bits_per_unit(mode)} info bits, got {info.size}")
    blocks = info.reshape(mode.blocks_per_unit, mode.info_block_len)
    coded = np.concatenate([_encode_block(b, mode) for b in blocks])
    frames = coded.reshape(mode.frames_per_unit, mode.interleaver_len)
    return CodedFrame(info, coded, channel_interleave(frames), mode)


def decode_unit(llr_interleaved, mode: TransmissionMode, n_iter: int | None = None):
    """Deinterleave and decode; returns (info bits, decoder iterations per block)."""
    llr = np.asarray(llr_interleaved, dtype=np.float64).reshape(mode.frames_per_unit, mode.interleaver_len)
    coded = channel_deinterleave(llr).ravel()
    k = mode.info_block_len
    out, its = [], []
    for block in coded.reshape(mode.blocks_per_unit, mode.coded_block_len):
        bits, it = _decode_block(block, mode, k, n_iter)
        out.append(bits)
        its.append(it)
    return np.concatenate(out).astype(np.int8), np.array(its)
