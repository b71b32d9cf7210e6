"""Data-rate modes and coding configuration tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml

FAMILIES = ("CONV", "TURBO", "RA")
FRAME_BITS = 1200  # coded bits per interleaver frame without spreading
BITS_PER_OFDM_SYMBOL = 200


class ModeError(ValueError):
    pass


@lru_cache(maxsize=None)
def mode_config() -> dict:
    return yaml.safe_load(resources.files("mbofdm").joinpath("data/modes.yaml").read_text())


def puncture_pattern(family: str, rate) -> np.ndarray:
    """Puncturing matrix (outputs x period) for ``rate`` (str or Fraction)."""
    table = mode_config()["puncturing"][family]
    return np.array(table[str(Fraction(rate))], dtype=np.int8)


def spreading_layout(factor: int) -> tuple[int, int]:
    """(time, frequency) repetition for a spreading factor."""
    try:
        entry = mode_config()["spreading"][int(factor)]
    except KeyError:
        raise ModeError(f"unsupported spreading factor {factor}") from None
    return int(entry["time"]), int(entry["freq"])


def interleaver_geometry(length: int) -> tuple[int, int]:
    try:
        entry = mode_config()["interleaver"][int(length)]
    except KeyError:
        raise ModeError(f"unsupported channel interleaver length {length}") from None
    return int(entry["symbol_groups"]), int(entry["tone_cols"])


@dataclass(frozen=True)
class TransmissionMode:
    name: str
    code_family: str
    punctured_rate: Fraction
    spreading: int = 1
    block_len: int | None = None  # info bits per code block (TURBO / RA)

    def __post_init__(self):
        if self.code_family not in FAMILIES:
            raise ModeError(f"unknown code family {self.code_family}")
        spreading_layout(self.spreading)
        if self.code_family == "RA" and self.punctured_rate not in (Fraction(1, 4), Fraction(1, 8)):
            raise ModeError("RA codes support rates 1/4 and 1/8")
        if self.code_family != "CONV" and self.block_len is None:
            raise ModeError(f"{self.name}: block_len required for {self.code_family}")

    @property
    def mother_rate(self) -> Fraction:
        return self.punctured_rate if self.code_family == "RA" else Fraction(1, 3)

    @property
    def interleaver_len(self) -> int:
        return FRAME_BITS // self.spreading

    @property
    def bits_per_symbol(self) -> float:
        return float(2 * self.punctured_rate / self.spreading)

    @property
    def info_rate_mbps(self) -> float:
        return self.bits_per_symbol * mode_config()["data_tones"] / (mode_config()["ofdm_symbol_ns"] * 1e-3)

    @property
    def spreading_kind(self) -> str:
        t, f = spreading_layout(self.spreading)
        return {(1, 1): "none", (2, 1): "time", (1, 2): "freq", (2, 2): "time+freq"}[(t, f)]

    @property
    def coded_block_len(self) -> int:
        if self.code_family == "CONV":
            return self.interleaver_len
        return int(self.block_len / self.punctured_rate)

    @property
    def info_block_len(self) -> int:
        if self.code_family == "CONV":
            from .convolutional import info_length_for

            return info_length_for(self.coded_block_len, self.punctured_rate)
        return int(self.block_len)

    @property
    def blocks_per_unit(self) -> int:
        """Code blocks per decode unit (a whole number of interleaver frames)."""
        n = self.coded_block_len
        return math.lcm(n, self.interleaver_len) // n

    @property
    def frames_per_unit(self) -> int:
        return self.blocks_per_unit * self.coded_block_len // self.interleaver_len


@lru_cache(maxsize=None)
def mode_table() -> dict[str, TransmissionMode]:
    modes = {}
    for entry in mode_config()["modes"]:
        modes[entry["name"]] = TransmissionMode(
            name=entry["name"],
            code_family=entry["family"],
            punctured_rate=Fraction(entry["rate"]),
            spreading=int(entry["spreading"]),
            block_len=entry.get("block"),
        )
    return modes


def get_mode(name: str) -> TransmissionMode:
    try:
        return mode_table()[name]
    except KeyError:
        raise ModeError(f"unknown mode {name!r}; known: {sorted(mode_table())}") from None
