"""Modified Saleh-Valenzuela UWB channel (IEEE 802.15.3a CM1-CM4).

Realizations are drawn in continuous time, binned onto the system sample
grid (528 MHz by default) and normalized to unit multipath energy. An outer
lognormal shadowing term ``G`` multiplies the whole response.

Each ray has a lognormal magnitude. Its complex baseband phase is uniform on
[0, 2pi) by default (``ray_phase="uniform"``); ``ray_phase="sign"`` reproduces
the real-valued reference generator with equiprobable +/-1 polarity, which
gives real taps and Hermitian-symmetric band responses. Rays that fall into
the same sample bin are summed coherently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
import yaml
from scipy import stats

SAMPLE_RATE_MHZ = 528.0
N_TONES = 128
N_BANDS = 3
LINK_MAX_TAPS = 32
DUMP_FORMAT = "mbofdm-channel-realization"
DUMP_VERSION = 1

_LN10 = np.log(10.0)


class ChannelParameterError(ValueError):
    """Invalid channel model parameters."""


class TruncationError(ValueError):
    """The DFT size is shorter than the impulse response."""


@dataclass(frozen=True)
class ChannelModelParams:
    model_id: str
    cluster_arrival_rate: float  # 1/ns
    ray_arrival_rate: float  # 1/ns
    cluster_decay: float  # ns
    ray_decay: float  # ns
    cluster_lognormal_std: float  # dB
    ray_lognormal_std: float  # dB
    outer_shadowing_std: float  # dB, zero mean
    nlos: bool = True
    description: str = ""

    def __post_init__(self):
        for name in ("cluster_arrival_rate", "ray_arrival_rate", "cluster_decay", "ray_decay"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ChannelParameterError(f"{self.model_id}: {name} must be > 0, got {value}")
        for name in ("cluster_lognormal_std", "ray_lognormal_std", "outer_shadowing_std"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ChannelParameterError(f"{self.model_id}: {name} must be >= 0, got {value}")


def load_channel_models(path: Union[str, Path, None] = None) -> dict[str, ChannelModelParams]:
    """Read a channel parameter file (one YAML block per model)."""
    if path is None:
        text = resources.files("mbofdm").joinpath("data/channel_models.yaml").read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "models" not in doc:
        raise ChannelParameterError("channel parameter file has no 'models' section")
    return {name: ChannelModelParams(model_id=name, **block) for name, block in doc["models"].items()}


@lru_cache(maxsize=None)
def _builtin_models() -> dict[str, ChannelModelParams]:
    return load_channel_models()


def get_model(model_id: str) -> ChannelModelParams:
    try:
        return _builtin_models()[model_id.upper()]
    except KeyError:
        raise ChannelParameterError(f"unknown channel model {model_id!r}") from None


@dataclass
class ChannelRealization:
    """Sampled impulse responses for each hopping band plus shadowing."""

    taps: np.ndarray  # (n_bands, L) unit energy per band
    shadowing_G: float
    model_id: str
    rng_seed: int
    sample_rate_mhz: float = SAMPLE_RATE_MHZ

    @property
    def n_bands(self) -> int:
        return self.taps.shape[0]

    @property
    def length(self) -> int:
        return self.taps.shape[1]

    def energy(self) -> np.ndarray:
        return np.sum(np.abs(self.taps) ** 2, axis=1)

    def truncated(self, max_taps: int = LINK_MAX_TAPS) -> "ChannelRealization":
        """Keep ``max_taps`` samples of each band from its first arrival on and
        renormalize (the receiver is synchronized to the first path)."""
        taps = np.zeros((self.n_bands, min(max_taps, self.length)), dtype=complex)
        for b, row in enumerate(self.taps):
            first = int(np.argmax(np.abs(row) > 0))
            seg = row[first:first + max_taps]
            taps[b, :seg.size] = seg
        norm = np.sqrt(np.sum(np.abs(taps) ** 2, axis=1, keepdims=True))
        return ChannelRealization(taps / norm, self.shadowing_G, self.model_id,
                                  self.rng_seed, self.sample_rate_mhz)


@dataclass
class FreqResponse:
    """Per-tone gains ``H`` with shape (n_bands, n_tones); ``G`` is the shadowing."""

    H: np.ndarray
    G: float

    @property
    def normalized(self) -> np.ndarray:
        return self.H / self.G

    def flat(self) -> np.ndarray:
        """All bands concatenated, tone index i = band * n_tones + tone."""
        return self.H.reshape(-1)


RAY_PHASES = ("uniform", "sign")


def draw_rays(params: ChannelModelParams, rng: np.random.Generator,
              ray_phase: str = "uniform") -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time ray delays (ns) and complex amplitudes for one channel."""
    if ray_phase not in RAY_PHASES:
        raise ChannelParameterError(f"ray_phase must be one of {RAY_PHASES}")
    lam_c, lam_r = params.cluster_arrival_rate, params.ray_arrival_rate
    gam_c, gam_r = params.cluster_decay, params.ray_decay
    s1, s2 = params.cluster_lognormal_std, params.ray_lognormal_std
    bias = (s1 ** 2 + s2 ** 2) * _LN10 / 20.0
    t_cluster_max, t_ray_max = 10.0 * gam_c, 10.0 * gam_r
    chunk = int(1.5 * t_ray_max * lam_r) + 16

    delays, amps = [], []
    tc = rng.exponential(1.0 / lam_c) if params.nlos else 0.0
    while tc < t_cluster_max:
        xi = s1 * rng.standard_normal()
        tr = np.concatenate(([0.0], np.cumsum(rng.exponential(1.0 / lam_r, chunk))))
        while tr[-1] < t_ray_max:
            more = tr[-1] + np.cumsum(rng.exponential(1.0 / lam_r, chunk))
            tr = np.concatenate((tr, more))
        tr = tr[tr < t_ray_max]
        mu = (-10.0 * tc / gam_c - 10.0 * tr / gam_r) / _LN10 - bias
        beta = mu + s2 * rng.standard_normal(tr.size)
        if ray_phase == "sign":
            rot = 1.0 - 2.0 * rng.integers(0, 2, tr.size)
        else:
            rot = np.exp(2j * np.pi * rng.random(tr.size))
        amps.append(rot * 10.0 ** ((xi + beta) / 20.0))
        delays.append(tc + tr)
        tc += rng.exponential(1.0 / lam_c)
    if not delays:
        return np.zeros(1), np.ones(1, dtype=complex)
    return np.concatenate(delays), np.concatenate(amps).astype(complex)


def bin_rays(delays: np.ndarray, amps: np.ndarray, sample_rate_mhz: float = SAMPLE_RATE_MHZ) -> np.ndarray:
    """Sum ray amplitudes into sample bins of width 1/sample_rate, unit energy."""
    idx = np.floor(delays * sample_rate_mhz * 1e-3).astype(np.int64)
    amps = np.asarray(amps, dtype=complex)
    taps = np.bincount(idx, weights=amps.real) + 1j * np.bincount(idx, weights=amps.imag)
    energy = np.sum(np.abs(taps) ** 2)
    if energy <= 0:
        taps = np.zeros_like(taps)
        taps[0] = 1.0
        return taps
    return taps / np.sqrt(energy)


def draw_shadowing(std_db: float, seed: int) -> float:
    # separate stream so models sharing a seed share the same G
    g_stream = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5AD0]))
    return float(10.0 ** (std_db * g_stream.standard_normal() / 20.0))


def generate_realization(
    params: ChannelModelParams,
    seed: int,
    n_bands: int = N_BANDS,
    sample_rate_mhz: float = SAMPLE_RATE_MHZ,
    max_taps: int | None = None,
    ray_phase: str = "uniform",
) -> ChannelRealization:
    """Draw one channel realization; each band gets an independent multipath draw.

    With ``max_taps`` the responses are truncated to that many samples and
    renormalized to unit energy, as used by the link simulator.
    """
    if n_bands < 1:
        raise ChannelParameterError("n_bands must be >= 1")
    if max_taps is not None and max_taps < 1:
        raise ChannelParameterError("max_taps must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC1A]))
    bands = [bin_rays(*draw_rays(params, rng, ray_phase), sample_rate_mhz) for _ in range(n_bands)]
    length = max(b.size for b in bands)
    taps = np.zeros((n_bands, length), dtype=complex)
    for k, b in enumerate(bands):
        taps[k, : b.size] = b
    ch = ChannelRealization(taps, draw_shadowing(params.outer_shadowing_std, seed),
                            params.model_id, int(seed), sample_rate_mhz)
    if max_taps is not None:
        ch = ch.truncated(max_taps)
    return ch


def to_freq_response(ch: ChannelRealization, n_tones: int = N_TONES) -> FreqResponse:
    """n_tones-point DFT of each band's taps, scaled by the shadowing G.

    Unit-energy taps give unit mean-square tone gain, i.e.
    ``mean(|H/G|**2) == 1`` per band.
    """
    if n_tones < ch.length:
        raise TruncationError(f"n_tones={n_tones} shorter than impulse response length {ch.length}")
    H = np.fft.fft(ch.taps, n=n_tones, axis=1)
    return FreqResponse(H * ch.shadowing_G, ch.shadowing_G)


def _folded_dft(taps: np.ndarray, n_tones: int) -> np.ndarray:
    """DFT at n_tones bins of arbitrarily long taps (time-aliased sum)."""
    L = taps.shape[-1]
    if L > n_tones:
        pad = (-L) % n_tones
        taps = np.pad(taps, [(0, 0)] * (taps.ndim - 1) + [(0, pad)])
        taps = taps.reshape(*taps.shape[:-1], -1, n_tones).sum(axis=-2)
    return np.fft.fft(taps, n=n_tones, axis=-1)


def rayleigh_ln_response(seed: int, n_bands: int = N_BANDS, n_tones: int = N_TONES,
                         shadowing_std_db: float = 3.0) -> FreqResponse:
    """Reference channel: i.i.d. unit-variance Rayleigh tones times lognormal G."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x11D]))
    H = (rng.standard_normal((n_bands, n_tones)) + 1j * rng.standard_normal((n_bands, n_tones))) / np.sqrt(2)
    G = draw_shadowing(shadowing_std_db, seed)
    return FreqResponse(H * G, G)


ModelLike = Union[ChannelModelParams, str, Callable[[int, float], FreqResponse]]


def link_response(model: Union[ChannelModelParams, str], seed: int, n_tones: int = N_TONES,
                  max_taps: int = LINK_MAX_TAPS, ray_phase: str = "uniform") -> FreqResponse:
    """Per-band response used by the link and capacity studies.

    Multipath models are truncated to ``max_taps`` samples (renormalized) so
    the cyclic prefix covers the channel; ``"RAYLEIGH_LN"`` selects the i.i.d.
    reference channel.
    """
    if isinstance(model, str):
        if model.upper() in ("RAYLEIGH_LN", "RAYLEIGH+LN"):
            return rayleigh_ln_response(seed, N_BANDS, n_tones)
        model = get_model(model)
    return to_freq_response(generate_realization(model, seed, max_taps=max_taps, ray_phase=ray_phase), n_tones)


def _response_source(model: ModelLike, n_bands: int, n_tones: int,
                     ray_phase: str = "uniform") -> Callable[[int, float], np.ndarray]:
    """Map a model spec to ``(seed, sample_rate) -> normalized flat response``."""
    if isinstance(model, str):
        if model.upper() in ("RAYLEIGH_LN", "RAYLEIGH+LN"):
            return lambda seed, fs: rayleigh_ln_response(seed, n_bands, n_tones).normalized.reshape(-1)
        model = get_model(model)
    if isinstance(model, ChannelModelParams):
        params = model

        def source(seed: int, fs: float) -> np.ndarray:
            ch = generate_realization(params, seed, n_bands, fs, ray_phase=ray_phase)
            return _folded_dft(ch.taps, n_tones).reshape(-1)

        return source
    return lambda seed, fs: np.asarray(model(seed, fs).normalized).reshape(-1)


def normalized_responses(model: ModelLike, n_real: int, seed: int = 0,
                         sample_rate_mhz: float = SAMPLE_RATE_MHZ,
                         n_tones: int = N_TONES, n_bands: int = N_BANDS,
                         ray_phase: str = "uniform") -> np.ndarray:
    """Stack of shadowing-free responses H/G, shape (n_real, n_bands * n_tones)."""
    if n_real < 1:
        raise ValueError("n_real must be >= 1")
    source = _response_source(model, n_bands, n_tones, ray_phase)
    seeds = np.random.SeedSequence(seed).generate_state(n_real, dtype=np.uint64)
    return np.stack([source(int(s), sample_rate_mhz) for s in seeds])


@dataclass
class MagnitudeHistogram:
    edges: np.ndarray
    density: np.ndarray
    ks_distance: float
    rayleigh_scale: float
    n_samples: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def rayleigh_pdf(self) -> np.ndarray:
        return stats.rayleigh(scale=self.rayleigh_scale).pdf(self.centers)


def magnitude_statistics(magnitudes: np.ndarray, bins: int = 100) -> MagnitudeHistogram:
    m = np.asarray(magnitudes, dtype=float).ravel()
    scale = float(np.sqrt(np.mean(m ** 2) / 2.0))
    ks = float(stats.kstest(m, stats.rayleigh(scale=scale).cdf).statistic) if scale > 0 else 1.0
    density, edges = np.histogram(m, bins=bins, density=True)
    return MagnitudeHistogram(edges, density, ks, scale, m.size)


def marginal_magnitude_histogram(model: ModelLike, n_real: int, bins: int = 100, seed: int = 0,
                                 tones: Sequence[int] | None = None,
                                 ray_phase: str = "uniform") -> MagnitudeHistogram:
    """Empirical pdf of |H/G| pooled over tones and realizations, with the
    Kolmogorov-Smirnov distance to a Rayleigh law of equal second moment."""
    Hn = normalized_responses(model, n_real, seed, ray_phase=ray_phase).reshape(n_real, N_BANDS, N_TONES)
    if tones is not None:
        Hn = Hn[:, :, np.asarray(tones)]
    return magnitude_statistics(np.abs(Hn), bins)


@dataclass
class CorrelationSpectrum:
    eigenvalues: np.ndarray  # descending
    bandwidth_MHz: float
    model_id: str
    num_realizations: int
    trace: float = field(default=0.0)

    def count_above(self, fraction: float = 0.01) -> int:
        """Number of eigenvalues >= fraction * largest."""
        return int(np.sum(self.eigenvalues >= fraction * self.eigenvalues[0]))


def correlation_matrix(responses: np.ndarray) -> np.ndarray:
    """Sample correlation E{h h^H} over rows of ``responses``."""
    return responses.T @ responses.conj() / responses.shape[0]


def correlation_eigenvalues(model: ModelLike, bandwidth_MHz: float, n_real: int, seed: int = 0,
                            n_tones: int = N_TONES, n_bands: int = N_BANDS,
                            ray_phase: str = "uniform") -> CorrelationSpectrum:
    """Ordered eigenvalues of the (n_bands*n_tones)^2 correlation matrix of H/G
    when the bands jointly span ``bandwidth_MHz``."""
    if not bandwidth_MHz > 0:
        raise ValueError("bandwidth_MHz must be > 0")
    if n_real < 2:
        raise ValueError("n_real must be >= 2")
    fs = bandwidth_MHz / n_bands
    Hn = normalized_responses(model, n_real, seed, fs, n_tones, n_bands, ray_phase)
    R = correlation_matrix(Hn)
    ev = np.linalg.eigvalsh(R)[::-1].copy()
    ev[np.abs(ev) < 1e-12] = 0.0
    model_id = getattr(model, "model_id", model if isinstance(model, str) else "custom")
    return CorrelationSpectrum(ev, float(bandwidth_MHz), str(model_id), n_real, float(np.real(np.trace(R))))


def dump_realization(ch: ChannelRealization, path: Union[str, Path]) -> None:
    doc = {
        "format": DUMP_FORMAT,
        "version": DUMP_VERSION,
        "model_id": ch.model_id,
        "rng_seed": ch.rng_seed,
        "sample_rate_mhz": ch.sample_rate_mhz,
        "shadowing_G": ch.shadowing_G,
        "bands_re": ch.taps.real.tolist(),
        "bands_im": ch.taps.imag.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_realization(path: Union[str, Path]) -> ChannelRealization:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != DUMP_FORMAT or doc.get("version") != DUMP_VERSION:
        raise ValueError(f"unsupported realization dump: {doc.get('format')} v{doc.get('version')}")
    taps = np.array(doc["bands_re"], dtype=float) + 1j * np.array(doc["bands_im"], dtype=float)
    return ChannelRealization(taps, float(doc["shadowing_G"]),
                              doc["model_id"], int(doc["rng_seed"]), float(doc["sample_rate_mhz"]))
