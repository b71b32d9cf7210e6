"""Instantaneous BICM capacity and cutoff rate of OFDM channel realizations.

Both measures decompose over tones. For a tone carrying ``m`` bits at SNR
``s`` (``|H|^2 / noise_var`` under perfect CSI) we tabulate

* ``c_m(s) = m - sum_l E[log2(sum_X p(Y|X) / sum_{X in X_b^l} p(Y|X))]``
* ``b_m(s) = (1/m) sum_l E[sqrt(sum_{X in X_bbar^l} p(Y|X) / sum_{X in X_b^l} p(Y|X))]``

with 2-D Gauss-Hermite quadrature over the noise. A realization with per-tone
bits ``m_i`` averaging ``m_bar`` then has ``C = mean_i c_{m_i}(s_i)`` and
``R0 = m_bar (1 - log2(1 + mean_i b_{m_i}(s_i)))``; tones with zero bits add
nothing to either sum. Under LSE channel knowledge the likelihood is Gaussian
with mean ``X H_est mu^2`` and variance ``noise_var (eta mu^2 + 1)``, so the
same tables apply at the effective SNR ``|H_est|^2 mu^4 / (noise_var (eta mu^2 + 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numba
import numpy as np
from scipy.special import logsumexp

from .chanest import PERFECT, CsiModel
from .modem import constellation

SNR_GRID_DB = np.round(np.arange(-20.0, 50.0 + 1e-9, 0.1), 1)
GH_NODES = 64
TABLE_FILE = "data/bicm_tables.npz"
_LN2 = math.log(2.0)


# ---------------------------------------------------------------- quadrature
def _gh_noise(n_nodes: int):
    """Nodes/weights for E over N ~ CN(0, 1)."""
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    nodes = (x[:, None] + 1j * x[None, :]).ravel()
    weights = (w[:, None] * w[None, :]).ravel() / np.pi
    return nodes, weights


@numba.njit(cache=True)
def _tone_terms_kernel(pts, bits, snr, noise, weights):
    n_pts, m = bits.shape
    n_nodes = noise.size
    c_out = np.empty(snr.size)
    b_out = np.empty(snr.size)
    e = np.empty(n_pts)
    for k in range(snr.size):
        amp = np.sqrt(snr[k])
        cap_loss = 0.0
        bhat = 0.0
        for x in range(n_pts):
            for q in range(n_nodes):
                top = -np.inf
                for xp in range(n_pts):
                    d = amp * (pts[x] - pts[xp]) + noise[q]
                    e[xp] = -(d.real * d.real + d.imag * d.imag)
                    if e[xp] > top:
                        top = e[xp]
                total = 0.0
                for xp in range(n_pts):
                    e[xp] = np.exp(e[xp] - top)
                    total += e[xp]
                w = weights[q]
                for ell in range(m):
                    own = 0.0
                    for xp in range(n_pts):
                        if bits[xp, ell] == bits[x, ell]:
                            own += e[xp]
                    # own >= e[x] > 0 always
                    cap_loss += w * np.log(total / own)
                    bhat += w * np.sqrt((total - own) / own)
        c_out[k] = m - cap_loss / (np.log(2.0) * n_pts)
        b_out[k] = bhat / (m * n_pts)
    return c_out, b_out


def _tone_terms(m: int, snr, noise, weights):
    """Quadrature of c_m and b_m at each SNR in ``snr`` (linear)."""
    const = constellation(m)
    c, b = _tone_terms_kernel(const.points.astype(np.complex128), const.bits.astype(np.int64),
                              np.asarray(snr, dtype=np.float64), noise, weights)
    return np.clip(c, 0.0, m), np.clip(b, 0.0, 1.0)


def compute_tone_tables(snr_db=SNR_GRID_DB, n_nodes: int = GH_NODES, ms=range(1, 7)):
    """Build ``{"snr_db", "c_<m>", "b_<m>"}`` arrays by quadrature."""
    noise, weights = _gh_noise(n_nodes)
    snr = 10.0 ** (np.asarray(snr_db, dtype=float) / 10)
    out = {"snr_db": np.asarray(snr_db, dtype=float), "gh_nodes": np.array(n_nodes)}
    for m in ms:
        out[f"c_{m}"], out[f"b_{m}"] = _tone_terms(m, snr, noise, weights)
    return out


def write_tables(path: str | Path, **kwargs) -> None:
    np.savez_compressed(path, **compute_tone_tables(**kwargs))


@lru_cache(maxsize=None)
def _tables():
    with resources.files("mbofdm").joinpath(TABLE_FILE).open("rb") as fh:
        data = np.load(fh)
        return {k: data[k] for k in data.files}


def tone_capacity(snr, m: int) -> np.ndarray:
    """Per-tone BICM capacity ``c_m`` (bits) at linear SNR."""
    return _lookup(np.asarray(snr, dtype=float), m, "c")


def tone_bhattacharyya(snr, m: int) -> np.ndarray:
    """Per-tone label-averaged Bhattacharyya parameter ``b_m``."""
    return _lookup(np.asarray(snr, dtype=float), m, "b")


def _lookup(snr, m, kind):
    tab = _tables()
    grid = tab["snr_db"]
    vals = tab[f"{kind}_{m}"]
    lo = 10 ** (grid[0] / 10)
    with np.errstate(divide="ignore"):
        snr_db = 10 * np.log10(np.maximum(snr, 0.0))
    out = np.interp(snr_db, grid, vals)
    # below the grid both quantities are linear in SNR
    low = snr < lo
    if np.any(low):
        frac = snr[low] / lo
        out[low] = vals[0] * frac if kind == "c" else 1.0 - (1.0 - vals[0]) * frac
    return out


# ---------------------------------------------------------- per-realization
def tone_snr(H, snr, csi: CsiModel = PERFECT, shadowing_G: float = 1.0, h_est=None, rng=None) -> np.ndarray:
    """Effective per-tone SNR seen by the demapper.

    ``snr`` is the transmit Es/N0 (linear; noise variance ``1/snr``). Under LSE
    knowledge ``h_est`` defaults to ``H`` plus an i.i.d. estimation error.
    """
    H = np.asarray(H)
    noise_var = 1.0 / snr
    if csi.kind == "perfect":
        return np.abs(H) ** 2 / noise_var
    if h_est is None:
        rng = np.random.default_rng(rng)
        s = np.sqrt(csi.eta * noise_var / 2)
        h_est = H + s * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))
    a, v = csi.likelihood_params(h_est, noise_var, shadowing_G)
    return np.abs(a) ** 2 / v


def _bits_per_tone(bits, shape):
    bits = np.asarray(bits, dtype=np.int64)
    return np.broadcast_to(bits, shape)


def _mc_terms(snr_i, m, rng, n_draws):
    """Monte Carlo c_m and b_m for each tone SNR (paired noise per call)."""
    const = constellation(m)
    pts, bits = const.points, const.bits.astype(bool)
    c = np.empty(snr_i.size)
    b = np.empty(snr_i.size)
    x_idx = rng.integers(0, pts.size, (snr_i.size, n_draws))
    n = (rng.standard_normal((snr_i.size, n_draws)) + 1j * rng.standard_normal((snr_i.size, n_draws))) / np.sqrt(2)
    for t, s in enumerate(snr_i):
        amp = np.sqrt(s)
        y = amp * pts[x_idx[t]] + n[t]
        metric = -np.abs(y[:, None] - amp * pts[None, :]) ** 2
        lse_all = logsumexp(metric, axis=-1)
        loss = 0.0
        bh = 0.0
        for ell in range(m):
            own = bits[x_idx[t], ell][:, None] == bits[None, :, ell]
            lse_b = logsumexp(np.where(own, metric, -np.inf), axis=-1)
            lse_bbar = logsumexp(np.where(own, -np.inf, metric), axis=-1)
            loss += np.mean(lse_all - lse_b) / _LN2
            bh += np.mean(np.exp(0.5 * (lse_bbar - lse_b)))
        c[t] = m - loss
        b[t] = bh / m
    return c, b


def _tone_sums(snr_i, bits, method, rng, n_draws):
    snr_i = np.ravel(snr_i)
    bits = np.ravel(bits)
    c = np.zeros(snr_i.size)
    b = np.zeros(snr_i.size)
    for m in np.unique(bits):
        if m == 0:
            continue
        sel = bits == m
        if method == "quadrature":
            c[sel] = tone_capacity(snr_i[sel], int(m))
            b[sel] = tone_bhattacharyya(snr_i[sel], int(m))
        elif method == "mc":
            c[sel], b[sel] = _mc_terms(snr_i[sel], int(m), rng, n_draws)
        else:
            raise ValueError(f"unknown method {method!r}")
    return c, b


def capacity_and_cutoff(H, snr, bits=2, csi: CsiModel = PERFECT, shadowing_G: float = 1.0, h_est=None,
                        method: str = "quadrature", rng=None, n_draws: int = 10_000):
    """(C, R0) in bits per complex dimension for one realization.

    ``bits`` is a scalar (uniform constellation) or per-tone loading matching
    ``H``'s shape. ``m_bar`` is the mean of ``bits``.
    """
    rng = np.random.default_rng(rng)
    s = tone_snr(H, snr, csi, shadowing_G, h_est, rng)
    m_i = _bits_per_tone(bits, s.shape)
    c, b = _tone_sums(s, m_i, method, rng, n_draws)
    m_bar = float(np.mean(m_i))
    cap = float(np.mean(c))
    cut = m_bar * (1.0 - math.log2(1.0 + float(np.mean(b))))
    return cap, cut


def bicm_capacity(H, snr, bits=2, csi: CsiModel = PERFECT, **kw) -> float:
    return capacity_and_cutoff(H, snr, bits, csi, **kw)[0]


def bicm_cutoff(H, snr, bits=2, csi: CsiModel = PERFECT, **kw) -> float:
    return capacity_and_cutoff(H, snr, bits, csi, **kw)[1]


# ------------------------------------------------------------------ outage
def outage_value(samples, quantile: float = 0.10, higher_is_better: bool = True) -> float:
    """Worst value among the best ``1 - quantile`` fraction of samples.

    For 100 samples and ``quantile=0.1`` this is the 90th order statistic
    counted from the best end.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if higher_is_better:
        x = x[::-1]
    k = math.ceil((1.0 - quantile) * x.size - 1e-9)
    return float(x[max(k, 1) - 1])


@dataclass
class OutageCurve:
    """Per-realization samples (n_real, n_snr) and their outage values."""

    snr_db: np.ndarray
    samples: np.ndarray
    quantile: float = 0.10
    measure: str = "capacity"
    meta: dict = field(default_factory=dict)

    @property
    def n_real(self) -> int:
        return self.samples.shape[0]

    @property
    def values(self) -> np.ndarray:
        return np.array([outage_value(self.samples[:, k], self.quantile) for k in range(self.snr_db.size)])

    def outage_probability(self, rate: float) -> np.ndarray:
        return np.mean(self.samples < rate, axis=0)

    def snr_for_rate(self, rate: float) -> float:
        """SNR (dB) at which the outage value reaches ``rate``, linearly interpolated."""
        v = np.maximum.accumulate(self.values)
        if rate > v[-1] or rate < v[0]:
            return float("nan")
        i = int(np.searchsorted(v, rate))
        if i == 0 or v[i] == rate:
            return float(self.snr_db[i])
        x0, x1, y0, y1 = self.snr_db[i - 1], self.snr_db[i], v[i - 1], v[i]
        return float(x0 + (rate - y0) * (x1 - x0) / (y1 - y0))
