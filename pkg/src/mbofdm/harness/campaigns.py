"""Monte Carlo campaigns and their result files.

Every random quantity is keyed by the master seed and the realization index
(plus SNR point and unit counter for noise), never by the system or worker,
so systems in one campaign are paired and results do not depend on the
worker count. Result files hold no timestamps; rerunning a config with the
same seed rewrites them byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from .. import __version__
from ..bitloading import load_bands
from ..fec.modes import get_mode
from ..infotheory import OutageCurve, capacity_and_cutoff, outage_value
from ..modem import data_tone_bins
from ..uwb_channel import (
    correlation_eigenvalues,
    link_response,
    marginal_magnitude_histogram,
)
from .config import SCHEMA_VERSION, ConfigError, ExperimentConfig, SystemConfig
from .link import simulate_unit

_RNG_NOISE, _RNG_CSI = 1, 2


class ResultError(ValueError):
    """A result file is missing, malformed or of the wrong kind."""


# ------------------------------------------------------------------- seeding
def realization_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


def _snr_key(snr_db: float) -> int:
    return int(round((snr_db + 1000.0) * 1000))


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _run_tasks(fn: Callable, tasks: Sequence, workers: int) -> list:
    """Map ``fn`` over ``tasks`` preserving order, in-process or on a pool."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _plans(system: SystemConfig, H_data: np.ndarray, snr: float, code_family: str | None):
    """Per-band (3, 100) loading at linear Es/N0 ``snr``; ``None`` for uniform QPSK."""
    ld = system.loading
    if ld.algorithm == "none":
        return None
    plans = load_bands(np.abs(H_data) ** 2 * snr, ld.algorithm, ld.gap_for(code_family),
                       ld.cluster_size, ld.target_ber)
    return np.stack([p.bits for p in plans])


# ------------------------------------------------------------- BER outage
@dataclass
class BerPoint:
    snr_db: float
    n_bits: int
    n_errors: int

    @property
    def ber(self) -> float:
        return self.n_errors / self.n_bits if self.n_bits else float("nan")

    def wilson(self, confidence: float = 0.95) -> tuple[float, float]:
        ci = binomtest(self.n_errors, self.n_bits).proportion_ci(confidence, method="wilson")
        return float(ci.low), float(ci.high)


@dataclass
class RealizationBer:
    realization: int
    required_snr_db: float
    status: str  # "ok", "not_reached" or "error: ..."
    point: BerPoint | None
    n_points: int


def ber_point(cfg: ExperimentConfig, system: SystemConfig, r: int, snr_db: float) -> BerPoint:
    """BER at one Es/N0 until ``min_errors`` errors or ``max_bits`` bits.

    Noiseless runs are deterministic, so one unit settles them.
    """
    mode = get_mode(system.mode)
    resp = link_response(system.channel_model, realization_seed(cfg.seed, r), ray_phase=cfg.ray_phase)
    snr = 10 ** (snr_db / 10)
    plans = _plans(system, resp.H[:, data_tone_bins()], snr, mode.code_family)
    csi = system.csi.model()
    bits = errors = unit = 0
    while errors < cfg.min_errors and bits < cfg.max_bits:
        rng = _rng(cfg.seed, r, _RNG_NOISE, _snr_key(snr_db), unit)
        out = simulate_unit(mode, resp.H, snr, rng, plans, csi, resp.G, system.noiseless)
        bits += out.n_bits
        errors += out.n_errors
        unit += 1
        if system.noiseless:
            break
    return BerPoint(float(snr_db), bits, errors)


def required_snr(cfg: ExperimentConfig, system: SystemConfig, r: int,
                 point_fn: Callable[[float], BerPoint] | None = None) -> RealizationBer:
    """Coarse sweep over the grid, then bisection between the last failing and
    first passing point. Returns the lowest tested Es/N0 meeting the target."""
    point_fn = point_fn or partial(ber_point, cfg, system, r)
    n = 0

    def passes(s):
        nonlocal n
        n += 1
        p = point_fn(s)
        return p.n_bits > 0 and p.ber <= cfg.target_ber, p

    last_fail = None
    for s in cfg.snr_grid:
        ok, p = passes(float(s))
        if ok:
            break
        last_fail = float(s)
    else:
        return RealizationBer(r, float("nan"), "not_reached", None, n)
    hi, best = float(s), p
    if last_fail is not None:
        lo = last_fail
        for _ in range(cfg.bisection_steps):
            mid = 0.5 * (lo + hi)
            ok, p = passes(mid)
            if ok:
                hi, best = mid, p
            else:
                lo = mid
    return RealizationBer(r, hi, "ok", best, n)


def _ber_task(cfg: ExperimentConfig, task: tuple[int, int]) -> RealizationBer:
    i, r = task
    system = cfg.resolved_systems()[i]
    try:
        return required_snr(cfg, system, r)
    except Exception as exc:  # recorded per realization, not fatal
        return RealizationBer(r, float("nan"), f"error: {type(exc).__name__}: {exc}", None, 0)


@dataclass
class OutageBerResult:
    config: ExperimentConfig
    per_system: dict[str, list[RealizationBer]]

    def required(self, system: str) -> np.ndarray:
        return np.array([x.required_snr_db for x in self.per_system[system]])

    def completed(self, system: str) -> np.ndarray:
        v = self.required(system)
        return v[np.isfinite(v)]

    def outage_snr_db(self, system: str) -> float:
        """Worst required Es/N0 among the best ``1 - quantile`` of completed realizations."""
        done = self.completed(system)
        if done.size == 0:
            return float("nan")
        return outage_value(done, self.config.outage_quantile, higher_is_better=False)

    @property
    def complete(self) -> bool:
        return all(x.status == "ok" for runs in self.per_system.values() for x in runs)

    def summary(self) -> dict[str, Any]:
        return {
            name: {
                "outage_snr_db": _num(self.outage_snr_db(name)),
                "n_completed": int(self.completed(name).size),
                "n_realizations": len(runs),
            }
            for name, runs in self.per_system.items()
        }


def run_ber_outage(cfg: ExperimentConfig, workers: int = 1) -> OutageBerResult:
    if cfg.kind != "ber_outage":
        raise ConfigError(f"expected a ber_outage config, got {cfg.kind}")
    systems = cfg.resolved_systems()
    tasks = [(i, r) for i in range(len(systems)) for r in range(cfg.n_realizations)]
    out = _run_tasks(partial(_ber_task, cfg), tasks, workers)
    per = {s.name: out[i * cfg.n_realizations:(i + 1) * cfg.n_realizations] for i, s in enumerate(systems)}
    return OutageBerResult(cfg, per)


# ------------------------------------------------------- capacity outage
def capacity_samples(cfg: ExperimentConfig, system: SystemConfig, r: int) -> tuple[np.ndarray, np.ndarray]:
    """C and R0 of realization ``r`` at every grid SNR, shape (n_snr,) each."""
    resp = link_response(system.channel_model, realization_seed(cfg.seed, r), ray_phase=cfg.ray_phase)
    H = resp.H[:, data_tone_bins()]
    csi = system.csi.model()
    family = get_mode(system.mode).code_family if system.mode else None
    cap = np.empty(len(cfg.snr_grid))
    cut = np.empty(len(cfg.snr_grid))
    for k, snr_db in enumerate(cfg.snr_grid):
        snr = 10 ** (snr_db / 10)
        plans = _plans(system, H, snr, family)
        bits = 2 if plans is None else plans
        rng = _rng(cfg.seed, r, _RNG_CSI, _snr_key(snr_db))
        cap[k], cut[k] = capacity_and_cutoff(H, snr, bits, csi, resp.G, rng=rng)
    return cap, cut


def _capacity_task(cfg: ExperimentConfig, task: tuple[int, int]):
    i, r = task
    return capacity_samples(cfg, cfg.resolved_systems()[i], r)


@dataclass
class CapacityOutageResult:
    config: ExperimentConfig
    capacity: dict[str, OutageCurve]
    cutoff: dict[str, OutageCurve]

    @property
    def complete(self) -> bool:
        return True

    def summary(self) -> dict[str, Any]:
        out = {}
        for name in self.capacity:
            c, r0 = self.capacity[name], self.cutoff[name]
            out[name] = {
                "capacity_outage": [_num(v) for v in c.values],
                "cutoff_outage": [_num(v) for v in r0.values],
                "snr_for_rate_capacity": {str(x): _num(c.snr_for_rate(x)) for x in self.config.rates},
                "snr_for_rate_cutoff": {str(x): _num(r0.snr_for_rate(x)) for x in self.config.rates},
            }
        return out


def run_capacity_outage(cfg: ExperimentConfig, workers: int = 1) -> CapacityOutageResult:
    if cfg.kind not in ("capacity_outage", "loading_study"):
        raise ConfigError(f"expected a capacity_outage or loading_study config, got {cfg.kind}")
    systems = cfg.resolved_systems()
    n = cfg.n_realizations
    tasks = [(i, r) for i in range(len(systems)) for r in range(n)]
    out = _run_tasks(partial(_capacity_task, cfg), tasks, workers)
    grid = np.asarray(cfg.snr_grid, dtype=float)
    cap, cut = {}, {}
    for i, s in enumerate(systems):
        rows = out[i * n:(i + 1) * n]
        meta = {"system": s.name, "channel_model": s.channel_model}
        cap[s.name] = OutageCurve(grid, np.stack([a for a, _ in rows]), cfg.outage_quantile, "capacity", meta)
        cut[s.name] = OutageCurve(grid, np.stack([b for _, b in rows]), cfg.outage_quantile, "cutoff", meta)
    return CapacityOutageResult(cfg, cap, cut)


run_loading_study = run_capacity_outage


# ------------------------------------------------------- channel statistics
@dataclass
class ChannelStatsResult:
    config: ExperimentConfig
    histograms: dict[str, dict[str, Any]] = field(default_factory=dict)  # model -> edges, density, ks, scale
    eigenvalues: dict[tuple[str, float], np.ndarray] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return True

    def strong_count(self, model: str, bandwidth: float, fraction: float = 0.01) -> int:
        ev = self.eigenvalues[(model, float(bandwidth))]
        return int(np.sum(ev >= fraction * ev[0]))

    def summary(self) -> dict[str, Any]:
        return {
            "ks_distance": {m: _num(h["ks"]) for m, h in self.histograms.items()},
            "strong_eigenvalues": {f"{m}@{bw:g}": self.strong_count(m, bw) for m, bw in self.eigenvalues},
            "largest_eigenvalue": {f"{m}@{bw:g}": _num(ev[0]) for (m, bw), ev in self.eigenvalues.items()},
        }


def _stats_task(cfg: ExperimentConfig, task: tuple[str, str, float]):
    what, model, bw = task
    if what == "hist":
        h = marginal_magnitude_histogram(model, cfg.histogram_realizations, cfg.histogram_bins,
                                         seed=cfg.seed, ray_phase=cfg.ray_phase)
        return {"edges": h.edges, "density": h.density, "ks": h.ks_distance, "scale": h.rayleigh_scale}
    spec = correlation_eigenvalues(model, bw, cfg.eigen_realizations, seed=cfg.seed, ray_phase=cfg.ray_phase)
    return spec.eigenvalues


def run_channel_stats(cfg: ExperimentConfig, workers: int = 1) -> ChannelStatsResult:
    if cfg.kind != "channel_stats":
        raise ConfigError(f"expected a channel_stats config, got {cfg.kind}")
    tasks = [("hist", m, 0.0) for m in cfg.channel_models if cfg.histogram_realizations > 0]
    tasks += [("eig", m, float(bw)) for m in cfg.channel_models for bw in cfg.bandwidths_mhz
              if cfg.eigen_realizations > 1]
    out = _run_tasks(partial(_stats_task, cfg), tasks, workers)
    res = ChannelStatsResult(cfg)
    for (what, model, bw), value in zip(tasks, out):
        if what == "hist":
            res.histograms[model] = value
        else:
            res.eigenvalues[(model, bw)] = value
    return res


RUNNERS = {
    "ber_outage": run_ber_outage,
    "capacity_outage": run_capacity_outage,
    "loading_study": run_loading_study,
    "channel_stats": run_channel_stats,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1):
    return RUNNERS[cfg.kind](cfg, workers)


# -------------------------------------------------------------- persistence
def _num(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path: Path) -> list[dict[str, str]]:
    if not path.exists():
        raise ResultError(f"missing result file {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _sidecar(result, files: dict[str, dict[str, str]]) -> dict[str, Any]:
    cfg = result.config
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "kind": cfg.kind,
        "name": cfg.name,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "complete": result.complete,
        "files": files,
        "summary": result.summary(),
    }


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


BER_COLUMNS = {
    "system": "system name",
    "realization": "channel realization index",
    "required_snr_db": "lowest tested Es/N0 (dB) meeting the target BER; nan if never reached",
    "status": "ok, not_reached or error message",
    "n_bits": "info bits simulated at the accepted point",
    "n_errors": "bit errors at the accepted point",
    "ber": "BER estimate at the accepted point",
    "ber_ci_low": "95% Wilson interval, lower end",
    "ber_ci_high": "95% Wilson interval, upper end",
    "n_points": "SNR points evaluated by the search",
}
CAPACITY_COLUMNS = {
    "system": "system name",
    "realization": "channel realization index",
    "snr_db": "Es/N0 (dB)",
    "capacity": "BICM capacity (bit per complex dimension)",
    "cutoff": "BICM cutoff rate (bit per complex dimension)",
}
HIST_COLUMNS = {
    "model": "channel model",
    "bin_low": "lower bin edge of |H/G|",
    "bin_high": "upper bin edge of |H/G|",
    "density": "empirical pdf",
    "rayleigh_pdf": "Rayleigh pdf with matched second moment at the bin centre",
}
EIG_COLUMNS = {
    "model": "channel model",
    "bandwidth_mhz": "total bandwidth spanned by the 3 bands",
    "rank": "eigenvalue index, 1 = largest",
    "eigenvalue": "eigenvalue of the normalized tone correlation matrix",
}


def write_result(result, out_dir: str | Path) -> list[Path]:
    """Write CSV data plus a JSON sidecar named after the config; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.config.name
    written = []
    if isinstance(result, OutageBerResult):
        rows = []
        for sys_name, runs in result.per_system.items():
            for x in runs:
                p = x.point
                lo, hi = p.wilson() if p and p.n_bits else (float("nan"), float("nan"))
                rows.append([sys_name, x.realization, float(x.required_snr_db), x.status,
                             p.n_bits if p else 0, p.n_errors if p else 0,
                             float(p.ber) if p else float("nan"), lo, hi, x.n_points])
        path = out / f"{name}.csv"
        _write_csv(path, list(BER_COLUMNS), rows)
        files = {path.name: BER_COLUMNS}
        written.append(path)
    elif isinstance(result, CapacityOutageResult):
        rows = []
        for sys_name, curve in result.capacity.items():
            cut = result.cutoff[sys_name].samples
            for r in range(curve.n_real):
                for k, s in enumerate(curve.snr_db):
                    rows.append([sys_name, r, float(s), float(curve.samples[r, k]), float(cut[r, k])])
        path = out / f"{name}.csv"
        _write_csv(path, list(CAPACITY_COLUMNS), rows)
        files = {path.name: CAPACITY_COLUMNS}
        written.append(path)
    elif isinstance(result, ChannelStatsResult):
        hist_rows = []
        for model, h in result.histograms.items():
            e = h["edges"]
            centers = 0.5 * (e[1:] + e[:-1])
            pdf = centers / h["scale"] ** 2 * np.exp(-centers ** 2 / (2 * h["scale"] ** 2))
            hist_rows += [[model, float(e[i]), float(e[i + 1]), float(h["density"][i]), float(pdf[i])]
                          for i in range(h["density"].size)]
        eig_rows = [[m, float(bw), i + 1, float(v)] for (m, bw), ev in result.eigenvalues.items()
                    for i, v in enumerate(ev)]
        hp, ep = out / f"{name}_hist.csv", out / f"{name}_eig.csv"
        _write_csv(hp, list(HIST_COLUMNS), hist_rows)
        _write_csv(ep, list(EIG_COLUMNS), eig_rows)
        files = {hp.name: HIST_COLUMNS, ep.name: EIG_COLUMNS}
        written += [hp, ep]
        side = _sidecar(result, files)
        side["histogram_meta"] = {m: {"ks": h["ks"], "rayleigh_scale": h["scale"]}
                                  for m, h in result.histograms.items()}
        path = out / f"{name}.json"
        _dump_json(path, side)
        return written + [path]
    else:
        raise TypeError(f"cannot persist {type(result).__name__}")
    path = out / f"{name}.json"
    _dump_json(path, _sidecar(result, files))
    return written + [path]


def load_result(sidecar: str | Path):
    """Rebuild a result object from its JSON sidecar and CSV files."""
    sidecar = Path(sidecar)
    if not sidecar.exists():
        raise ResultError(f"missing result file {sidecar}")
    doc = json.loads(sidecar.read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ResultError(f"{sidecar}: unsupported schema version {doc.get('schema_version')}")
    cfg = ExperimentConfig.from_dict(doc["config"])
    root = sidecar.parent
    if cfg.kind == "ber_outage":
        per: dict[str, list[RealizationBer]] = {s.name: [] for s in cfg.resolved_systems()}
        for row in _read_csv(root / f"{cfg.name}.csv"):
            nb = int(row["n_bits"])
            point = BerPoint(float(row["required_snr_db"]), nb, int(row["n_errors"])) if nb else None
            per[row["system"]].append(RealizationBer(int(row["realization"]), float(row["required_snr_db"]),
                                                     row["status"], point, int(row["n_points"])))
        return OutageBerResult(cfg, per)
    if cfg.kind in ("capacity_outage", "loading_study"):
        grid = np.asarray(cfg.snr_grid, dtype=float)
        rows = _read_csv(root / f"{cfg.name}.csv")
        cap, cut = {}, {}
        for s in cfg.resolved_systems():
            sel = [r for r in rows if r["system"] == s.name]
            c = np.array([float(r["capacity"]) for r in sel]).reshape(-1, grid.size)
            b = np.array([float(r["cutoff"]) for r in sel]).reshape(-1, grid.size)
            meta = {"system": s.name, "channel_model": s.channel_model}
            cap[s.name] = OutageCurve(grid, c, cfg.outage_quantile, "capacity", meta)
            cut[s.name] = OutageCurve(grid, b, cfg.outage_quantile, "cutoff", meta)
        return CapacityOutageResult(cfg, cap, cut)
    res = ChannelStatsResult(cfg)
    hist = _read_csv(root / f"{cfg.name}_hist.csv")
    for model, meta in doc.get("histogram_meta", {}).items():
        sel = [r for r in hist if r["model"] == model]
        edges = np.array([float(r["bin_low"]) for r in sel] + [float(sel[-1]["bin_high"])])
        res.histograms[model] = {"edges": edges, "density": np.array([float(r["density"]) for r in sel]),
                                 "ks": meta["ks"], "scale": meta["rayleigh_scale"]}
    for r in _read_csv(root / f"{cfg.name}_eig.csv"):
        key = (r["model"], float(r["bandwidth_mhz"]))
        res.eigenvalues.setdefault(key, []).append(float(r["eigenvalue"]))
    res.eigenvalues = {k: np.array(v) for k, v in res.eigenvalues.items()}
    return res
