"""Figure and table data: CSV files with a JSON sidecar documenting columns.

``emit_figure_data`` takes a result set, a mapping from role to result:

``channel_stats``  :class:`ChannelStatsResult` (fig2, fig3)
``capacity``       :class:`CapacityOutageResult` (fig4, fig5, lines of fig9, fig10)
``loading``        :class:`CapacityOutageResult` of a loading study (lines of fig7, fig8)
``ber``            :class:`OutageBerResult` (markers of fig7 to fig10, table1)

fig6 is analytic and needs no results. Nothing is written unless every
required input is present.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..chanest import estimation_loss_db
from ..fec.modes import get_mode
from .campaigns import _fmt, _num
from .config import SCHEMA_VERSION


class FigureDataError(ValueError):
    """Required inputs for a figure are missing."""


def range_table(gains_db, path_loss_exponent: float = 2.0) -> np.ndarray:
    """Percentage range increase for power gains under a pure path-loss law."""
    if not path_loss_exponent > 0:
        raise ValueError("path loss exponent must be > 0")
    g = np.asarray(gains_db, dtype=float)
    return 100.0 * (10 ** (g / (10.0 * path_loss_exponent)) - 1.0)


def loss_curves(etas: Sequence[float], snr_db: Sequence[float]) -> list[tuple[float, float, float]]:
    rows = []
    for eta in etas:
        loss = estimation_loss_db(10 ** (np.asarray(snr_db, dtype=float) / 10), eta)
        rows += [(float(eta), float(s), float(v)) for s, v in zip(snr_db, loss)]
    return rows


def _write(out: Path, stem: str, tables: dict[str, tuple[dict[str, str], list]],
           figure_id: str, inputs: dict[str, str], params: dict[str, Any]) -> list[Path]:
    # "_data" keeps figure files apart from campaign results of the same name
    stem = f"{stem}_data"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    files = {}
    for suffix, (columns, rows) in tables.items():
        path = out / f"{stem}{suffix}.csv"
        with path.open("w") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        files[path.name] = columns
        paths.append(path)
    side = {
        "schema_version": SCHEMA_VERSION,
        "figure": figure_id,
        "files": files,
        "inputs": inputs,
        "params": params,
    }
    path = out / f"{stem}.json"
    path.write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")
    return paths + [path]


def _require(results: Mapping[str, Any], figure_id: str, need: Sequence[str], any_of: Sequence[str] = ()):
    missing = [k for k in need if results.get(k) is None]
    if any_of and all(results.get(k) is None for k in any_of):
        missing.append(" or ".join(any_of))
    if missing:
        raise FigureDataError(f"{figure_id}: missing inputs {missing}")


def _lines(res) -> list[list]:
    rows = []
    for name, curve in res.capacity.items():
        cut = res.cutoff[name].values
        for s, c, r in zip(curve.snr_db, curve.values, cut):
            rows.append([name, curve.meta.get("channel_model", ""), float(s), float(c), float(r)])
    return rows


def _markers(res) -> list[list]:
    rows = []
    for s in res.config.resolved_systems():
        mode = get_mode(s.mode)
        rows.append([s.name, s.channel_model, s.mode, float(mode.bits_per_symbol), s.loading.algorithm,
                     s.loading.cluster_size, s.csi.kind, float(res.outage_snr_db(s.name)),
                     int(res.completed(s.name).size), len(res.per_system[s.name])])
    return rows


LINE_COLUMNS = {
    "system": "system name",
    "channel_model": "channel model",
    "snr_db": "Es/N0 (dB)",
    "capacity_outage": "outage capacity at the configured quantile (bit per complex dimension)",
    "cutoff_outage": "outage cutoff rate at the configured quantile",
}
MARKER_COLUMNS = {
    "system": "system name",
    "channel_model": "channel model",
    "mode": "transmission mode",
    "bits_per_symbol": "info bits per complex dimension",
    "loading": "loading algorithm",
    "cluster_size": "loading cluster size D",
    "csi": "receiver channel knowledge",
    "outage_snr_db": "worst required Es/N0 among the best (1 - quantile) realizations",
    "n_completed": "realizations that reached the target BER",
    "n_realizations": "realizations simulated",
}


def emit_figure_data(results: Mapping[str, Any] | None, figure_id: str, out_dir: str | Path,
                     **params) -> list[Path]:
    """Write the data behind one figure or table; returns the written paths."""
    results = dict(results or {})
    out = Path(out_dir)
    inputs = {k: v.config.config_hash() for k, v in results.items() if hasattr(v, "config")}

    if figure_id == "fig2":
        _require(results, figure_id, ["channel_stats"])
        st = results["channel_stats"]
        if not st.histograms:
            raise FigureDataError("fig2: channel_stats holds no histograms")
        rows = []
        for model, h in st.histograms.items():
            e, scale = h["edges"], h["scale"]
            c = 0.5 * (e[1:] + e[:-1])
            pdf = c / scale ** 2 * np.exp(-c ** 2 / (2 * scale ** 2))
            rows += [[model, float(x), float(d), float(p)] for x, d, p in zip(c, h["density"], pdf)]
        cols = {"model": "channel model", "magnitude": "bin centre of |H/G|",
                "density": "empirical pdf", "rayleigh_pdf": "Rayleigh pdf, same second moment"}
        params = {"ks_distance": {m: _num(h["ks"]) for m, h in st.histograms.items()}}
        return _write(out, figure_id, {"": (cols, rows)}, figure_id, inputs, params)

    if figure_id == "fig3":
        _require(results, figure_id, ["channel_stats"])
        st = results["channel_stats"]
        if not st.eigenvalues:
            raise FigureDataError("fig3: channel_stats holds no eigenvalue spectra")
        n_first = int(params.get("n_first", 40))
        rows = [[m, float(bw), i + 1, float(v)] for (m, bw), ev in st.eigenvalues.items()
                for i, v in enumerate(ev[:n_first])]
        cols = {"model": "channel model", "bandwidth_mhz": "total bandwidth",
                "rank": "eigenvalue index, 1 = largest", "eigenvalue": "ordered eigenvalue"}
        params = {"n_first": n_first,
                  "strong_eigenvalues": {f"{m}@{bw:g}": st.strong_count(m, bw) for m, bw in st.eigenvalues}}
        return _write(out, figure_id, {"": (cols, rows)}, figure_id, inputs, params)

    if figure_id == "fig4":
        _require(results, figure_id, ["capacity"])
        res = results["capacity"]
        points = [float(x) for x in params.get("snr_points", (5.0, 10.0))]
        rates = np.round(np.arange(0.0, 2.0 + 1e-9, float(params.get("rate_step", 0.02))), 10)
        grid = next(iter(res.capacity.values())).snr_db
        absent = [p for p in points if not np.any(np.isclose(grid, p))]
        if absent:
            raise FigureDataError(f"fig4: SNR points {absent} dB not in the result grid")
        rows = []
        for name, curve in res.capacity.items():
            cut = res.cutoff[name].samples
            for p in points:
                k = int(np.argmin(np.abs(grid - p)))
                for rate in rates:
                    rows.append([name, p, float(rate), float(np.mean(curve.samples[:, k] < rate)),
                                 float(np.mean(cut[:, k] < rate))])
        cols = {"system": "system name", "snr_db": "Es/N0 (dB)", "rate": "rate threshold",
                "outage_capacity": "fraction of realizations with capacity below rate",
                "outage_cutoff": "fraction of realizations with cutoff rate below rate"}
        return _write(out, figure_id, {"": (cols, rows)}, figure_id, inputs,
                      {"snr_points": points, "rate_step": float(rates[1] - rates[0])})

    if figure_id == "fig5":
        _require(results, figure_id, ["capacity"])
        return _write(out, figure_id, {"": (LINE_COLUMNS, _lines(results["capacity"]))}, figure_id, inputs, {})

    if figure_id == "fig6":
        etas = [float(e) for e in params.get("etas", (0.0625, 0.125, 0.25, 0.5))]
        snr = params.get("snr_db", np.round(np.arange(0.0, 40.0 + 1e-9, 0.5), 10))
        cols = {"eta": "channel-estimation noise factor", "snr_db": "Es/N0 (dB)",
                "loss_db": "10 log10(gamma / gamma_e)"}
        return _write(out, figure_id, {"": (cols, loss_curves(etas, snr))}, figure_id, {},
                      {"etas": etas})

    if figure_id in ("fig7", "fig8", "fig9", "fig10"):
        line_key = "loading" if figure_id in ("fig7", "fig8") else "capacity"
        _require(results, figure_id, [], any_of=[line_key, "ber"])
        tables = {}
        if results.get(line_key) is not None:
            tables["_lines"] = (LINE_COLUMNS, _lines(results[line_key]))
        if results.get("ber") is not None:
            tables["_markers"] = (MARKER_COLUMNS, _markers(results["ber"]))
        return _write(out, figure_id, tables, figure_id, inputs, {})

    if figure_id == "table1":
        snr = params.get("snr_db")
        if snr is None:
            _require(results, figure_id, ["ber"])
            res = results["ber"]
            snr = {name: res.outage_snr_db(name) for name in res.per_system}
        if not snr:
            raise FigureDataError("table1: no systems")
        d = float(params.get("path_loss_exponent", 2.0))
        names = list(snr)
        base = params.get("baseline", names[0])
        if base not in snr:
            raise FigureDataError(f"table1: baseline {base!r} not among {names}")
        gains = np.array([snr[base] - snr[n] for n in names], dtype=float)
        pct = range_table(gains, d)
        rows = [[n, float(snr[n]), float(g), float(p)] for n, g, p in zip(names, gains, pct)]
        cols = {"system": "system name", "snr_db": "required Es/N0 at the outage quantile (dB)",
                "gain_db": "power efficiency gain over the baseline",
                "range_increase_pct": "range increase under the path-loss exponent"}
        return _write(out, figure_id, {"": (cols, rows)}, figure_id, inputs,
                      {"baseline": base, "path_loss_exponent": d})

    raise FigureDataError(f"unknown figure id {figure_id!r}")


FIGURE_IDS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "table1")
