import json
import math

import numpy as np
import pytest
import yaml

from mbofdm.chanest import estimation_loss_db
from mbofdm.harness import (
    BerPoint,
    ConfigError,
    ExperimentConfig,
    FigureDataError,
    emit_figure_data,
    load_config,
    load_preset,
    load_result,
    range_table,
    required_snr,
    run_ber_outage,
    run_capacity_outage,
    run_channel_stats,
    write_result,
)
from mbofdm.harness.cli import main
from mbofdm.harness.config import preset_names
from mbofdm.infotheory import outage_value


def _ber_cfg(**kw):
    base = dict(kind="ber_outage", name="t", mode="CC-480", snr_grid={"start": 0, "stop": 4, "step": 1},
                n_realizations=3, target_ber=0.5, max_bits=2000, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------- config
def test_grid_mapping_is_inclusive():
    cfg = ExperimentConfig(kind="capacity_outage", snr_grid={"start": -1, "stop": 1, "step": 0.5})
    assert cfg.snr_grid == [-1.0, -0.5, 0.0, 0.5, 1.0]


@pytest.mark.parametrize("bad", [
    {"snr_grid": [0, 1, 1]},
    {"snr_grid": [3, 2]},
    {"snr_grid": []},
    {"n_realizations": 0},
    {"kind": "nope"},
    {"target_ber": 0.0},
    {"outage_quantile": 1.0},
    {"loading": {"algorithm": "magic"}},
    {"loading": {"cluster_size": 3}},
    {"csi": {"kind": "genie"}},
    {"mode": None},
    {"mode": "CC-999"},
    {"mode": "CC-80", "loading": {"algorithm": "ccb"}},
    {"systems": [{"name": "a"}, {"name": "a"}]},
    {"systems": [{"mode": "CC-80"}]},
    {"systems": [{"name": "a", "colour": 1}]},
    {"loading": {"gap": 3}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        _ber_cfg(**bad)


def test_systems_inherit_and_override():
    cfg = _ber_cfg(csi={"kind": "lse"}, systems=[
        {"name": "a"},
        {"name": "b", "mode": "TC-480", "loading": {"algorithm": "ccb", "cluster_size": 2}},
    ])
    a, b = cfg.resolved_systems()
    assert (a.mode, a.csi.kind, a.loading.algorithm) == ("CC-480", "lse", "none")
    assert (b.mode, b.csi.kind, b.loading.cluster_size) == ("TC-480", "lse", 2)
    assert a.loading.gap_for("CONV") == 6.0 and b.loading.gap_for("TURBO") == 3.0


def test_yaml_round_trip_and_hash(tmp_path):
    cfg = _ber_cfg()
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    back = load_config(path)
    assert back.config_hash() == cfg.config_hash()
    assert load_config(path, {"seed": 6}).config_hash() != cfg.config_hash()
    assert load_config(path, {"output": "elsewhere"}).config_hash() == cfg.config_hash()


def test_presets_are_valid():
    for preset in ("desk", "paper"):
        names = preset_names(preset)
        assert {"table1", "capacity_outage", "loading_study", "channel_stats"} <= set(names)
        for name in names:
            load_preset(preset, name)
    desk, paper = load_preset("desk", "table1"), load_preset("paper", "table1")
    assert (desk.n_realizations, desk.target_ber) == (20, 1e-3)
    assert (paper.n_realizations, paper.target_ber) == (100, 1e-5)
    assert [s.name for s in desk.resolved_systems()] == [s.name for s in paper.resolved_systems()]
    with pytest.raises(ConfigError):
        load_preset("desk", "missing")


# ----------------------------------------------------------- BER search
def _fake_points(threshold_db):
    calls = []

    def point(snr_db):
        calls.append(snr_db)
        ber = 0.1 if snr_db < threshold_db else 1e-6
        return BerPoint(snr_db, 100_000, int(ber * 100_000))

    return point, calls


@pytest.mark.parametrize("threshold, expected", [(7.3, 7.5), (7.0, 7.0), (7.9, 8.0), (7.1, 7.25), (0.0, 0.0)])
def test_sweep_then_bisection(threshold, expected):
    cfg = _ber_cfg(snr_grid={"start": 0, "stop": 20, "step": 1}, target_ber=1e-3)
    point, calls = _fake_points(threshold)
    res = required_snr(cfg, cfg.resolved_systems()[0], 0, point)
    assert res.status == "ok"
    assert res.required_snr_db == pytest.approx(expected)
    coarse = [c for c in calls if float(c).is_integer()]
    assert coarse == sorted(coarse) and np.all(np.diff(coarse) == 1)
    assert res.n_points == len(calls)


def test_search_not_reached():
    cfg = _ber_cfg(snr_grid=[0, 1, 2], target_ber=1e-3)
    point, _ = _fake_points(10.0)
    res = required_snr(cfg, cfg.resolved_systems()[0], 0, point)
    assert res.status == "not_reached" and math.isnan(res.required_snr_db)


def test_wilson_interval():
    p = BerPoint(10.0, 1000, 10)
    lo, hi = p.wilson()
    z = 1.959963984540054
    n, ph = 1000, 0.01
    centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    assert lo == pytest.approx(centre - half, rel=1e-9)
    assert hi == pytest.approx(centre + half, rel=1e-9)


def test_noiseless_sanity_mode_hits_grid_minimum():
    cfg = _ber_cfg(noiseless=True, systems=[
        {"name": "cc", "mode": "CC-480"},
        {"name": "tc", "mode": "TC-160-std", "csi": {"kind": "lse"}},
        {"name": "ra", "mode": "RA-80"},
        {"name": "ccb", "mode": "CC-480", "loading": {"algorithm": "ccb"}},
    ])
    res = run_ber_outage(cfg)
    for name in ("cc", "tc", "ra", "ccb"):
        assert np.all(res.required(name) == 0.0)
        assert res.outage_snr_db(name) == 0.0
    assert res.complete


def test_outage_is_order_statistic_over_completed():
    cfg = _ber_cfg(n_realizations=1)
    res = run_ber_outage(cfg)
    rng = np.random.default_rng(0)
    vals = rng.uniform(5, 20, 100)
    res.per_system["t"] = [type(res.per_system["t"][0])(i, float(v), "ok", None, 1) for i, v in enumerate(vals)]
    assert res.outage_snr_db("t") == sorted(vals)[89]
    res.per_system["t"][0].required_snr_db = float("nan")
    res.per_system["t"][0].status = "not_reached"
    done = np.delete(vals, 0)
    assert res.outage_snr_db("t") == outage_value(done, 0.1, higher_is_better=False)
    assert not res.complete and res.summary()["t"]["n_completed"] == 99


# --------------------------------------------------------- reproducibility
def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_ber_results_byte_identical_and_worker_independent(tmp_path):
    cfg = _ber_cfg(target_ber=1e-2, max_bits=3000, min_errors=20, snr_grid=[6, 9, 12, 15],
                   systems=[{"name": "cc", "mode": "CC-480"},
                            {"name": "cc_ccb", "mode": "CC-480", "loading": {"algorithm": "ccb"}}])
    write_result(run_ber_outage(cfg, workers=1), tmp_path / "a")
    write_result(run_ber_outage(cfg, workers=1), tmp_path / "b")
    write_result(run_ber_outage(cfg, workers=3), tmp_path / "c")
    a = _files(tmp_path / "a")
    assert a == _files(tmp_path / "b") == _files(tmp_path / "c")
    side = json.loads(a["t.json"])
    assert side["config_hash"] == cfg.config_hash()
    assert "time" not in json.dumps(side).lower()


def test_capacity_result_round_trip(tmp_path):
    cfg = ExperimentConfig(kind="capacity_outage", name="cap", n_realizations=12, snr_grid=[0, 5, 10],
                           systems=[{"name": "none"}, {"name": "ccb", "loading": {"algorithm": "ccb"}},
                                    {"name": "lse", "csi": {"kind": "lse"}}])
    res = run_capacity_outage(cfg, workers=2)
    assert res.capacity["none"].samples.shape == (12, 3)
    assert np.all(res.cutoff["none"].samples <= res.capacity["none"].samples + 1e-12)
    assert np.all(res.capacity["lse"].samples <= res.capacity["none"].samples + 1e-9)
    paths = write_result(res, tmp_path)
    back = load_result(paths[-1])
    for name in res.capacity:
        np.testing.assert_array_equal(back.capacity[name].samples, res.capacity[name].samples)
        np.testing.assert_array_equal(back.cutoff[name].samples, res.cutoff[name].samples)
    assert run_capacity_outage(cfg, workers=1).capacity["ccb"].samples.tobytes() == \
        res.capacity["ccb"].samples.tobytes()


def test_channel_stats_round_trip(tmp_path):
    cfg = ExperimentConfig(kind="channel_stats", name="st", channel_models=["CM1", "CM3"],
                           histogram_realizations=50, eigen_realizations=20, bandwidths_mhz=[1584.0])
    res = run_channel_stats(cfg, workers=2)
    back = load_result(write_result(res, tmp_path)[-1])
    assert back.histograms["CM3"]["ks"] == res.histograms["CM3"]["ks"]
    np.testing.assert_array_equal(back.eigenvalues[("CM1", 1584.0)], res.eigenvalues[("CM1", 1584.0)])
    assert back.strong_count("CM3", 1584.0) == res.strong_count("CM3", 1584.0)


# ------------------------------------------------------------ emitters
def test_range_table_values():
    pct = range_table([3.38, 3.29, 4.67, 6.28, 6.18, 0.0])
    assert np.all(np.abs(pct[:5] - [47, 46, 71, 106, 103]) <= 1)
    assert pct[5] == 0.0
    with pytest.raises(ValueError):
        range_table([1.0], 0.0)


def test_fig6_matches_loss_formula(tmp_path):
    paths = emit_figure_data(None, "fig6", tmp_path, etas=[0.125, 0.25])
    rows = np.genfromtxt(paths[0], delimiter=",", names=True)
    expect = 10 * np.log10(1 + rows["eta"] * (1 + 10 ** (-rows["snr_db"] / 10)))
    np.testing.assert_allclose(rows["loss_db"], expect, atol=1e-9, rtol=0)
    np.testing.assert_allclose(rows["loss_db"], estimation_loss_db(10 ** (rows["snr_db"] / 10), rows["eta"]),
                               atol=1e-12)
    assert set(rows["eta"]) == {0.125, 0.25}


@pytest.mark.parametrize("fig", ["fig2", "fig3", "fig4", "fig5", "fig7", "fig8", "fig9", "fig10", "table1"])
def test_empty_result_set_writes_nothing(tmp_path, fig):
    with pytest.raises(FigureDataError):
        emit_figure_data({}, fig, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_unknown_figure(tmp_path):
    with pytest.raises(FigureDataError):
        emit_figure_data({}, "fig99", tmp_path)


def test_table1_from_paper_column(tmp_path):
    snr = {"cc": 18.76, "cc_ccb": 15.38, "cc_d2": 15.47, "tc": 14.09, "tc_ccb": 12.48, "tc_d2": 12.58}
    path = emit_figure_data(None, "table1", tmp_path, snr_db=snr)[0]
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)
    np.testing.assert_allclose(rows["gain_db"], [0, 3.38, 3.29, 4.67, 6.28, 6.18], atol=1e-9)
    assert np.all(np.abs(rows["range_increase_pct"] - [0, 47, 46, 71, 106, 103]) <= 1)


def test_fig4_requires_grid_points(tmp_path):
    cfg = ExperimentConfig(kind="capacity_outage", name="cap", n_realizations=3, snr_grid=[0, 5, 10])
    res = run_capacity_outage(cfg)
    paths = emit_figure_data({"capacity": res}, "fig4", tmp_path)
    rows = np.genfromtxt(paths[0], delimiter=",", names=True, dtype=None, encoding=None)
    assert set(rows["snr_db"]) == {5.0, 10.0}
    assert np.all(np.diff(rows["outage_capacity"][rows["snr_db"] == 5.0]) >= 0)
    with pytest.raises(FigureDataError):
        emit_figure_data({"capacity": res}, "fig4", tmp_path / "x", snr_points=[7.0])
    assert not (tmp_path / "x").exists()


# ------------------------------------------------------------------ CLI
def test_cli_exit_codes(tmp_path, capsys):
    assert main(["range-table", "3.38"]) == 0
    assert "47.57" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: ber_outage\nmode: CC-480\nsnr_grid: [3, 1]\n")
    assert main(["ber-outage", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["capacity-outage", "--preset", "desk", "--study", "table1"]) == 2
    cfg = tmp_path / "partial.yaml"
    cfg.write_text(yaml.safe_dump({"kind": "ber_outage", "name": "p", "mode": "CC-480", "snr_grid": [-10.0],
                                   "n_realizations": 1, "target_ber": 1e-4, "max_bits": 2000}))
    assert main(["ber-outage", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 3
    assert (tmp_path / "p" / "p.csv").exists()


def test_cli_campaign_and_figures(tmp_path):
    cfg = tmp_path / "cap.yaml"
    cfg.write_text(yaml.safe_dump({"kind": "capacity_outage", "name": "cap", "n_realizations": 4,
                                   "snr_grid": [0.0, 5.0, 10.0]}))
    out = tmp_path / "o"
    assert main(["capacity-outage", "--config", str(cfg), "--out", str(out), "--seed", "9",
                 "--figures", "fig5"]) == 0
    assert (out / "fig5_data.csv").exists()
    assert json.loads((out / "cap.json").read_text())["config"]["seed"] == 9
    assert main(["figure", "fig4", "fig6", "--results", f"capacity={out / 'cap.json'}", "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "fig4_data.csv").exists() and (tmp_path / "f" / "fig6_data.csv").exists()
    assert main(["figure", "fig2", "--out", str(tmp_path / "g")]) == 2
    assert main(["figure", "fig5", "--results", f"capacity={tmp_path / 'none.json'}"]) == 2


def test_figure_files_do_not_clobber_campaign_results(tmp_path):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(yaml.safe_dump({"kind": "ber_outage", "name": "table1", "mode": "CC-480", "snr_grid": [0.0],
                                   "n_realizations": 2, "noiseless": True}))
    assert main(["ber-outage", "--config", str(cfg), "--out", str(tmp_path), "--figures", "table1"]) == 0
    assert load_result(tmp_path / "table1.json").complete
    assert (tmp_path / "table1_data.csv").exists()
