import csv
import math
import textwrap

import numpy as np
import pytest

from shrinkcv import cli
from shrinkcv.errors import ConfigError, NumericalFailureError
from shrinkcv.harness import (CURVES_HEADER, SWEEP_HEADER, ExperimentConfig, SweepReport,
                              SweepRow, build_scenario, config_from_dict, emit_csv, emit_curves,
                              format_value, load_config, run_method, run_sweep, trial_target)
from shrinkcv.scenarios import UlaScenarioSpec

SMALL_ULA = {"n_antennas": 6, "interferer_doas_deg": [40.0]}


def _cfg(**kw):
    doc = {"seed": 3, "trials": 4, "methods": ["scm", "s2cm_cv"], "l_grid": [8],
           "scenario": {"kind": "ula", **SMALL_ULA}}
    doc.update(kw)
    return config_from_dict(doc)


def _write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


# -- configuration -------------------------------------------------------------
def test_full_schema_round_trip(tmp_path):
    p = _write(tmp_path, """
        seed = 11
        trials = 5
        threads = 2
        methods = ["s2cm_cv", "ste_cv2"]
        l_grid = [8, 16]
        outputs = ["sdr_loss", "rho_curve"]

        [scenario]
        kind = "stap"
        n_pulses = 2
        n_elements = 3
        nu = 0.8

        [target]
        kind = "knowledge"
        sigma_t2 = 0.05
        fixed = true

        [grid]
        count = 40
        eps = 0.01

        [ste]
        delta = 1e-7
        max_iter = 300
        rescale = false
        anderson = 2
        refine = false
    """)
    cfg = load_config(p)
    assert cfg.master_seed == 11 and cfg.trials == 5 and cfg.threads == 2
    assert cfg.scenario.n == 6 and cfg.scenario.nu == 0.8
    assert cfg.target.kind == "knowledge" and cfg.target.fixed
    assert cfg.grid.count == 40
    assert cfg.ste.delta == 1e-7 and cfg.ste.max_iter == 300 and not cfg.ste.rescale
    assert cfg.ste.anderson == 2 and cfg.refine is False


def test_defaults_by_scenario_kind():
    ula = config_from_dict({"methods": ["scm"], "l_grid": [30]})
    assert ula.trials == 200 and ula.scenario == UlaScenarioSpec()
    stap = config_from_dict({"methods": ["scm"], "l_grid": [30], "scenario": {"kind": "stap"}})
    assert stap.trials == 100 and stap.scenario.n == 32


@pytest.mark.parametrize("doc, fragment", [
    ({"methods": ["scm"], "l_grid": [8], "sed": 1}, "sed"),
    ({"methods": ["scm"], "l_grid": [8], "scenario": {"n_antenas": 4}}, "n_antenas"),
    ({"methods": ["scm"], "l_grid": [8], "ste": {"detla": 1e-3}}, "detla"),
    ({"methods": ["nope"], "l_grid": [8]}, "nope"),
    ({"methods": [], "l_grid": [8]}, "methods"),
    ({"methods": ["scm"], "l_grid": []}, "l_grid"),
    ({"methods": ["scm"], "l_grid": [8], "trials": 0}, "trials"),
    ({"methods": ["scm"], "l_grid": [8], "trials": 2.5}, "trials"),
    ({"methods": ["scm"], "l_grid": ["8"]}, "l_grid"),
    ({"methods": ["scm"], "l_grid": [8], "scenario": {"kind": "radar"}}, "kind"),
    ({"methods": ["scm"], "l_grid": [8], "target": {"kind": "oracle"}}, "target"),
    ({"methods": ["scm"], "l_grid": [8], "ste": {"delta": 0.0}}, "delta"),
    ({"methods": ["scm"], "l_grid": [8], "outputs": ["plots"]}, "plots"),
    ({"methods": ["scm"], "l_grid": [8], "scenario": {"n_antennas": 1}}, "antenna"),
])
def test_config_errors(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(doc)


def test_bad_toml_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "methods = [scm"))


# -- trials --------------------------------------------------------------------
def test_scm_needs_enough_samples():
    cfg = _cfg()
    real = build_scenario(cfg.scenario)
    x = real.snapshots(0, 0, 4)
    with pytest.raises(NumericalFailureError):
        run_method("scm", x, real, trial_target(cfg, real, 0), cfg)


def test_knowledge_target_fixed_vs_per_trial():
    real = build_scenario(UlaScenarioSpec(**SMALL_ULA))
    per = _cfg(target={"kind": "knowledge"})
    fixed = _cfg(target={"kind": "knowledge", "fixed": True})
    assert not np.array_equal(trial_target(per, real, 0).matrix, trial_target(per, real, 1).matrix)
    np.testing.assert_array_equal(trial_target(fixed, real, 0).matrix,
                                  trial_target(fixed, real, 5).matrix)
    norm = _cfg(target={"kind": "knowledge", "normalize_trace": True})
    assert np.trace(trial_target(norm, real, 2).matrix).real == pytest.approx(6)


def test_scm_consistency_at_large_sample_count():
    cfg = config_from_dict({"seed": 1, "trials": 10, "methods": ["scm"], "l_grid": [1000],
                            "scenario": {"n_antennas": 4, "interferer_doas_deg": []}})
    row = run_sweep(cfg).row("scm", 1000)
    assert -0.5 < row.mean_sl_db <= 0 and row.trials_failed == 0


def test_methods_share_snapshots_and_failures_are_counted():
    cfg = _cfg(methods=["scm", "s2cm_cv", "oracle_s2cm"], l_grid=[4, 8])
    rep = run_sweep(cfg)
    assert rep.row("scm", 4).trials_failed == 4 and math.isnan(rep.row("scm", 4).mean_sl_db)
    assert rep.row("scm", 8).trials_failed == 0
    assert {f.trial for f in rep.failures} == {0, 1, 2, 3}
    for r in rep.rows:
        assert not r.mean_sl_db > 0
    # oracle is a per-trial lower bound on loss for the same snapshots
    assert rep.row("oracle_s2cm", 8).mean_sl_db >= rep.row("s2cm_cv", 8).mean_sl_db - 1e-12


def test_rows_sorted_by_method_then_l():
    rep = run_sweep(_cfg(methods=["s2cm_cv", "oracle_s2cm"], l_grid=[12, 8]))
    keys = [(r.method, r.L) for r in rep.rows]
    assert keys == sorted(keys)


def test_nonconvergence_is_a_failed_trial():
    cfg = config_from_dict({"seed": 2, "trials": 3, "methods": ["ste_cv2"], "l_grid": [8],
                            "scenario": SMALL_ULA, "ste": {"max_iter": 1}})
    rep = run_sweep(cfg)
    assert rep.row("ste_cv2", 8).trials_failed == 3
    assert all("converge" in f.reason for f in rep.failures)


def test_curves_follow_outputs():
    cfg = config_from_dict({
        "seed": 5, "trials": 2, "methods": ["ste_cv2", "s2cm_cv"], "l_grid": [12],
        "scenario": {"kind": "stap", "n_pulses": 2, "n_elements": 3},
        "outputs": ["sdr_loss", "rho_curve", "distance_curve", "cost_curve"],
        "grid": {"count": 25}})
    rep = run_sweep(cfg)
    series = {c[0] for c in rep.curves}
    assert {"ste_cv2:L12:rho", "ste_cv2:L12:distance", "s2cm_cv:L12:cost"} <= series
    cost = [c for c in rep.curves if c[0] == "s2cm_cv:L12:cost" and c[1] == 0]
    assert len(cost) == 25
    dist = [c[3] for c in rep.curves if c[0] == "ste_cv2:L12:distance" and c[1] == 1]
    assert dist[-1] < cfg.ste.delta and all(d >= cfg.ste.delta for d in dist[:-1])


def test_threads_do_not_change_results():
    cfg = _cfg(methods=["s2cm_cv", "ste_ae"], l_grid=[8, 12], trials=6)
    a, b = run_sweep(cfg, threads=1), run_sweep(cfg, threads=4)
    assert [r.values() for r in a.rows] == [r.values() for r in b.rows]


# -- CSV -----------------------------------------------------------------------
def test_format_value():
    assert format_value(3) == "3"
    assert format_value(0.1) == "0.1"
    assert float(format_value(1 / 3)) == 1 / 3
    assert format_value(float("nan")) == "nan"


def test_empty_report_is_header_only(tmp_path):
    emit_csv(SweepReport(), tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == ",".join(SWEEP_HEADER) + "\n"
    emit_curves([], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text() == ",".join(CURVES_HEADER) + "\n"


def test_one_row_file(tmp_path):
    rep = SweepReport(rows=[SweepRow("s2cm_cv", 20, -1.5, 0.25, 0.1, 0.75, 0.0, 2)])
    emit_csv(rep, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines == [",".join(SWEEP_HEADER), "s2cm_cv,20,-1.5,0.25,0.1,0.75,0.0,2"]


def test_emission_is_byte_stable(tmp_path):
    rep = run_sweep(_cfg())
    emit_csv(rep, tmp_path / "a.csv")
    emit_csv(rep, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader((tmp_path / "a.csv").open()))
    assert tuple(rows[0]) == SWEEP_HEADER and len(rows) == 3


def test_unwritable_path_names_the_path(tmp_path):
    target = tmp_path / "missing" / "s.csv"
    with pytest.raises(OSError, match="missing"):
        emit_csv(SweepReport(), target)


# -- command line --------------------------------------------------------------
def _ula_file(tmp_path, extra=""):
    return _write(tmp_path, f"""
        seed = 4
        trials = 3
        methods = ["s2cm_cv", "ste_cv2"]
        l_grid = [8]
        outputs = ["sdr_loss", "nmse", "distance_curve"]
        [scenario]
        n_antennas = 6
        interferer_doas_deg = [40.0]
        {extra}
    """)


def test_cli_sweep_writes_both_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["sweep", str(_ula_file(tmp_path)), "--out", str(out)]) == 0
    assert (out / "sweep.csv").read_text().startswith(",".join(SWEEP_HEADER))
    assert (out / "curves.csv").read_text().startswith(",".join(CURVES_HEADER))
    assert "wrote" in capsys.readouterr().out


def test_cli_sweep_overrides(tmp_path):
    cfg = _ula_file(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sweep", str(cfg), "--out", str(a), "--seed", "9", "--trials", "2"]) == 0
    assert cli.main(["sweep", str(cfg), "--out", str(b), "--seed", "9", "--trials", "2",
                     "--threads", "3"]) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = _ula_file(tmp_path, "bogus = 1")
    assert cli.main(["sweep", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["sweep", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


def test_cli_io_error_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["sweep", str(_ula_file(tmp_path)), "--out", str(blocker / "sub")]) == 3


def test_cli_tune_prints_choice_and_curve(tmp_path, capsys):
    p = _write(tmp_path, """
        [scenario]
        kind = "stap"
        n_pulses = 2
        n_elements = 3
        [grid]
        count = 30
    """)
    assert cli.main(["tune", "--scenario", str(p), "--method", "ste_cv2", "--l", "12",
                     "--seed", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["method", "ste_cv2"]
    assert any(line.startswith("rho*") for line in out)
    curve = out[out.index("rho,cost") + 1:]
    assert len(curve) == 30
    assert cli.main(["tune", "--scenario", str(p), "--method", "s2cm_cv", "--l", "1"]) == 2


def test_cli_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    assert "selftest passed" in capsys.readouterr().out


def test_experiment_config_direct_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(UlaScenarioSpec(), ("scm", "scm"), (8,))
    with pytest.raises(ConfigError):
        ExperimentConfig(UlaScenarioSpec(), ("scm",), (8,), threads=0)
