"""End-to-end runs of the command line entry points.

Everything here calls ``main(argv)`` in process and reads the streams back
through capsys; only the ``python -m costsense`` wiring itself goes through
a subprocess.
"""

from __future__ import annotations

import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from costsense import CostDataset, fit_cost_unweighted, load_dataset, save_dataset
from costsense.cli import main
from helpers import random_cost_dataset


def _run(capsys, *argv):
    status = main(list(argv))
    captured = capsys.readouterr()
    return status, captured.out, captured.err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _dataset_csv(tmp_path, seed=4, censored=False, name="costs.csv"):
    path = tmp_path / name
    save_dataset(path, random_cost_dataset(seed, n=160, censored=censored))
    return path


def _two_covariate_csv(tmp_path):
    rng = np.random.default_rng(7)
    n = 150
    z1 = rng.normal(size=n)
    z2 = rng.normal(size=n)
    treatment = (rng.random(n) < 1.0 / (1.0 + np.exp(-z1))).astype(np.int64)
    cost = rng.gamma(2.0, np.exp(1.5 + 0.3 * treatment) / 2.0)
    dataset = CostDataset(
        cost=cost,
        time=np.full(n, 5.0),
        uncensored=np.ones(n, dtype=bool),
        treatment=treatment,
        covariates=np.column_stack([z1, z2]),
        covariate_names=("z1", "z2"),
    )
    path = tmp_path / "two.csv"
    save_dataset(path, dataset)
    return path


def test_fit_csv_lists_every_design_term(tmp_path, capsys):
    path = _dataset_csv(tmp_path)
    status, out, err = _run(capsys, "fit", "--input", str(path), "--format", "csv")
    assert status == 0
    assert err == ""
    rows = _rows(out)
    assert [row["term"] for row in rows] == ["intercept", "treat", "z1"]
    # CSV floats are written with repr, so they round-trip exactly.
    fit = fit_cost_unweighted(load_dataset(path))
    for row, coefficient in zip(rows, fit.coefficients):
        assert float(row["estimate"]) == coefficient
        assert float(row["cost_ratio"]) == pytest.approx(np.exp(coefficient), rel=1e-15)
    for row in rows:
        assert float(row["ci_low"]) < float(row["estimate"]) < float(row["ci_high"])


def test_fit_table_reports_ratio_and_counts(tmp_path, capsys):
    path = _dataset_csv(tmp_path, censored=True)
    status, out, err = _run(capsys, "fit", "--input", str(path))
    assert status == 0
    assert "treatment cost ratio:" in out
    assert "95% CI" in out
    assert "records: 160" in out
    assert "variance: sandwich" in out


def test_fit_ipw_flag_is_noop_without_censoring(tmp_path, capsys):
    path = _dataset_csv(tmp_path, censored=False)
    _, with_ipw, _ = _run(capsys, "fit", "--input", str(path), "--format", "csv")
    _, without, _ = _run(capsys, "fit", "--input", str(path), "--format", "csv", "--no-ipw")
    assert with_ipw == without


def test_fit_weights_matter_under_censoring(tmp_path, capsys):
    path = _dataset_csv(tmp_path, censored=True)
    _, with_ipw, _ = _run(capsys, "fit", "--input", str(path), "--format", "csv")
    _, without, _ = _run(capsys, "fit", "--input", str(path), "--format", "csv", "--no-ipw")
    assert with_ipw != without


def test_fit_writes_output_file_and_keeps_table_on_stdout(tmp_path, capsys):
    path = _dataset_csv(tmp_path)
    out_path = tmp_path / "fit.csv"
    status, out, _ = _run(capsys, "fit", "--input", str(path), "--output", str(out_path))
    assert status == 0
    assert "treatment cost ratio:" in out
    rows = _rows(out_path.read_text())
    assert [row["term"] for row in rows] == ["intercept", "treat", "z1"]
    assert set(rows[0]) == {
        "term", "estimate", "se", "ci_low", "ci_high",
        "cost_ratio", "ratio_ci_low", "ratio_ci_high",
    }


def test_fit_variance_choice_changes_se_only(tmp_path, capsys):
    path = _dataset_csv(tmp_path, censored=True)
    _, sandwich, _ = _run(capsys, "fit", "--input", str(path), "--format", "csv",
                          "--variance", "sandwich")
    _, model, _ = _run(capsys, "fit", "--input", str(path), "--format", "csv",
                       "--variance", "model")
    sandwich_rows, model_rows = _rows(sandwich), _rows(model)
    for left, right in zip(sandwich_rows, model_rows):
        assert left["estimate"] == right["estimate"]
    assert [r["se"] for r in sandwich_rows] != [r["se"] for r in model_rows]


def test_fit_missing_input_fails_with_usage_status(tmp_path, capsys):
    status, out, err = _run(capsys, "fit", "--input", str(tmp_path / "absent.csv"))
    assert status == 2
    assert out == ""
    assert err.startswith("error: input-not-found:")


def test_fit_rejects_out_of_range_level(tmp_path, capsys):
    path = _dataset_csv(tmp_path)
    status, _, err = _run(capsys, "fit", "--input", str(path), "--level", "1.5")
    assert status == 2
    assert err.startswith("error: config-error:")
    assert "level" in err


ADJUST_INI = """\
[apparent]
cost_ratio = 0.873
ci_low = 0.793
ci_high = 0.960

[confounder]
family = bernoulli
prevalence = 0.7/0.5
effect = 1.1
"""


def test_adjust_reproduces_published_style_row(tmp_path, capsys):
    path = tmp_path / "adjust.ini"
    path.write_text(ADJUST_INI)
    status, out, _ = _run(capsys, "adjust", "--input", str(path), "--format", "csv")
    assert status == 0
    (row,) = _rows(out)
    assert row["prevalence_control"] == "0.7"
    assert row["prevalence_treated"] == "0.5"
    assert round(float(row["cost_ratio"]), 2) == 0.89
    assert round(float(row["ci_low"]), 2) == 0.81
    assert round(float(row["ci_high"]), 2) == 0.98
    assert row["significance_changed"] == "false"
    assert row["error"] == ""


def test_adjust_table_legend_names_the_unadjusted_interval(tmp_path, capsys):
    path = tmp_path / "adjust.ini"
    path.write_text(ADJUST_INI)
    _, out, _ = _run(capsys, "adjust", "--input", str(path))
    assert "unadjusted: 0.87" in out
    assert "*" in out.splitlines()[-1]


def test_adjust_fits_apparent_effect_from_data(tmp_path, capsys):
    config = tmp_path / "adjust.ini"
    config.write_text("[confounder]\nfamily = normal\nmean = 0/1\nsd = 1\neffect = 1.2\n")
    data = _dataset_csv(tmp_path)
    status, out, _ = _run(capsys, "adjust", "--input", str(config),
                          "--data", str(data), "--format", "csv")
    assert status == 0
    (row,) = _rows(out)
    # A unit shift in the confounder mean subtracts exactly gamma from the fit.
    fit = fit_cost_unweighted(load_dataset(data))
    expected = fit.coefficients[1] - np.log(1.2)
    assert float(row["beta"]) == pytest.approx(expected, abs=1e-12)


def test_adjust_rejects_two_apparent_sources(tmp_path, capsys):
    config = tmp_path / "adjust.ini"
    config.write_text(ADJUST_INI)
    data = _dataset_csv(tmp_path)
    status, _, err = _run(capsys, "adjust", "--input", str(config), "--data", str(data))
    assert status == 2
    assert "given twice" in err


def test_adjust_requires_an_apparent_source(tmp_path, capsys):
    config = tmp_path / "adjust.ini"
    config.write_text("[confounder]\nfamily = bernoulli\nprevalence = 0.5\neffect = 1.1\n")
    status, _, err = _run(capsys, "adjust", "--input", str(config))
    assert status == 2
    assert "no apparent effect" in err


SWEEP_INI = """\
[apparent]
cost_ratio = 0.873
ci_low = 0.793
ci_high = 0.960

[sweep]
family = bernoulli

[grid]
prevalence = 0.7/0.5, 0.8/0.4, 0.8/0.3
effect = 1.1, 1.25, 1.5
"""


def test_sweep_grid_order_and_significance_flags(tmp_path, capsys):
    path = tmp_path / "sweep.ini"
    path.write_text(SWEEP_INI)
    status, out, _ = _run(capsys, "sweep", "--input", str(path), "--format", "csv")
    assert status == 0
    rows = _rows(out)
    assert len(rows) == 9
    # The first-listed grid key varies fastest.
    assert [row["effect_control"] for row in rows[:4]] == ["1.1", "1.1", "1.1", "1.25"]
    ratios = [round(float(row["cost_ratio"]), 2) for row in rows]
    assert ratios == [0.89, 0.91, 0.92, 0.91, 0.95, 0.97, 0.94, 1.02, 1.06]
    flags = [row["significance_changed"] for row in rows]
    assert flags == ["false"] + ["true"] * 8


def test_sweep_isolates_domain_failures_per_row(tmp_path, capsys):
    path = tmp_path / "sweep.ini"
    path.write_text(
        "[apparent]\nbeta_star = -0.136\nse = 0.0488\n"
        "[sweep]\nfamily = gamma\n"
        "[grid]\nshape = 2\nscale = 0.5\nlog_effect = 0.5, 2.5\n"
    )
    status, out, _ = _run(capsys, "sweep", "--input", str(path), "--format", "csv")
    assert status == 0
    rows = _rows(out)
    assert len(rows) == 2
    assert rows[0]["error"] == ""
    assert float(rows[0]["cost_ratio"]) > 0.0
    assert rows[1]["beta"] == ""
    assert rows[1]["cost_ratio"] == ""
    assert "scale * effect" in rows[1]["error"]


SCENARIO_INI = """\
[scenario bern]
kind = ci
family = bernoulli
prevalence = 0.3/0.866
gamma = 0.25
n_per_arm = 40
censor_prob = 0.25
"""


def test_simulate_summary_is_deterministic(tmp_path, capsys):
    path = tmp_path / "scenarios.ini"
    path.write_text(SCENARIO_INI)
    argv = ("simulate", "--input", str(path), "--seed", "9", "--reps", "6",
            "--format", "csv")
    status, first, err = _run(capsys, *argv)
    assert status == 0
    assert err == ""
    _, second, _ = _run(capsys, *argv)
    assert first == second
    (row,) = _rows(first)
    assert row["scenario"] == "bern"
    assert row["kind"] == "ci"
    assert row["n"] == "80"
    assert int(row["converged"]) <= 6
    assert float(row["coverage_adjusted"]) <= 1.0


def test_simulate_workers_leave_results_unchanged(tmp_path, capsys):
    path = tmp_path / "scenarios.ini"
    path.write_text(SCENARIO_INI)
    rep_one, rep_three = tmp_path / "one.csv", tmp_path / "three.csv"
    base = ("simulate", "--input", str(path), "--seed", "9", "--reps", "6",
            "--format", "csv")
    _, serial, _ = _run(capsys, *base, "--workers", "1", "--rep-output", str(rep_one))
    _, pooled, _ = _run(capsys, *base, "--workers", "3", "--rep-output", str(rep_three))
    assert serial == pooled
    assert rep_one.read_text() == rep_three.read_text()
    assert len(_rows(rep_one.read_text())) == 6


def test_simulate_rejects_seed_in_scenario_file(tmp_path, capsys):
    path = tmp_path / "scenarios.ini"
    path.write_text(SCENARIO_INI + "seed = 5\n")
    status, _, err = _run(capsys, "simulate", "--input", str(path), "--seed", "9")
    assert status == 2
    assert "--seed" in err


def test_simulate_validates_flag_ranges(tmp_path, capsys):
    path = tmp_path / "scenarios.ini"
    path.write_text(SCENARIO_INI)
    for extra in (("--seed", "-1"), ("--seed", "9", "--reps", "0"),
                  ("--seed", "9", "--workers", "0")):
        status, _, err = _run(capsys, "simulate", "--input", str(path), *extra)
        assert status == 2
        assert err.startswith("error: config-error:")


def test_diagnose_reports_each_covariate(tmp_path, capsys):
    path = _two_covariate_csv(tmp_path)
    status, out, _ = _run(capsys, "diagnose", "--input", str(path), "--format", "csv")
    assert status == 0
    rows = _rows(out)
    assert [row["covariate"] for row in rows] == ["z1", "z2"]
    for row in rows:
        assert -1.0 <= float(row["corr_unconditional"]) <= 1.0
        assert row["flagged"] in ("true", "false")
    # Spearman reruns on ranks; same shape, different numbers allowed.
    _, spearman, _ = _run(capsys, "diagnose", "--input", str(path), "--spearman")
    assert "correlation method: spearman" in spearman


def test_synth_writes_reloadable_cohort(tmp_path, capsys):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    status, out, _ = _run(capsys, "synth", "--output", str(first), "--seed", "3")
    assert status == 0
    assert "wrote 1860 records" in out
    assert "censored" in out
    dataset = load_dataset(first)
    assert len(dataset) == 1860
    _run(capsys, "synth", "--output", str(second), "--seed", "3")
    assert first.read_text() == second.read_text()


def test_module_entry_point_runs(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "costsense", "--help"],
        capture_output=True, text=True, check=False,
    )
    assert result.returncode == 0
    assert "usage:" in result.stdout
    for command in ("fit", "adjust", "sweep", "simulate", "diagnose", "synth"):
        assert command in result.stdout


def test_missing_subcommand_exits_with_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_unknown_format_choice_rejected(tmp_path, capsys):
    path = _dataset_csv(tmp_path)
    with pytest.raises(SystemExit) as excinfo:
        main(["fit", "--input", str(path), "--format", "xml"])
    assert excinfo.value.code == 2
