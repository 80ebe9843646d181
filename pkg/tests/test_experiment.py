import math

import numpy as np
import pytest

from n2vsbm.errors import InputError
from n2vsbm.experiment import (COLUMNS, ExperimentSpec, cell_seed, fit_convergence_rate, load_spec,
                               read_report, run_cell, run_experiment, write_report)

SMALL = dict(kappa=(2,), n=(300,), beta=(0.05,), k=20, W=5, walks_per_start=4, d=8, replications=2,
             restarts=3)


def test_spec_validation():
    with pytest.raises(InputError):
        ExperimentSpec(n=())
    with pytest.raises(InputError):
        ExperimentSpec(replications=0)
    with pytest.raises(InputError):
        ExperimentSpec(clusterer="louvain")


def test_load_spec(tmp_path):
    f = tmp_path / "exp.ini"
    f.write_text("[model]\nkappa = 2, 3\nn = 200,400\nbeta = 0.05\nrho = logn_over_n\n"
                 "[walk]\nalpha = 0.5, 1.0\nk = 40\n[train]\nd = 16\nseed_base = 7\n"
                 "[pipeline]\nreplications = 3\nclusterer = spectral\n[output]\noutput = r.csv\n")
    spec = load_spec(f, {"n": "100", "lr": None})
    assert spec.kappa == (2, 3) and spec.n == (100,) and spec.alpha == (0.5, 1.0)
    assert spec.k == 40 and spec.d == 16 and spec.seed_base == 7 and spec.replications == 3
    assert spec.clusterer == "spectral" and spec.output == "r.csv"
    assert len(spec.settings()) == 2 * 1 * 2
    f.write_text("[model]\nkapa = 2\n")
    with pytest.raises(InputError):
        load_spec(f)
    f.write_text("[bogus]\nk = 2\n")
    with pytest.raises(InputError):
        load_spec(f)


def test_cell_seed_is_local():
    assert cell_seed(1, 2, 3) == cell_seed(1, 2, 3)
    assert len({cell_seed(1, s, r) for s in range(5) for r in range(5)}) == 25
    assert 0 <= cell_seed(9, 0, 0) < 2 ** 64


def test_shape_and_columns(tmp_path):
    spec = ExperimentSpec(**SMALL)
    rows = run_experiment(spec, tmp_path / "r.csv")
    assert len(rows) == 2
    back = read_report(tmp_path / "r.csv")
    assert list(back[0].keys()) == COLUMNS
    for r in back:
        assert r["error"] == ""
        for col in COLUMNS:
            if col != "error":
                assert r[col] is not None, col


def test_deterministic_csv(tmp_path):
    spec = ExperimentSpec(**SMALL, record_time=False)
    run_experiment(spec, tmp_path / "a.csv")
    run_experiment(spec, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    timed = ExperimentSpec(**SMALL)
    a, b = run_experiment(timed), run_experiment(timed)
    for x, y in zip(a, b):
        assert {k: v for k, v in x.items() if k != "wall_time"} == {k: v for k, v in y.items() if k != "wall_time"}


def test_cell_reproducible_in_isolation():
    spec = ExperimentSpec(**{**SMALL, "n": (200, 300)}, record_time=False)
    rows = run_experiment(spec)
    assert run_cell(spec, 1, 1) == rows[3]


def test_lossless_roundtrip(tmp_path):
    spec = ExperimentSpec(**SMALL)
    rows = run_experiment(spec, tmp_path / "r.csv")
    back = read_report(tmp_path / "r.csv")
    for r, b in zip(rows, back):
        for col in COLUMNS:
            if isinstance(r[col], float):
                assert b[col] == r[col]


def test_no_signal_chance_level():
    spec = ExperimentSpec(**{**SMALL, "beta": (1.0,), "replications": 4})
    acc = [r["accuracy"] for r in run_experiment(spec)]
    assert abs(np.mean(acc) - 0.5) <= 0.1


def test_error_rows_do_not_abort():
    spec = ExperimentSpec(**{**SMALL, "kappa": (400,), "replications": 1})
    rows = run_experiment(spec)
    assert rows[0]["error"] and rows[0]["accuracy"] == ""


def test_spectral_pipeline_has_empty_theory_columns():
    spec = ExperimentSpec(**{**SMALL, "clusterer": "spectral", "replications": 1})
    row = run_experiment(spec)[0]
    assert row["gram_deviation"] == "" and row["accuracy"] != ""


def test_unsupported_theory_scenario_proceeds():
    spec = ExperimentSpec(**{**SMALL, "theta": "halfnormal", "replications": 1})
    row = run_experiment(spec)[0]
    assert row["error"] == "" and row["gram_deviation"] == "" and row["accuracy"] != ""


def _rows(f, ns=(100, 200, 400, 800, 1600)):
    return [dict(kappa=2, beta=0.05, n=n, metric=f(n)) for n in ns]


def test_rate_fit_power_laws():
    (fit,) = fit_convergence_rate(_rows(lambda n: 3.0 / n), "metric")
    assert fit.slope == pytest.approx(-1.0, abs=0.01) and fit.r2 == pytest.approx(1.0)
    (fit,) = fit_convergence_rate(_rows(lambda n: 3.0 / math.sqrt(n)), "metric")
    assert fit.slope == pytest.approx(-0.5, abs=0.01)
    (fit,) = fit_convergence_rate(_rows(lambda n: 0.7), "metric")
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_rate_fit_drops_and_skips():
    rows = _rows(lambda n: 1.0 / n) + [dict(kappa=2, beta=0.05, n=50, metric=0.0)]
    (fit,) = fit_convergence_rate(rows, "metric")
    assert fit.dropped == 1 and fit.n_points == 5
    (fit,) = fit_convergence_rate(_rows(lambda n: 1.0 / n, ns=(10, 20)), "metric")
    assert "skipped" in fit.note and math.isnan(fit.slope)


def test_rate_fit_from_csv(tmp_path):
    rows = [dict(setting=i, replicate=0, kappa=2, beta=0.05, n=n, gram_deviation=5.0 / n, error="")
            for i, n in enumerate((100, 300, 900))]
    write_report(rows, tmp_path / "r.csv")
    (fit,) = fit_convergence_rate(tmp_path / "r.csv", "gram_deviation")
    assert fit.slope == pytest.approx(-1.0)
