import csv
import json

import numpy as np
import pytest

from windcast.cli import EXIT_ARGUMENT, EXIT_DATA, EXIT_OK, main
from windcast.data import read_csv
from windcast.embed import embed
from windcast.models import load_model, load_run


def rows(path):
    return [r for r in csv.reader(open(path, encoding="utf-8")) if r and not r[0].startswith("#")]


@pytest.fixture(scope="module")
def mg_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "mg.csv"
    assert main(["generate", "--kind", "mackey-glass", "--n", "600", "--seed", "3", "-o", str(p)]) == EXIT_OK
    return p


@pytest.fixture(scope="module")
def svr_model(mg_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("m") / "svr.json"
    assert main(["train", "--input", str(mg_csv), "--model", "svr", "--lag", "12",
                 "--train-fraction", "0.5", "-o", str(out)]) == EXIT_OK
    return out


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["generate", "--kind", "periodic", "--n", "50", "--noise-sd", "0.2", "--seed", "4",
                     "-o", str(p)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert len(read_csv(a)) == 50


def test_generate_to_stdout(capsys):
    assert main(["generate", "--kind", "ar1", "--n", "5"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("index,speed_ms\n")


class TestMi:
    def test_curve_rows_and_summary(self, tmp_path, capsys):
        p = tmp_path / "sine.csv"
        main(["generate", "--kind", "periodic", "--n", "3000", "--noise-sd", "0.3", "-o", str(p)])
        assert main(["mi", "--input", str(p), "--max-delay", "30", "--rule", "first_local_minimum"]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("# windcast ")
        assert out[1] == "delay,mi_nats" and len(out) == 2 + 30 + 1
        summary = out[-1]
        assert summary.startswith("# selected_lag=")
        lag = int(summary.split()[1].split("=")[1])
        assert lag < 24

    def test_bins_one_is_argument_error(self, mg_csv):
        assert main(["mi", "--input", str(mg_csv), "--bins", "1"]) == EXIT_ARGUMENT

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["mi", "--input", str(tmp_path / "nope.csv")]) == EXIT_DATA

    def test_unknown_flag(self, mg_csv):
        assert main(["mi", "--input", str(mg_csv), "--bogus"]) == EXIT_ARGUMENT


class TestTrain:
    def test_round_trip_predictions(self, svr_model, mg_csv):
        m = load_model(svr_model)
        w = embed(read_csv(mg_csv).values[300:], 12).features
        again = load_model(svr_model)
        assert m.predict_many(w).tobytes() == again.predict_many(w).tobytes()
        run = load_run(svr_model)
        assert run["embedded_rows"] == 300 - 12
        assert run["effective_config"]["lag"] == "12"
        assert run["scaler"]["kind"] == "min_max"

    def test_forest_twice_byte_identical(self, mg_csv, tmp_path):
        outs = [tmp_path / "f1.json", tmp_path / "f2.json"]
        for o in outs:
            assert main(["train", "--input", str(mg_csv), "--model", "forest", "--trees", "10",
                         "--seed", "42", "--lag", "12", "--workers", "2", "-o", str(o)]) == EXIT_OK
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_embedded_rows_for_year(self, tmp_path):
        p = tmp_path / "year.csv"
        main(["generate", "--kind", "periodic", "--n", "8760", "--noise-sd", "0.5", "-o", str(p)])
        o = tmp_path / "m.json"
        assert main(["train", "--input", str(p), "--model", "forest", "--trees", "1", "--lag", "72",
                     "--workers", "1", "-o", str(o)]) == EXIT_OK
        assert load_run(o)["embedded_rows"] == 8688

    def test_config_file_under_flags(self, mg_csv, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# forest settings\nmodel=forest\ntrees=3\nlag=6\nseed=9\n", encoding="utf-8")
        o = tmp_path / "m.json"
        assert main(["train", "--config", str(cfg), "--input", str(mg_csv), "--trees", "2",
                     "--workers", "1", "-o", str(o)]) == EXIT_OK
        m = load_model(o)
        assert m.kind == "forest" and len(m.trees) == 2 and m.lag == 6 and m.config.seed == 9

    def test_bad_config_key(self, mg_csv, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nonsense=1\n", encoding="utf-8")
        assert main(["train", "--config", str(cfg), "--input", str(mg_csv), "-o",
                     str(tmp_path / "m.json")]) == EXIT_ARGUMENT

    def test_lag_too_long_is_data_error(self, tmp_path):
        p = tmp_path / "short.csv"
        main(["generate", "--kind", "ar1", "--n", "10", "-o", str(p)])
        assert main(["train", "--input", str(p), "--lag", "20", "-o", str(tmp_path / "m.json")]) == EXIT_DATA

    def test_gap_is_data_error(self, tmp_path):
        p = tmp_path / "gap.csv"
        p.write_text("index,speed_ms\n0,1.0\n2,2.0\n", encoding="utf-8")
        assert main(["train", "--input", str(p), "--lag", "1", "-o", str(tmp_path / "m.json")]) == EXIT_DATA


class TestForecast:
    def test_csv_output(self, svr_model, mg_csv, tmp_path):
        o = tmp_path / "f.csv"
        assert main(["forecast", "--model-file", str(svr_model), "--input", str(mg_csv),
                     "--origin", "299", "--horizon", "6", "-o", str(o)]) == EXIT_OK
        r = rows(o)
        assert r[0] == ["step", "predicted_ms"] and [x[0] for x in r[1:]] == list("123456")
        m = load_model(svr_model)
        v = read_csv(mg_csv).values
        assert float(r[1][1]) == m.predict(v[288:300])

    def test_horizon_zero(self, svr_model, mg_csv):
        assert main(["forecast", "--model-file", str(svr_model), "--input", str(mg_csv),
                     "--horizon", "0"]) == EXIT_ARGUMENT

    def test_origin_without_history(self, svr_model, mg_csv):
        assert main(["forecast", "--model-file", str(svr_model), "--input", str(mg_csv),
                     "--origin", "3"]) == EXIT_DATA

    def test_corrupt_model(self, mg_csv, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"format": "something"}', encoding="utf-8")
        assert main(["forecast", "--model-file", str(bad), "--input", str(mg_csv)]) == EXIT_DATA


class TestEvaluate:
    def test_perfect_replay_gives_all_hundred(self, mg_csv, tmp_path):
        # an unpruned single tree on the full series memorizes every window exactly
        model = tmp_path / "exact.json"
        assert main(["train", "--input", str(mg_csv), "--model", "forest", "--trees", "1", "--lag", "8",
                     "--mtry", "8", "--min-leaf", "1", "--no-bootstrap", "--workers", "1",
                     "-o", str(model)]) == EXIT_OK
        out = tmp_path / "ev"
        assert main(["evaluate", "--model-file", str(model), "--test", f"site={mg_csv}",
                     "--horizon", "12", "--stride", "5", "--out-dir", str(out)]) == EXIT_OK
        r = rows(out / "threshold_pct.csv")
        assert r[0] == ["horizon", "pct_below_1.5", "pct_below_2.5", "pct_below_3.5"]
        assert len(r) == 13 and all(float(x) == 100.0 for row in r[1:] for x in row[1:])
        rep = json.loads((out / "report.json").read_text())
        assert rep["metadata"]["test_label"] == "site"
        assert rep["effective_config"]["horizon"] == 12
        assert max(rep["mean_rmse_curve"]) == 0.0

    def test_repeat_runs_identical(self, svr_model, mg_csv, tmp_path):
        outs = []
        for name in ("a", "b"):
            d = tmp_path / name
            assert main(["evaluate", "--model-file", str(svr_model), "--test", str(mg_csv), "--horizon", "4",
                         "--stride", "10", "--matrix-csv", "--out-dir", str(d)]) == EXIT_OK
            outs.append(d)
        for f in ("report.json", "report_per_origin.csv", "mean_rmse.csv", "threshold_pct.csv"):
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()

    def test_test_too_short(self, svr_model, tmp_path):
        p = tmp_path / "tiny.csv"
        main(["generate", "--n", "20", "-o", str(p)])
        assert main(["evaluate", "--model-file", str(svr_model), "--test", str(p),
                     "--out-dir", str(tmp_path / "o")]) == EXIT_DATA

    def test_crosseval_two_by_two(self, mg_csv, svr_model, tmp_path):
        other = tmp_path / "other.csv"
        main(["generate", "--n", "400", "--seed", "8", "-o", str(other)])
        m2 = tmp_path / "m2.json"
        assert main(["train", "--input", str(other), "--lag", "12", "--label", "B", "-o", str(m2)]) == EXIT_OK
        out = tmp_path / "cx"
        assert main(["crosseval", "--train-model", f"A={svr_model}", "--train-model", str(m2),
                     "--test", f"A={mg_csv}", "--test", f"B={other}", "--horizon", "6",
                     "--stride", "25", "--workers", "1", "--out-dir", str(out)]) == EXIT_OK
        reports = sorted(p.name for p in out.glob("report_*.json"))
        assert reports == ["report_A__A.json", "report_A__B.json", "report_B__A.json", "report_B__B.json"]
        header = rows(out / "mean_rmse.csv")[0]
        assert header == ["horizon", "A->A", "A->B", "B->A", "B->B"]
        assert len(rows(out / "threshold_pct.csv")) == 7

    def test_crosseval_lag_mismatch(self, mg_csv, svr_model, tmp_path):
        m2 = tmp_path / "m2.json"
        main(["train", "--input", str(mg_csv), "--lag", "5", "-o", str(m2)])
        assert main(["crosseval", "--train-model", f"A={svr_model}", "--train-model", f"B={m2}",
                     "--test", str(mg_csv), "--out-dir", str(tmp_path / "o")]) == EXIT_ARGUMENT


def test_help_lists_exit_codes(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "exit codes" in capsys.readouterr().out
