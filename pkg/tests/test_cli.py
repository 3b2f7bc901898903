import json
import math
import subprocess
import sys

import pytest

from plcrelay.cli import _parse_values, _sci, main
from plcrelay.experiments import (METRIC_COLUMNS, ResultTable, ValidationError,
                                  column, isfinite_table, list_presets, preset_mapping,
                                  run_experiment, spec_from_mapping)


def small(**kw):
    base = dict(sweep_values=[40.0, 50.0], metrics=["outage", "usage"], trials=5000, seed=3)
    base.update(kw)
    return spec_from_mapping(base)


class TestTables:
    def test_csv_round_trip(self):
        t = run_experiment(small())
        back = ResultTable.from_csv(t.to_csv())
        assert back.columns == METRIC_COLUMNS
        assert back.rows == [tuple(r) for r in t.rows]

    def test_json_round_trip(self):
        t = run_experiment(small(metrics=["capacity", "ber"], strategies=["idf", "df"]))
        back = ResultTable.from_json(t.to_json())
        assert back.rows == [tuple(r) for r in t.rows]
        assert back.metadata["spec"]["metrics"] == ["capacity", "ber"]

    def test_rows_and_oracle_columns(self):
        t = run_experiment(small())
        assert len(t.rows) == 2 * 2 * 2 * 2
        mc = column(t, "stderr", method="monte_carlo")
        assert all(v is not None and v >= 0 for v in mc)
        assert column(t, "stderr", method="closed_form") == [None] * 8
        assert isfinite_table(t)

    def test_no_oracle(self):
        t = run_experiment(small(oracle=False))
        assert set(column(t, "method")) == {"closed_form"}

    def test_workers_do_not_change_output(self):
        assert run_experiment(small()).to_csv() == run_experiment(small(workers=3)).to_csv()

    def test_single_point_sweep(self):
        t = run_experiment(spec_from_mapping({"p_t_db": 45.0, "trials": 100}))
        assert column(t, "x") == [45.0] * 4

    def test_series_override(self):
        spec = small(series=[{"label": "a", "set": {"xi_db": 2}}, {"label": "b", "set": {"xi_db": 3}}],
                     oracle=False, metrics=["outage"])
        t = run_experiment(spec)
        a = column(t, "value", series="a", strategy="idf")
        b = column(t, "value", series="b", strategy="idf")
        assert all(x < y for x, y in zip(a, b))


class TestValidation:
    @pytest.mark.parametrize("data", [
        {"metrics": []},
        {"metrics": ["throughput"]},
        {"strategies": ["amplify"]},
        {"sweep_param": "colour"},
        {"sweep_values": [50.0, 40.0]},
        {"nonsense": 1},
        {"fit": "mine"},
        {"trials": 0},
        {"kind": "other"},
        {"series": []},
        {"series": [{"label": "x", "set": {"bogus": 1}}]},
        {"xi_db": [1.0, 2.0]},
    ])
    def test_rejects(self, data):
        with pytest.raises(ValidationError):
            spec_from_mapping(data)

    def test_error_names_valid_choices(self):
        with pytest.raises(ValidationError, match="outage"):
            spec_from_mapping({"metrics": ["throughput"]})

    def test_parse_values(self):
        assert _parse_values("20:30:2.5") == [20.0, 22.5, 25.0, 27.5, 30.0]
        assert _parse_values("1,4") == [1, 4]
        for bad in ("1:2", "3:1:1", "1:2:0", "a,b"):
            with pytest.raises(ValidationError):
                _parse_values(bad)

    def test_unknown_preset(self):
        with pytest.raises(ValidationError):
            preset_mapping("fig99")


class TestCommands:
    def test_analytic(self, capsys):
        assert main(["analytic", "--set", "p_t_db=45", "--metric", "outage"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == ",".join(METRIC_COLUMNS)
        assert len(out) == 3 and all("closed_form" in line for line in out[1:])

    def test_simulate_json(self, capsys):
        assert main(["simulate", "--set", "p_t_db=45", "--trials", "2000", "--format", "json",
                     "--metric", "usage", "--strategy", "isdf"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert [r[5] for r in rec["rows"]] == ["monte_carlo"]

    def test_sweep_to_file(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--param", "p_t_db", "--values", "40:50:5", "--trials", "1000",
                     "--out", str(out)]) == 0
        t = ResultTable.from_csv(out.read_text())
        assert sorted(set(column(t, "x"))) == [40.0, 45.0, 50.0]

    def test_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"p_t_db": 47.5, "metrics": ["outage"], "strategies": ["idf"]}))
        assert main(["analytic", "--config", str(cfg)]) == 0
        assert ",47.5," in capsys.readouterr().out

    def test_invalid_input_exit_codes(self, capsys):
        assert main(["analytic", "--metric", "throughput"]) == 1
        assert "valid" in capsys.readouterr().err
        assert main(["sweep", "--values", "5:1:1"]) == 1
        assert main(["reproduce", "fig99"]) == 1
        assert main(["analytic", "--set", "bogus"]) == 1
        assert main(["analytic", "--config", "/nonexistent.json"]) == 1
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_fit_q(self, capsys, tmp_path):
        out = tmp_path / "fit.json"
        code = main(["fit-q", "--target", "Q", "--terms", "7", "--out", str(out)])
        text = capsys.readouterr().out
        assert code == 0
        assert "paper: 7.264e-4" in text
        assert json.loads(out.read_text())["target"] == "Q"

    def test_fit_q_nonconverged_exit(self, capsys):
        assert main(["fit-q", "--terms", "2", "--restarts", "1", "--grid", "101"]) in (0, 2)
        assert main(["fit-q", "--terms", "0"]) == 1

    def test_optimize_power(self, capsys):
        assert main(["optimize-power", "--config", "/dev/null"]) == 1
        capsys.readouterr()
        assert main(["optimize-power", "--set", "p_t_db=50", "--set", "d0_m=200",
                     "--set", "p_l_db_per_km=80", "--set", "xi_db=4", "--set", "r_th=2",
                     "--format", "json"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert 0.5 < rec["p_star"] < 1.0
        assert rec["convexity_certified"] and rec["method"] == "bisection"
        assert main(["optimize-power", "--set", "p_f=0.3"]) == 0
        header, values = capsys.readouterr().out.splitlines()
        assert header.split(",")[0] == "p_star" and math.isfinite(float(values.split(",")[0]))

    def test_list_presets(self, capsys):
        assert main(["list-presets"]) == 0
        out = capsys.readouterr().out
        for name in ("fig3", "fig4", "fig5", "fig6", "fig7", "fig8a", "fig8b"):
            assert name in out
        assert list_presets() == sorted(list_presets())

    def test_power_preset(self, capsys):
        assert main(["reproduce", "fig8b", "--format", "json"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert len(rec["rows"]) == 5 * 99
        assert all(r[-1] is True for r in rec["rows"])

    def test_reproduce_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["reproduce", "fig4", "--trials", "3000", "--set", "p_t_db=50"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--workers", "4", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "plcrelay", "analytic", "--metric", "bogus"],
                             capture_output=True, text=True)
        assert res.returncode == 1
        assert "valid" in res.stderr


def test_sci():
    assert _sci(7.264e-4) == "7.264e-4"
    assert _sci(1.5) == "1.500e0"
    assert _sci(5.171e-4) == "5.171e-4"
