import json
import subprocess
import sys

import jsonschema
import pandas as pd
import pytest

from lendgraph.cli import (EXIT_CONFIG, EXIT_OK, EXIT_STAGE, REPORT_SCHEMA, ConfigError,
                           PipelineConfig, main, report_ladder)

TINY = {"n_borrowers": 60, "n_contacts": 1500, "pings_per_borrower": 30.0, "region_km": 3.0}


def write_config(path, **kw):
    cfg = {"simulate": TINY, "perturb_trials": 5, "out_dir": str(path.parent / "run"), **kw}
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_config(base / "pipeline.json")
    assert main(["run", "--config", str(cfg), "--seed", "3"]) == EXIT_OK
    return base / "run"


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    gen = d / "gen.json"
    gen.write_text(json.dumps(TINY))
    assert main(["simulate", "--config", str(gen), "--seed", "1", "--out-dir", str(d)]) == 0
    return d


class TestRun:
    def test_outputs(self, run_dir):
        for name in ("manifest.json", "timings.json", "edges.csv", "metrics.csv", "locfeat.csv",
                     "rows.csv", "rows.schema.json", "ladder.json", "selection.json", "cv.json",
                     "ziptest.json", "influence.json", "scalefree.json", "report.txt",
                     "cleaning_report.json", "fits/all.json", "fits/default.json",
                     "fits/graph_location.json", "input/comms.csv", "input/gen.json"):
            assert (run_dir / name).is_file(), name

    def test_manifest(self, run_dir):
        man = json.loads((run_dir / "manifest.json").read_text())
        assert man["status"] == "ok"
        assert [s["stage"] for s in man["stages"]] == [
            "simulate", "ingest", "graph", "scalefree", "geo", "join", "fit", "select", "cv",
            "ziptest", "influence", "report"]
        rc = man["row_counts"]
        assert rc["loans"] == rc["metric_rows"] == 60
        assert rc["rows"] == len(pd.read_csv(run_dir / "rows.csv"))
        assert man["seeds"] == {"pipeline": 3, "generator": 3}
        assert "rows.csv" in man["files"] and "manifest.json" not in man["files"]
        for stage in man["stages"]:
            assert "seconds" not in stage

    def test_report_schema(self, run_dir, capsys):
        assert main(["report", "--run-dir", str(run_dir), "--format", "json"]) == 0
        summary = json.loads(capsys.readouterr().out)
        jsonschema.validate(summary, REPORT_SCHEMA)
        lad = summary["ladder"]
        assert [r["adj_r2"] for r in lad] == sorted(r["adj_r2"] for r in lad)
        assert next(r for r in lad if r["spec"] == "naive")["adj_r2"] == 0.0
        assert json.loads((run_dir / "report.json").read_text()) == summary

    def test_report_text(self, run_dir, capsys):
        assert main(["report", "--run-dir", str(run_dir)]) == 0
        text = capsys.readouterr().out
        assert "naive" in text and "0.0000" in text and "Cook's distance" in text

    def test_report_incomplete_dir(self, tmp_path):
        with pytest.raises(ConfigError):
            report_ladder(tmp_path)
        assert main(["report", "--run-dir", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_input_no_outputs(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "p.json", comms="nope.csv", loans="nope.csv",
                           pings="nope.csv", pois="nope.csv", out_dir=str(out))
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert not out.exists()

    def test_partial_inputs_rejected(self, tmp_path, dataset):
        cfg = write_config(tmp_path / "p.json", comms=str(dataset / "comms.csv"),
                           out_dir=str(tmp_path / "out"))
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        (tmp_path / "p.json").write_text('{"radius": 50}')
        assert main(["run", "--config", str(tmp_path / "p.json")]) == EXIT_CONFIG

    def test_stage_failure_recorded(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "p.json", cv_k=10**6, out_dir=str(out))
        assert main(["run", "--config", str(cfg)]) == EXIT_STAGE
        man = json.loads((out / "manifest.json").read_text())
        assert man["status"] == "failed" and man["failed_stage"] == "cv"
        assert man["stages"][-1]["status"] == "failed"

    def test_existing_inputs(self, tmp_path, dataset):
        out = tmp_path / "out"
        cfg = PipelineConfig(**{k: str(dataset / f"{k}.csv")
                                for k in ("comms", "loans", "pings", "pois")},
                             perturb_trials=0, out_dir=str(out))
        (tmp_path / "p.json").write_text(json.dumps(cfg.to_dict()))
        assert main(["run", "--config", str(tmp_path / "p.json")]) == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["stages"][0]["stage"] == "ingest"


@pytest.fixture(scope="module")
def staged(dataset, tmp_path_factory):
    d = tmp_path_factory.mktemp("stages")
    loans = str(dataset / "loans.csv")
    assert main(["ingest", "--comms", str(dataset / "comms.csv"), "--loans", loans,
                 "--out-dir", str(d)]) == 0
    assert main(["graph", "--edges", str(d / "edges.csv"), "--loans", loans,
                 "--out", str(d / "metrics.csv")]) == 0
    assert main(["geo", "--pings", str(dataset / "pings.csv"), "--pois",
                 str(dataset / "pois.csv"), "--loans", loans, "--radius", "50",
                 "--out", str(d / "locfeat.csv")]) == 0
    assert main(["join", "--loans", loans, "--metrics", str(d / "metrics.csv"),
                 "--locfeat", str(d / "locfeat.csv"), "--out", str(d / "rows.csv")]) == 0
    return d


class TestSubcommands:
    def test_ingest_outputs(self, staged):
        rep = json.loads((staged / "cleaning_report.json").read_text())
        assert rep["rejected_count"] == 0 and rep["raw_count"] == rep["kept_count"]
        assert len(pd.read_csv(staged / "edges.csv")) > 0

    def test_metrics(self, staged):
        m = pd.read_csv(staged / "metrics.csv")
        assert list(m.columns) == ["borrower_id", "out_edges", "in_edges", "triads", "eigen",
                                   "farness", "dur"]
        assert len(m) == 60

    def test_rows_schema(self, staged):
        schema = json.loads((staged / "rows.schema.json").read_text())
        assert "profit" in json.dumps(schema)

    @pytest.mark.parametrize("spec", ["naive", "graph", "location", "baseline", "all",
                                      "default"])
    def test_fit(self, staged, spec):
        out = staged / f"fit_{spec}.json"
        assert main(["fit", "--rows", str(staged / "rows.csv"), "--spec", spec,
                     "--out", str(out)]) == 0
        fit = json.loads(out.read_text())
        assert {"estimate", "std_error", "t", "p", "stars"} <= set(fit["coefficients"][0])
        if spec == "naive":
            assert fit["adj_r_squared"] == 0.0

    def test_select_then_cv(self, staged):
        sel = staged / "sel.json"
        assert main(["select", "--rows", str(staged / "rows.csv"), "--direction", "backward",
                     "--out", str(sel)]) == 0
        res = json.loads(sel.read_text())
        assert res["final_aic"] <= res["initial_aic"]
        cv = staged / "cv.json"
        assert main(["cv", "--rows", str(staged / "rows.csv"), "--k", "5", "--seed", "2",
                     "--selection", str(sel), "--out", str(cv)]) == 0
        out = json.loads(cv.read_text())
        assert out["full"]["k"] == 5 and "mse_ratio" in out

    def test_ziptest(self, staged, capsys):
        assert main(["ziptest", "--rows", str(staged / "rows.csv")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["n"] == 60 and "z" in out["zip_vs_poisson"]

    def test_influence(self, staged, capsys):
        assert main(["influence", "--rows", str(staged / "rows.csv"), "--top", "5"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert len(out["table"]) <= 5

    def test_scalefree(self, staged):
        out = staged / "sf.json"
        assert main(["scalefree", "--edges", str(staged / "edges.csv"), "--trials", "3",
                     "--seed", "1", "--out", str(out)]) == 0
        res = json.loads(out.read_text())
        assert res["alpha"] > 1 and len(res["perturbed_alphas"]) == 3

    def test_byte_identical_reruns(self, staged):
        a, b = staged / "a.json", staged / "b.json"
        for p in (a, b):
            assert main(["fit", "--rows", str(staged / "rows.csv"), "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_file_exit_code(self, tmp_path):
        assert main(["fit", "--rows", str(tmp_path / "none.csv"), "--out",
                     str(tmp_path / "f.json")]) == EXIT_CONFIG
        assert not (tmp_path / "f.json").exists()

    def test_simulate_override(self, tmp_path):
        gen = tmp_path / "gen.json"
        gen.write_text(json.dumps(TINY))
        assert main(["simulate", "--config", str(gen), "--n-borrowers", "20",
                     "--out-dir", str(tmp_path)]) == 0
        assert len(pd.read_csv(tmp_path / "loans.csv")) == 20

    def test_simulate_bad_config(self, tmp_path):
        gen = tmp_path / "gen.json"
        gen.write_text('{"p_sms": 2}')
        assert main(["simulate", "--config", str(gen), "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "lendgraph.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for cmd in ("ingest", "graph", "scalefree", "geo", "fit", "select", "cv", "ziptest",
                "influence", "simulate", "run", "report"):
        assert cmd in res.stdout
