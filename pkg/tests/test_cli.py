import json
import os

import pytest

from vitalhmm.cli import main

SPEC = dict(n_patients=4, n_septic=2, septic_hours=73.0, control_hours=4.0, seed=11)

FAST = dict(
    repeats=1,
    max_train_frames_per_class=6,
    bw_max_iters=2,
    bw_tol=1e-2,
    flow_bw_max_iters=1,
    flow_bw_tol=1e-2,
    flow_mstep_steps=2,
    elm_hidden=20,
)


def write_config(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


@pytest.fixture()
def base_doc():
    return dict(data={"synthetic": dict(SPEC)}, **FAST)


class TestSynth:
    def test_writes_cohort(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", {"synthetic": dict(SPEC)})
        out = tmp_path / "cohort"
        assert main(["synth", "--config", cfg, "--out-dir", str(out)]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert reply["patients"] == 4
        assert reply["seed"] == 11
        names = sorted(os.listdir(out))
        assert "events.csv" in names
        assert sum(n.endswith("_signals.csv") for n in names) == 4

    def test_seed_flag_overrides(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", {"synthetic": dict(SPEC)})
        out = tmp_path / "cohort"
        main(["synth", "--config", cfg, "--out-dir", str(out), "--seed", "99"])
        assert json.loads(capsys.readouterr().out)["seed"] == 99

    def test_bad_spec_exits_two(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "c.json", {"synthetic": {"n_patients": 3, "n_septic": 3}}
        )
        code = main(["synth", "--config", cfg, "--out-dir", str(tmp_path / "x")])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"


class TestTrainEval:
    def run_train(self, tmp_path, capsys, cell):
        doc = dict(data={"synthetic": dict(SPEC)}, cell=cell, **FAST)
        cfg = write_config(tmp_path / "train.json", doc)
        out = tmp_path / "model_dir"
        assert main(["train", "--config", cfg, "--out-dir", str(out)]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert os.path.exists(reply["model"])
        return cfg, reply["model"]

    def test_train_then_eval_gmm(self, tmp_path, capsys):
        cell = {"family": "gmm_hmm", "feature": "raw",
                "params": {"states": 2, "components": 2}}
        cfg, model_path = self.run_train(tmp_path, capsys, cell)
        assert main(["eval", "--config", cfg, "--model", model_path]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert 0.0 <= reply["accuracy"] <= 1.0
        assert reply["n_frames"] > 0
        # trained and scored on the same full dataset: should separate well
        assert reply["accuracy"] > 0.9

    def test_train_then_eval_baseline(self, tmp_path, capsys):
        cell = {"family": "logreg", "feature": "pops"}
        cfg, model_path = self.run_train(tmp_path, capsys, cell)
        assert main(["eval", "--config", cfg, "--model", model_path]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert 0.0 <= reply["accuracy"] <= 1.0

    def test_missing_cell_section_exits_two(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "t.json", dict(data={"synthetic": dict(SPEC)}, **FAST)
        )
        assert main(["train", "--config", cfg, "--out-dir", str(tmp_path)]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_eval_rejects_unknown_format(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "e.json", dict(data={"synthetic": dict(SPEC)})
        )
        bogus = tmp_path / "bogus.json"
        bogus.write_text(json.dumps({"format": "zip"}))
        assert main(["eval", "--config", cfg, "--model", str(bogus)]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "ContractError"


class TestSweepReport:
    def test_sweep_writes_run_dir(self, tmp_path, capsys, base_doc):
        base_doc["families"] = ["logreg", "elm"]
        cfg = write_config(tmp_path / "s.json", base_doc)
        out = tmp_path / "runs"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert os.path.basename(reply["run_dir"]).startswith("run-")
        for key in ("csv", "markdown", "cells"):
            assert os.path.exists(reply[key])
        header = open(reply["csv"]).readline()
        assert header.startswith("model,feature,params,status,mean,std")

    def test_report_from_results(self, tmp_path, capsys, base_doc):
        base_doc["families"] = ["logreg"]
        cfg = write_config(tmp_path / "s.json", base_doc)
        main(["sweep", "--config", cfg, "--out-dir", str(tmp_path / "runs")])
        results = json.loads(capsys.readouterr().out)["csv"]
        rep_dir = tmp_path / "rep"
        assert main(["report", "--results", results,
                     "--out-dir", str(rep_dir)]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert reply["report"].endswith("report.md")
        text = open(reply["report"]).read()
        assert text.startswith("| model | feature | params | accuracy |")
        assert main(["report", "--results", results, "--out-dir", str(rep_dir),
                     "--format", "csv"]) == 0
        reply = json.loads(capsys.readouterr().out)
        assert reply["report"].endswith("report.csv")

    def test_report_missing_file_exits_one(self, tmp_path, capsys):
        code = main(["report", "--results", str(tmp_path / "nope.csv"),
                     "--out-dir", str(tmp_path)])
        assert code == 1

    def test_sweep_bad_config_exits_two(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.json", {"data": {}, "nonsense": True})
        assert main(["sweep", "--config", cfg,
                     "--out-dir", str(tmp_path / "runs")]) == 2

    def test_unreadable_config_exits_two(self, tmp_path, capsys):
        missing = tmp_path / "missing.json"
        assert main(["synth", "--config", str(missing),
                     "--out-dir", str(tmp_path)]) == 2
