import json
from pathlib import Path

import pytest

from cld.cli import main


def run(args):
    return main([str(a) for a in args])


def dir_bytes(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


FAST_SPEC = {"n_train": 100, "n_val": 40, "n_query": 20, "n_reference": 1000}


@pytest.fixture()
def spec_file(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(FAST_SPEC))
    return p


@pytest.fixture()
def logdir(tmp_path, spec_file):
    out = tmp_path / "run"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 12}))
    assert run(["train-synth", "--spec", spec_file, "--config", cfg, "--out", out, "--seed", 5]) == 0
    return out


class TestTrainSynth:
    def test_writes_logs(self, logdir):
        assert {p.name for p in logdir.iterdir()} == {"manifest.json", "train.csv", "validation.csv"}

    def test_same_seed_byte_identical(self, tmp_path, spec_file):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["train-synth", "--spec", spec_file, "--out", a, "--seed", 7])
        run(["train-synth", "--spec", spec_file, "--out", b, "--seed", 7])
        assert dir_bytes(a) == dir_bytes(b)

    def test_zero_epochs_fails_before_writing(self, tmp_path, spec_file, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 0}))
        out = tmp_path / "never"
        assert run(["train-synth", "--spec", spec_file, "--config", cfg, "--out", out]) == 2
        assert not out.exists()
        assert "error" in capsys.readouterr().err

    def test_snapshots_flag(self, tmp_path, spec_file):
        out = tmp_path / "snap"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 3}))
        run(["train-synth", "--spec", spec_file, "--config", cfg, "--out", out, "--snapshots"])
        lines = (out / "snapshots.csv").read_text().strip().split("\n")
        assert len(lines) == 5  # header + checkpoints 0..3

    def test_env_var_provides_default_seed(self, tmp_path, spec_file, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("CLD_SEED", "7")
        run(["train-synth", "--spec", spec_file, "--out", a])
        monkeypatch.delenv("CLD_SEED")
        run(["train-synth", "--spec", spec_file, "--out", b, "--seed", 7])
        assert dir_bytes(a) == dir_bytes(b)


class TestScoreAndSelect:
    def test_score_deterministic_bytes(self, tmp_path, logdir):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["score", logdir, "--out", a]) == 0
        assert run(["score", logdir, "--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_score_modes_and_subsample(self, tmp_path, logdir):
        full, sub = tmp_path / "full.csv", tmp_path / "sub.csv"
        run(["score", logdir, "--out", full])
        assert run(["score", logdir, "--subsample", "stride=2", "--out", sub]) == 0
        assert full.exists() and sub.exists()
        assert run(["score", logdir, "--mode", "global", "--out", tmp_path / "g.csv"]) == 0

    def test_select_fraction_size(self, tmp_path, logdir):
        scores = tmp_path / "s.csv"
        run(["score", logdir, "--out", scores])
        out = tmp_path / "cs.csv"
        assert run(["select", scores, "--fraction", 0.1, "--out", out]) == 0
        rows = out.read_text().strip().split("\n")[1:]
        assert len(rows) == 10  # round(0.1 * 100)

    def test_select_per_class_quotas(self, tmp_path, logdir):
        scores = tmp_path / "s.csv"
        run(["score", logdir, "--out", scores])
        out = tmp_path / "cs.csv"
        assert run(["select", scores, "--per-class", "0=3,1=2", "--out", out]) == 0
        meta = json.loads(out.with_suffix(".json").read_text())
        assert meta["quotas"] == {"0": 3, "1": 2}

    def test_select_ccs(self, tmp_path, logdir):
        scores = tmp_path / "s.csv"
        run(["score", logdir, "--out", scores])
        out = tmp_path / "ccs.csv"
        assert run(["select", scores, "--method", "ccs", "--total", 20,
                    "--bins", 5, "--prune", 0.1, "--seed", 1, "--out", out]) == 0
        meta = json.loads(out.with_suffix(".json").read_text())
        assert meta["provenance"] == "ccs_stratified" and meta["size"] == 20

    def test_select_requires_exactly_one_budget(self, tmp_path, logdir):
        scores = tmp_path / "s.csv"
        run(["score", logdir, "--out", scores])
        with pytest.raises(SystemExit):
            run(["select", scores, "--out", tmp_path / "x.csv"])

    def test_score_mae_identity(self, tmp_path, logdir, capsys):
        scores = tmp_path / "s.csv"
        run(["score", logdir, "--out", scores])
        capsys.readouterr()
        assert run(["score-mae", scores, scores, "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["mae"] == 0.0


class TestSubsample:
    def test_round_trip(self, tmp_path, logdir):
        out = tmp_path / "sub"
        assert run(["subsample", logdir, "--plan", "stride=2", "--out", out]) == 0
        header = (out / "train.csv").read_text().split("\n", 1)[0]
        assert header.startswith("sample_id,label,loss_0,loss_2")

    def test_missing_input(self, tmp_path, capsys):
        assert run(["subsample", tmp_path / "nope", "--plan", "stride=2",
                    "--out", tmp_path / "o"]) == 2
        assert "error" in capsys.readouterr().err


class TestCost:
    def test_cld_table_prints_expected_total(self, capsys):
        assert run(["cost", "--method", "CLD"]) == 0
        out = capsys.readouterr().out
        assert "904.821" in out

    def test_json_all_methods(self, capsys):
        assert run(["cost", "--method", "all", "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload) == 17
        by_name = {r["method"]: r for r in payload}
        assert by_name["CLD"]["total"] == pytest.approx(904.821, abs=1e-3)
        assert by_name["GraphCut"]["storage_bytes"]["half"] == 3_217_493_031_852

    def test_unit_flag(self, capsys):
        assert run(["cost", "--method", "CLD", "--unit", "1e18", "--format", "csv"]) == 0
        line = capsys.readouterr().out.strip().split("\n")[1]
        assert line.split(",")[1] == "0.905"

    def test_param_override(self, capsys):
        assert run(["cost", "--method", "AUM", "--param", "coreset_size=0",
                    "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        terms = payload[0]["flop_terms"]
        assert terms["coreset training (large model)"] == 0


class TestHarnessCommands:
    def test_theory_check_passes(self, capsys):
        assert run(["theory-check", "--train-size", 400, "--epochs", 15, "--seed", 0]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 3 and "FAIL" not in out

    def test_theory_check_json_report(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        assert run(["theory-check", "--train-size", 400, "--epochs", 12,
                    "--format", "json", "--out", report]) == 0
        payload = json.loads(report.read_text())
        assert payload["checks"]["per-step descent inequality within 1e-9"]

    def test_lds_two_subsets(self, capsys):
        assert run(["lds", "--subsets", 2, "--train-size", 120, "--epochs", 10,
                    "--retrain-seeds", "11", "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        for row in payload["per_query"]:
            assert row["lds"] in (-1.0, 1.0, None)

    def test_lds_writes_outputs(self, tmp_path):
        out = tmp_path / "lds"
        assert run(["lds", "--subsets", 3, "--train-size", 120, "--epochs", 8,
                    "--retrain-seeds", "1,2", "--out", out]) == 0
        assert (out / "lds.csv").exists() and (out / "lds.json").exists()

    def test_brittleness_outputs(self, tmp_path, capsys):
        out = tmp_path / "b"
        assert run(["brittleness", "--train-size", 120, "--epochs", 10,
                    "--retrain-seeds", "1,2", "--k", "0,12", "--out", out]) == 0
        payload = json.loads((out / "brittleness.json").read_text())
        assert payload["k_values"] == [0, 12]
        assert set(payload["flip_fraction"]) == {"cld_topk", "random"}
