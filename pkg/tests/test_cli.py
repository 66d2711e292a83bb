import csv
import json

import numpy as np
import pytest

from exposim import config as cfgmod
from exposim.cli import COMPARE_COLUMNS, SUMMARY_COLUMNS, compare_runs, inspect_round, main
from exposim.metrics import position_weights


@pytest.fixture
def data_file(tmp_path):
    rng = np.random.default_rng(0)
    lines = []
    for u in range(1, 31):
        for i in rng.choice(np.arange(1, 51), rng.integers(5, 12), replace=False):
            lines.append(f"{u}::{i}::{rng.integers(1, 6)}::0")
    p = tmp_path / "ratings.dat"
    p.write_text("\n".join(lines) + "\n")
    return p


def run_cli(data_file, out, *extra, T=3, pipeline="mf"):
    return main(["run", "-q", "--set", f"dataset={data_file}", "--set", f"output_dir={out}",
                 "--set", f"T={T}", "--set", f"pipeline={pipeline}", "--set", "K=5", "--set", "L=15",
                 "--set", "d=4", "--set", "epochs=3", *extra])


class TestRun:
    def test_smoke(self, data_file, tmp_path):
        assert run_cli(data_file, tmp_path / "r", T=5) == 0
        rows = list(csv.reader(open(tmp_path / "r" / "rounds.csv")))
        assert rows[0] == ["round", "ndcg", "agg_div", "cum_agg_div", "ee", "cum_ee", "discrepancy", "clicks"]
        assert len(rows) == 6
        manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
        assert manifest["rounds_completed"] == 5
        assert set(manifest) >= {"run_id", "config_hash", "dataset_fingerprint", "rounds_completed", "wall_time"}

    def test_config_file(self, data_file, tmp_path):
        conf = tmp_path / "base.toml"
        conf.write_text(f'dataset = "{data_file}"\nK = 5\nL = 15\nd = 4\nepochs = 2\n')
        out = tmp_path / "r"
        assert main(["run", "-q", "--config", str(conf), "--set", "T=2", "--set", f"output_dir={out}"]) == 0
        assert json.loads((out / "config.json").read_text())["epochs"] == 2

    def test_unknown_key(self, data_file, tmp_path, capsys):
        assert run_cli(data_file, tmp_path / "r", "--set", "foo=1") == 2
        assert "'foo'" in capsys.readouterr().err

    def test_bad_value(self, data_file, tmp_path, capsys):
        assert run_cli(data_file, tmp_path / "r", "--set", "alpha=0.3") == 2
        assert run_cli(data_file, tmp_path / "r", "--set", "K=abc") == 2
        assert "'K'" in capsys.readouterr().err

    def test_existing_dir_needs_force(self, data_file, tmp_path):
        assert run_cli(data_file, tmp_path / "r", T=1) == 0
        assert run_cli(data_file, tmp_path / "r", T=1) == 2
        assert run_cli(data_file, tmp_path / "r", "--force", T=1) == 0

    def test_resume_extends(self, data_file, tmp_path):
        assert run_cli(data_file, tmp_path / "full", T=3, pipeline="mf+dm-dynamic") == 0
        assert run_cli(data_file, tmp_path / "part", T=2, pipeline="mf+dm-dynamic") == 0
        assert run_cli(data_file, tmp_path / "part", "--resume", T=3, pipeline="mf+dm-dynamic") == 0
        assert (tmp_path / "full" / "rounds.csv").read_bytes() == (tmp_path / "part" / "rounds.csv").read_bytes()
        assert run_cli(data_file, tmp_path / "part", "--resume", "--set", "seed=9", T=3,
                       pipeline="mf+dm-dynamic") == 2

    def test_env_override(self, data_file, tmp_path, monkeypatch):
        monkeypatch.setenv("EXPOSIM_T", "2")
        assert main(["run", "-q", "--set", f"dataset={data_file}", "--set", f"output_dir={tmp_path / 'r'}",
                     "--set", "K=5", "--set", "L=15", "--set", "d=4", "--set", "epochs=2"]) == 0
        assert len((tmp_path / "r" / "rounds.csv").read_text().splitlines()) == 3

    def test_missing_dataset(self, tmp_path):
        assert run_cli(tmp_path / "nope.dat", tmp_path / "r") == 2


@pytest.fixture
def three_runs(data_file, tmp_path):
    dirs = []
    for p in ("mf", "mf+dm-static", "mf+dm-dynamic"):
        d = tmp_path / p.replace("+", "_")
        assert run_cli(data_file, d, T=3, pipeline=p) == 0
        dirs.append(d)
    return dirs


class TestCompare:
    def test_shape_and_golden_columns(self, three_runs, tmp_path, capsys):
        assert main(["compare", *map(str, three_runs), "--out", str(tmp_path / "cmp")]) == 0
        summary = list(csv.reader(open(tmp_path / "cmp" / "summary.csv")))
        assert summary[0] == ["pipeline", "final_cum_ee", "final_cum_agg_div", "mean_ndcg"]
        assert [r[0] for r in summary[1:]] == ["mf", "mf+dm-static", "mf+dm-dynamic"]
        merged = list(csv.reader(open(tmp_path / "cmp" / "compare.csv")))
        assert merged[0] == ["pipeline", "round", "ndcg", "agg_div", "cum_agg_div", "ee", "cum_ee",
                             "discrepancy", "clicks"]
        assert len(merged) == 1 + 9
        assert COMPARE_COLUMNS == merged[0] and SUMMARY_COLUMNS == summary[0]
        assert "mf+dm-dynamic" in capsys.readouterr().out

    def test_one_dir(self, three_runs):
        assert main(["compare", str(three_runs[0])]) == 2

    def test_different_lengths_truncate(self, three_runs, data_file, tmp_path):
        short = tmp_path / "short"
        assert run_cli(data_file, short, T=2, pipeline="mf+dm-static") == 0
        merged, summary, warnings = compare_runs([three_runs[0], short])
        assert warnings and "first 2 rounds" in warnings[0]
        assert len(merged) == 4

    def test_fingerprint_mismatch(self, three_runs, tmp_path):
        other = tmp_path / "other.dat"
        other.write_text("1::1::5::0\n1::2::5::0\n2::1::3::0\n")
        d = tmp_path / "other_run"
        assert main(["run", "-q", "--set", f"dataset={other}", "--set", f"output_dir={d}", "--set", "T=1",
                     "--set", "K=1", "--set", "L=1", "--set", "d=2", "--set", "epochs=1"]) == 0
        assert main(["compare", str(three_runs[0]), str(d)]) == 2


class TestInspect:
    def test_round_one_dynamic_targets_equal_static(self, three_runs):
        dyn = inspect_round(three_runs[2], 1)
        stat = inspect_round(three_runs[1], 1)
        assert dyn["targets"] == stat["targets"] and dyn["targets"]

    def test_round_beyond_completion(self, three_runs):
        assert main(["inspect", str(three_runs[2]), "--round", "4"]) == 2
        assert main(["inspect", str(three_runs[2]), "--round", "3"]) == 0

    def test_most_exposed_audit(self, three_runs, capsys):
        # recompute cumulative exposure from the dumped lists, independent of the ledger
        run_dir = three_runs[2]
        w = position_weights(5)
        cum = {}
        for line in (run_dir / "lists.jsonl").read_text().splitlines():
            rec = json.loads(line)
            if rec["round"] > 2:
                continue
            for lst in rec["lists"].values():
                for k, item in enumerate(lst):
                    cum[item] = cum.get(item, 0.0) + w[k]
        report = inspect_round(run_dir, 2)
        for item, value in report["most_exposed"]:
            assert value == pytest.approx(cum.get(item, 0.0), abs=1e-9)
        assert report["most_exposed"][0][1] == pytest.approx(max(cum.values()), abs=1e-9)
        assert main(["inspect", str(run_dir), "--round", "2", "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["round"] == 2

    def test_discrepancy_breakdown(self, three_runs):
        d = inspect_round(three_runs[1], 2)["discrepancy"]
        assert d["total"] == d["over_target"] + d["under_target"]


class TestConfigHash:
    def test_reordering_and_whitespace(self, tmp_path):
        a = tmp_path / "a.toml"
        b = tmp_path / "b.toml"
        a.write_text("K = 5\nL = 15\nseed = 3\n")
        b.write_text("seed=3\n\n   L = 15\nK=5\n")
        ha = cfgmod.config_hash(cfgmod.resolve(cfgmod.read_file(a), environ={}))
        hb = cfgmod.config_hash(cfgmod.resolve(cfgmod.read_file(b), environ={}))
        assert ha == hb
        hc = cfgmod.config_hash(cfgmod.resolve({"K": 5, "L": 15, "seed": 4}, environ={}))
        assert hc != ha

    def test_nested_tables_rejected(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[mf]\nd = 4\n")
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.read_file(p)

    def test_precedence(self):
        cfg = cfgmod.resolve({"T": 10}, {"T": "7"}, environ={"EXPOSIM_T": "8", "EXPOSIM_K": "4"})
        assert cfg["T"] == 7 and cfg["K"] == 4
        assert cfgmod.resolve(environ={})["output_dir"] == "runs/mf"


def test_dataset_stats(data_file, capsys):
    assert main(["dataset-stats", str(data_file)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["users"] == 30 and stats["duplicates_dropped"] == 0
    assert main(["dataset-stats", str(data_file) + ".missing"]) == 2


def test_presets():
    assert cfgmod.preset_names() == ["desk", "long"]
    desk = cfgmod.resolve(cfgmod.read_file("desk"), environ={})
    assert (desk["T"], desk["K"], desk["L"], desk["alpha"]) == (50, 10, 40, -0.5)
    assert cfgmod.resolve(cfgmod.read_file("long"), environ={})["T"] == 600
