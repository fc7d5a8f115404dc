import json
import os

import pytest

from gefzeros import cli
from gefzeros.zeros import ZeroFinderError


def run(tmp_path, command, config=None, *extra, name="out"):
    argv = [command, "--out", str(tmp_path / name), *extra]
    if config is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(config if isinstance(config, str) else json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv)


def read_dir(d):
    return {f: (d / f).read_bytes() for f in sorted(os.listdir(d)) if not f.startswith(".")}


class TestConfig:
    def test_unknown_key(self, tmp_path):
        assert run(tmp_path, "zeros", {"radius": 3.0, "radus": 2}) == 2

    def test_malformed_json(self, tmp_path):
        assert run(tmp_path, "zeros", "{not json") == 2

    def test_missing_file(self, tmp_path):
        assert cli.main(["zeros", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_wrong_type(self, tmp_path):
        assert run(tmp_path, "zeros", {"n_samples": "four"}) == 2
        assert run(tmp_path, "zeros", {"n_samples": True}) == 2

    def test_unknown_test_function(self, tmp_path):
        assert run(tmp_path, "variance", {"test_function": "wiggle", "R_values": [2.0]}) == 2

    def test_bad_seed_and_threads(self, tmp_path):
        assert run(tmp_path, "pair-correlation", None, "--seed", "-1") == 2
        assert run(tmp_path, "pair-correlation", None, "--threads", "0") == 2

    def test_unknown_command(self):
        assert cli.main(["frobnicate"]) == 2

    def test_default_config_only_for_verify(self, tmp_path):
        assert cli.main(["zeros", "--config", "default", "--out", str(tmp_path)]) == 2
        cfg = cli.load_config("verify", "default")
        assert cfg["disk16_samples"] == 4000 and cfg["seed"] == 20240601

    def test_numerical_failure_exit(self, tmp_path, monkeypatch):
        def boom(cfg, out):
            raise ZeroFinderError("argument principle mismatch")

        monkeypatch.setitem(cli.COMMANDS, "zeros", boom)
        assert run(tmp_path, "zeros") == 3


class TestArtifacts:
    def test_zeros_deterministic(self, tmp_path):
        cfg = {"n_samples": 2, "radius": 3.0}
        assert run(tmp_path, "zeros", cfg, "--seed", "11", name="a") == 0
        assert run(tmp_path, "zeros", cfg, "--seed", "11", name="b") == 0
        a, b = read_dir(tmp_path / "a"), read_dir(tmp_path / "b")
        assert a == b and set(a) == {"zeros.csv", "zeros_summary.json"}

    def test_provenance(self, tmp_path):
        assert run(tmp_path, "zeros", {"n_samples": 1, "radius": 2.0}, "--seed", "5") == 0
        text = (tmp_path / "out" / "zeros.csv").read_text()
        head = [ln for ln in text.splitlines() if ln.startswith("#")]
        assert "# package: gefzeros" in head and "# master_seed: 5" in head
        doc = json.loads((tmp_path / "out" / "zeros_summary.json").read_text())
        assert doc["provenance"]["master_seed"] == 5
        assert len(doc["provenance"]["config_sha256"]) == 64

    def test_seed_changes_output(self, tmp_path):
        cfg = {"n_samples": 1, "radius": 2.0}
        run(tmp_path, "zeros", cfg, "--seed", "1", name="a")
        run(tmp_path, "zeros", cfg, "--seed", "2", name="b")
        assert read_dir(tmp_path / "a")["zeros.csv"] != read_dir(tmp_path / "b")["zeros.csv"]

    def test_sample_with_zeros(self, tmp_path):
        assert run(tmp_path, "sample", {"n_samples": 2, "R_v": 6.0, "zeros_radius": 2.0}) == 0
        recs = json.loads((tmp_path / "out" / "samples.json").read_text())["body"]
        assert len(recs) == 2
        assert (tmp_path / "out" / "zeros.csv").exists()

    def test_variance_and_report(self, tmp_path):
        assert run(tmp_path, "variance", {"test_function": "indicator", "R_values": [2.0, 4.0],
                                          "perimeter": 6.283185307179586}) == 0
        assert (tmp_path / "out" / "variance.svg").read_text().startswith("<svg")
        assert run(tmp_path, "report", {"R_values": [2.0]}, name="rep") == 0
        consts = json.loads((tmp_path / "rep" / "constants.json").read_text())["body"]
        assert consts["M_sup"] > consts["ratio_lower"]

    def test_pair_correlation(self, tmp_path):
        assert run(tmp_path, "pair-correlation", {"n_points": 5}) == 0
        lines = (tmp_path / "out" / "pair_correlation.csv").read_text().splitlines()
        assert lines[5] == "r,d,with_intensity" and len(lines) == 11

    def test_normality_and_abnormal(self, tmp_path):
        assert run(tmp_path, "normality", {"R_values": [2.0], "n_samples": 100}) == 0
        assert (tmp_path / "out" / "normality_R2.svg").exists()
        assert run(tmp_path, "abnormal", {"R_values": [2.0], "n_samples": 100}, name="ab") == 0
        assert run(tmp_path, "normality", {"probe": "nope"}, name="bad") == 2

    def test_almost_indep(self, tmp_path):
        cfg = {"configurations": 2, "decorrelation_samples": 0}
        assert run(tmp_path, "almost-indep", cfg) == 0
        body = json.loads((tmp_path / "out" / "almost_indep.json").read_text())["body"]
        assert body["configurations"] == 2 and body["min_margin"] > 0
        bad = {"configuration": {"compacts": [{"rectangle": [0, 0, 1, 1]}, {"rectangle": [2, 0, 3, 1]}]}}
        assert run(tmp_path, "almost-indep", bad, name="bad") == 2


class TestVerify:
    def test_deterministic_criteria(self, tmp_path, capsys):
        assert run(tmp_path, "verify", {"criteria": [6, 7]}) == 0
        out = capsys.readouterr().out
        assert "PASS criterion  6" in out and "PASS criterion  7" in out
        verdict = json.loads((tmp_path / "out" / "verdict.json").read_text())["body"]
        assert verdict is not None
