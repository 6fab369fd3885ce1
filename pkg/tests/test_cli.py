import csv

import pytest

from atmas.cli import EXIT_CONFIG, EXIT_OK, EXIT_PROPERTY, main
from atmas.config import ScenarioConfig, to_dict

TINY = """
seed = 0
[dataset]
n_mu = 2
n_windows = 60
[forest]
n_trees = 5
[experiment]
n_seeds = 1
fractions = [0.2]
algorithms = ["forest"]
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return str(path)


class TestCli:
    def test_packaged_default_equals_code_default(self):
        from atmas.cli import default_config_path

        assert to_dict(ScenarioConfig.load(default_config_path())) == to_dict(ScenarioConfig())

    def test_sweep_illegal(self, tiny_cfg, tmp_path, capsys):
        out = tmp_path / "res"
        assert main(["sweep-illegal", "--config", tiny_cfg, "--out", str(out), "--tag", "t"]) == EXIT_OK
        rows = list(csv.DictReader(open(out / "illegal-access" / "t" / "rows.csv")))
        assert len(rows) == 1 and rows[0]["status"] == "ok"
        assert "acc=" in capsys.readouterr().out

    def test_sweep_combos_writes_ranking(self, tiny_cfg, tmp_path):
        out = tmp_path / "res"
        assert main(["sweep-combos", "--config", tiny_cfg, "--out", str(out), "--tag", "c"]) == EXIT_OK
        ranking = list(csv.DictReader(open(out / "factor-combo" / "c" / "ranking.csv")))
        assert len(ranking) == 84 and ranking[0]["rank"] == "1"

    def test_gen_dataset(self, tiny_cfg, tmp_path):
        out = tmp_path / "res"
        assert main(["gen-dataset", "--config", tiny_cfg, "--out", str(out), "--tag", "d", "--fraction", "0.5"]) == EXIT_OK
        lines = (out / "dataset" / "d" / "dataset.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 60

    def test_simulate(self, tiny_cfg, tmp_path):
        out = tmp_path / "res"
        assert main(["simulate", "--config", tiny_cfg, "--out", str(out), "--tag", "s"]) == EXIT_OK
        assert (out / "simulation" / "s" / "events.jsonl").exists()

    @pytest.mark.parametrize(
        "argv",
        [
            ["sweep-illegal", "--fractions", "0.99"],
            ["sweep-illegal", "--algorithms", "svm"],
            ["gen-dataset", "--fraction", "1.5"],
            ["simulate", "--config", "/nonexistent.toml"],
        ],
    )
    def test_config_errors(self, argv, tiny_cfg, tmp_path):
        extra = [] if "--config" in argv else ["--config", tiny_cfg]
        assert main([*argv, *extra, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_toml_value(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[dataset]\nn_windows = -3\n")
        assert main(["gen-dataset", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_protocol_suite_exit_codes(self, tiny_cfg, tmp_path, monkeypatch):
        import atmas.security_suite as suite
        from atmas.security_suite import PropertyResult

        monkeypatch.setattr(suite, "run_protocol_suite",
                            lambda cfg, out, trials: [PropertyResult("s", "p", "a", "a", True, "")])
        assert main(["protocol-suite", "--config", tiny_cfg, "--out", str(tmp_path), "--tag", "ok"]) == EXIT_OK
        monkeypatch.setattr(suite, "run_protocol_suite",
                            lambda cfg, out, trials: [PropertyResult("s", "p", "a", "b", False, "")])
        assert main(["protocol-suite", "--config", tiny_cfg, "--out", str(tmp_path), "--tag", "bad"]) == EXIT_PROPERTY
        summary = (tmp_path / "protocol-suite" / "bad" / "summary.csv").read_text()
        assert summary.splitlines() == ["scenario,passed,failed", "s,0,1"]

    def test_seed_must_be_u64(self, tiny_cfg):
        with pytest.raises(SystemExit):
            main(["simulate", "--config", tiny_cfg, "--seed", "-1"])
