import subprocess
import sys

import numpy as np
import pytest

from parvts.cli import main
from parvts.configfile import (
    ConfigError,
    experiment_config_from,
    parse_config_text,
    resolve,
)
from parvts.scheduler import Strategy

MINIMAL_CONFIG = """\
# desk-scale run
model.layers = 3
model.hidden_dim = 16
model.heads = 2
model.mlp_dim = 32
model.vocab = 53
tokens.system = 2
tokens.visual = 8
tokens.question = 4
schedule.strategy = ParVTSBatch
schedule.migration_depth = 2
partition.keep_count = 3
decode.steps = 2
"""


class TestConfigFile:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="model.width"):
            parse_config_text("model.width = 7\n")

    def test_defaults_applied(self):
        resolved = resolve()
        assert resolved["schedule.alpha"] == "0.5"
        assert resolved["schedule.beta"] == "0.5"
        assert resolved["schedule.joint_prefix"] == "1"
        assert resolved["schedule.strategy"] == "ParVTSBatch"

    def test_overrides_win_over_file(self):
        values = parse_config_text(MINIMAL_CONFIG)
        resolved = resolve(values, ["schedule.alpha=0", "schedule.beta=1"])
        assert resolved["schedule.alpha"] == "0"
        assert resolved["schedule.beta"] == "1"

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("model.layers\n")

    def test_experiment_includes_vanilla_baseline(self):
        config = experiment_config_from(resolve(parse_config_text(MINIMAL_CONFIG)))
        assert config.strategies[0] is Strategy.VANILLA
        assert Strategy.PARVTS_BATCH in config.strategies

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="model.layers"):
            experiment_config_from(resolve(None, ["model.layers=three"]))


class TestCmdRun:
    def test_minimal_config_writes_report(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text(MINIMAL_CONFIG)
        out = tmp_path / "report.txt"
        code = main(["run", "--config", str(config), "--out", str(out)])
        assert code == 0
        assert out.exists()
        assert "rho_prefill" in capsys.readouterr().out

    def test_keep_count_over_visual_fails_naming_key(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text(MINIMAL_CONFIG.replace("partition.keep_count = 3", "partition.keep_count = 99"))
        code = main(["run", "--config", str(config), "--out", str(tmp_path / "r.txt")])
        assert code == 1
        assert "keep_count" in capsys.readouterr().err

    def test_set_overrides_reach_echo(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(MINIMAL_CONFIG)
        out = tmp_path / "report.txt"
        code = main(
            [
                "run",
                "--config", str(config),
                "--set", "schedule.alpha=0",
                "--set", "schedule.beta=1",
                "--out", str(out),
            ]
        )
        assert code == 0
        text = out.read_text()
        assert "schedule.alpha = 0" in text
        assert "schedule.beta = 1" in text

    def test_defaults_only_run(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["run", "--out", "report.txt"]) == 0

    def test_report_echo_replays_identically(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(MINIMAL_CONFIG)
        first_out = tmp_path / "first.txt"
        assert main(["run", "--config", str(config), "--set", "schedule.alpha=0.25",
                     "--set", "schedule.beta=0.75", "--out", str(first_out)]) == 0
        first = first_out.read_text()

        # extract the echoed config block and use it as a standalone config file
        echo_lines = []
        inside = False
        for line in first.splitlines():
            if line == "config {":
                inside = True
            elif inside and line == "}":
                break
            elif inside:
                echo_lines.append(line.strip())
        replay_config = tmp_path / "replay.cfg"
        replay_config.write_text("\n".join(echo_lines) + "\n")
        second_out = tmp_path / "second.txt"
        assert main(["run", "--config", str(replay_config), "--out", str(second_out)]) == 0
        assert second_out.read_text() == first


class TestCmdCost:
    def test_zero_pruning_prints_unit_ratios(self, capsys):
        code = main(["cost", "--p", "0", "--n", "1", "--N", "4", "--L_text", "8",
                     "--L_img", "16", "--M", "4", "--d", "8", "--m", "16"])
        assert code == 0
        out = capsys.readouterr().out
        assert "rho_prefill = 1.0" in out
        assert "rho_decoding = 1.0" in out

    def test_hand_example(self, capsys):
        code = main(["cost", "--p", "1", "--n", "1", "--N", "4", "--L_text", "2",
                     "--L_img", "3", "--M", "0", "--d", "2", "--m", "3"])
        assert code == 0
        assert "prefill_flops_parvts = 456.0" in capsys.readouterr().out

    def test_preset_sets_migration_depth(self, capsys):
        shared = ["--p", "0.5", "--N", "32", "--L_text", "64", "--L_img", "576",
                  "--M", "1", "--d", "4096", "--m", "11008"]
        assert main(["cost", "--preset", "LLaVA-1.5-7B", *shared]) == 0
        preset_out = capsys.readouterr().out
        assert main(["cost", "--n", "3", *shared]) == 0
        explicit_out = capsys.readouterr().out
        assert preset_out == explicit_out

    def test_unknown_preset(self, capsys):
        code = main(["cost", "--preset", "Mystery-1B"])
        assert code == 1
        assert "preset" in capsys.readouterr().err

    def test_inconsistent_length_rejected(self, capsys):
        code = main(["cost", "--p", "0", "--L", "9", "--L_text", "2", "--L_img", "3"])
        assert code == 1
        assert "L_text" in capsys.readouterr().err


class TestCmdSweep:
    def test_single_point(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--out", str(out), "p=0.5"])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("p,n,N,L_text,L_img,M,d,m,")

    def test_depth_range_constant_decoding(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--out", str(out), "n=1:4:1", "--set", "cost.N=4"])
        assert code == 0
        lines = out.read_text().splitlines()[1:]
        assert len(lines) == 4
        assert len({line.split(",")[-1] for line in lines}) == 1

    def test_empty_grid_rejected(self, tmp_path, capsys):
        code = main(["sweep", "--out", str(tmp_path / "s.csv")])
        assert code == 1
        assert "grid" in capsys.readouterr().err

    def test_malformed_range_rejected(self, tmp_path, capsys):
        code = main(["sweep", "--out", str(tmp_path / "s.csv"), "p=0:1"])
        assert code == 1
        assert "p=0:1" in capsys.readouterr().err

    def test_comma_list_axis(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--out", str(out), "M=1,2,4", "--set", "cost.p=0.5"])
        assert code == 0
        rows = out.read_text().splitlines()[1:]
        values = [float(r.split(",")[-1]) for r in rows]
        assert values[0] > values[1] > values[2]


class TestCmdVerify:
    def test_unmodified_build_passes(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out

    def test_fault_injected_fusion_detected(self, capsys, monkeypatch):
        import parvts.scheduler as scheduler

        def broken_fusion(t_non, t_sub, alpha, beta):
            return np.asarray(t_non, dtype=np.float64)  # beta ignored

        monkeypatch.setattr(scheduler, "fuse_question_states", broken_fusion)
        code = main(["verify"])
        out = capsys.readouterr().out
        assert code == 2
        assert "FAIL oracle_equivalence" in out


class TestConsoleEntry:
    def test_installed_script_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "parvts.cli", "--help"],
            capture_output=True,
            text=True,
        )
        # argparse exits 0 on --help via SystemExit
        assert proc.returncode == 0
        assert "run" in proc.stdout and "verify" in proc.stdout
