import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from psrl.harness import (
    ConfigError,
    RESULT_COLUMNS,
    expand_and_run,
    expand_cells,
    run_single,
    summarize_csv_files,
    summarize_results,
    validate_config,
    write_outputs,
)


def small_config(**overrides):
    cfg = {
        "env": {"kind": "bidirectional-lock"},
        "protocol": {"kind": "ps-explicit", "change_points": [40]},
        "episodes": 80,
        "algorithms": [
            {"name": "bare-q", "kind": "bare", "learner": "optimistic-q",
             "learner_params": {"c_bonus": 0.01}},
        ],
        "seeds": [1, 2, 3],
    }
    cfg.update(overrides)
    return validate_config(cfg)


class TestConfigValidation:
    def test_unknown_top_key_rejected(self):
        with pytest.raises(ConfigError):
            small_config(bogus=1)

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            small_config(algorithms=[{"name": "x", "kind": "bare", "mystery": 2}])

    def test_missing_required(self):
        with pytest.raises(ConfigError):
            validate_config({"env": {"kind": "bidirectional-lock"}})

    def test_small_horizon_rejected(self):
        with pytest.raises(ConfigError):
            small_config(episodes=2)

    def test_bad_regret_mode(self):
        with pytest.raises(ConfigError):
            small_config(regret_mode="sometimes")

    def test_duplicate_names(self):
        with pytest.raises(ConfigError):
            small_config(algorithms=[
                {"name": "a", "kind": "bare"}, {"name": "a", "kind": "periodic"},
            ])


class TestRunMatrix:
    def test_cell_expansion_counts(self):
        cfg = small_config()
        cells = expand_cells(cfg)
        assert len(cells) == 3  # 1 env x 1 algo x 3 seeds
        assert len({c.run_id for c in cells}) == 3

    def test_row_counts_and_prefix_consistency(self, tmp_path):
        cfg = small_config()
        cells, results, failures = expand_and_run(cfg)
        assert not failures
        merged, _ = write_outputs(tmp_path, cfg, cells, results, failures)
        with open(merged, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * 80
        by_run = {}
        for row in rows:
            by_run.setdefault(row["run_id"], []).append(row)
        for run_rows in by_run.values():
            prev = 0.0
            for row in run_rows:
                cum = float(row["cum_reward"])
                # cumulative column reproduces the running float sum exactly
                assert cum == prev + float(row["episode_reward"])
                prev = cum

    @staticmethod
    def strip_wall(path):
        # every column except the wall-clock one, which is nondeterministic
        with open(path, newline="") as fh:
            return [row[:-1] for row in csv.reader(fh)]

    def test_determinism_identical_modulo_timing(self, tmp_path):
        cfg = small_config()
        out = []
        for i in range(2):
            cells, results, failures = expand_and_run(cfg)
            merged, _ = write_outputs(tmp_path / str(i), cfg, cells, results, failures)
            out.append(self.strip_wall(merged))
        assert out[0] == out[1]

    def test_threads_match_serial(self, tmp_path):
        cfg = small_config()
        cells, res1, _ = expand_and_run(cfg, threads=1)
        _, res2, _ = expand_and_run(cfg, threads=2)
        m1, _ = write_outputs(tmp_path / "serial", cfg, cells, res1, {})
        m2, _ = write_outputs(tmp_path / "par", cfg, cells, res2, {})
        assert self.strip_wall(m1) == self.strip_wall(m2)

    def test_oracle_recomputed_only_at_change_points(self):
        cfg = small_config(protocol={"kind": "ps-explicit", "change_points": [20, 50]})
        _, results, _ = expand_and_run(cfg)
        for r in results.values():
            assert r.oracle_calls == 3  # N_T + 1

    def test_failed_cell_reported_not_fatal(self):
        # chain-special probes are only defined for the chain lock
        cfg = small_config(algorithms=[
            {"name": "bare-q", "kind": "bare", "learner": "optimistic-q"},
            {"name": "broken", "kind": "detect-restart", "learner": "optimistic-q",
             "probe": {"kind": "chain-special"}},
        ])
        cells, results, failures = expand_and_run(cfg)
        assert len(failures) == 3 and len(results) == 3

    def test_realized_regret_mode(self):
        cfg = small_config(regret_mode="realized", seeds=[5])
        _, results, _ = expand_and_run(cfg)
        r = next(iter(results.values()))
        assert r.regret_mode == "realized"
        assert np.allclose(r.trace.agent_value, r.trace.episode_reward)

    def test_tabular_drift_oracle_every_episode(self):
        cfg = small_config(protocol={"kind": "drift"}, episodes=50, seeds=[1])
        _, results, _ = expand_and_run(cfg)
        r = next(iter(results.values()))
        assert r.oracle_calls == 50 and r.oracle_exact

    def test_linear_drift_oracle_per_window(self):
        cfg = validate_config({
            "env": {"kind": "chain-lock"},
            "protocol": {"kind": "drift", "window": 25},
            "episodes": 100,
            "algorithms": [{"name": "bare", "kind": "bare", "learner": "lsvi-ucb",
                            "learner_params": {"beta": 1.0}}],
            "seeds": [1],
        })
        _, results, _ = expand_and_run(cfg)
        r = next(iter(results.values()))
        assert r.oracle_calls == 4 and not r.oracle_exact


class TestSummaries:
    def test_single_seed_zero_std(self):
        cfg = small_config(seeds=[7])
        _, results, _ = expand_and_run(cfg)
        rows = summarize_results(results)
        assert len(rows) == 1
        assert rows[0]["final_cum_reward_std"] == 0.0
        assert rows[0]["n_seeds"] == 1

    def test_aggregates_match_hand_computation(self):
        cfg = small_config(seeds=[1, 2])
        _, results, _ = expand_and_run(cfg)
        rows = summarize_results(results)
        finals = [r.final_cum_reward() for r in results.values()]
        assert abs(rows[0]["final_cum_reward_mean"] - np.mean(finals)) < 1e-12
        assert abs(rows[0]["final_cum_reward_std"] - np.std(finals, ddof=1)) < 1e-12

    def test_csv_summary_matches_in_memory(self, tmp_path):
        cfg = small_config()
        cells, results, failures = expand_and_run(cfg)
        merged, summary_rows = write_outputs(tmp_path, cfg, cells, results, failures)
        rows = summarize_csv_files([merged])
        assert len(rows) == len(summary_rows)
        for a, b in zip(rows, summary_rows):
            assert abs(a["final_cum_reward_mean"] - b["final_cum_reward_mean"]) < 1e-9

    def test_external_baseline_merge(self, tmp_path):
        cfg = small_config()
        cells, results, failures = expand_and_run(cfg)
        merged, _ = write_outputs(tmp_path, cfg, cells, results, failures)
        external = tmp_path / "external.csv"
        with open(merged) as src, open(external, "w") as dst:
            for i, line in enumerate(src):
                if i == 0:
                    dst.write(line)
                else:
                    parts = line.rstrip("\n").split(",")
                    parts[0] = "ext__" + parts[0]
                    parts[2] = "imported-algo"
                    dst.write(",".join(parts) + "\n")
        rows = summarize_csv_files([merged, str(external)])
        algos = {r["algorithm"] for r in rows}
        assert algos == {"bare-q", "imported-algo"}

    def test_schema_mismatch_names_missing_column(self, tmp_path):
        bad = tmp_path / "bad.csv"
        with open(bad, "w") as fh:
            fh.write("run_id,seed\nx,1\n")
        with pytest.raises(ValueError, match="cum_regret"):
            summarize_csv_files([str(bad)])


class TestCLI:
    def run_cli(self, *args):
        return subprocess.run([sys.executable, "-m", "psrl.harness.cli", *args],
                              capture_output=True, text=True)

    def test_run_roundtrip(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "env": {"kind": "bidirectional-lock"},
            "protocol": {"kind": "ps-explicit", "change_points": [30]},
            "episodes": 60,
            "algorithms": [{"name": "bare-q", "kind": "bare",
                            "learner": "optimistic-q"}],
            "seeds": [1],
        }))
        out_dir = tmp_path / "out"
        proc = self.run_cli("run", "--config", str(cfg_path), "--out", str(out_dir))
        assert proc.returncode == 0, proc.stderr
        for name in ("results.csv", "summary.csv", "summary.txt", "run_manifest.json"):
            assert (out_dir / name).exists()
        with open(out_dir / "results.csv", newline="") as fh:
            reader = csv.reader(fh)
            assert next(reader) == RESULT_COLUMNS

    def test_flag_overrides(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "env": {"kind": "bidirectional-lock"},
            "protocol": {"kind": "ps-explicit", "change_points": [30]},
            "episodes": 60,
            "algorithms": [{"name": "bare-q", "kind": "bare",
                            "learner": "optimistic-q"}],
            "seeds": [1, 2],
        }))
        out_dir = tmp_path / "out"
        proc = self.run_cli("run", "--config", str(cfg_path), "--out", str(out_dir),
                            "--episodes", "40", "--seeds", "3",
                            "--xi", "0.6")
        assert proc.returncode == 0, proc.stderr
        manifest = json.loads((out_dir / "run_manifest.json").read_text())
        assert manifest["config"]["episodes"] == 40
        assert manifest["config"]["seeds"] == [3]
        assert list(manifest["runs"]) == ["bidirectional-lock__ps-xi0.6__bare-q__s3"]

    def test_config_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"env": {"kind": "nope"}}))
        proc = self.run_cli("run", "--config", str(cfg_path))
        assert proc.returncode == 2

    def test_partial_failure_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "env": {"kind": "bidirectional-lock"},
            "protocol": {"kind": "ps-explicit", "change_points": []},
            "episodes": 30,
            "algorithms": [{"name": "broken", "kind": "detect-restart",
                            "learner": "optimistic-q",
                            "probe": {"kind": "chain-special"}}],
            "seeds": [1],
        }))
        proc = self.run_cli("run", "--config", str(cfg_path), "--out",
                            str(tmp_path / "out"))
        assert proc.returncode == 3

    def test_summarize_command(self, tmp_path):
        cfg = small_config(seeds=[1])
        cells, results, failures = expand_and_run(cfg)
        merged, _ = write_outputs(tmp_path, cfg, cells, results, failures)
        out_file = tmp_path / "table.txt"
        proc = self.run_cli("summarize", "--in", str(merged), "--out", str(out_file))
        assert proc.returncode == 0
        assert "bare-q" in out_file.read_text()
