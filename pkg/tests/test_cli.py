"""CLI contract tests: artifacts, determinism, config handling, exit codes."""

import json
import os

import pytest

from rdtorus.cli import (
    ConfigError,
    default_box_size,
    main,
    parse_config_text,
    validate_replacement_scale,
)


def read_header(path):
    cfg = {}
    body = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                stripped = line[1:].strip()
                if "=" in stripped:
                    k, v = stripped.split("=", 1)
                    cfg[k.strip()] = v.strip()
            else:
                body.append(line)
    return cfg, "".join(body)


class TestFlowsCommand:
    def test_emits_cost_table(self, tmp_path):
        rc = main(["flows", "--dim", "2", "--lmax", "16", "--out-dir", str(tmp_path)])
        assert rc == 0
        header, body = read_header(tmp_path / "flow_costs.csv")
        assert header["schema"] == "rdtorus-flow-costs-v1"
        assert body.splitlines()[0] == "d,ell,cost,g_d,ratio"
        assert (tmp_path / "pyramid_costs.csv").exists()

    def test_config_echo_roundtrip(self, tmp_path):
        main(["flows", "--dim", "2", "--lmax", "8", "--seed", "17", "--out-dir", str(tmp_path)])
        header, _ = read_header(tmp_path / "flow_costs.csv")
        parsed = parse_config_text(
            "\n".join(f"{k} = {v}" for k, v in header.items() if k not in ("artifact", "schema"))
        )
        assert parsed["seed"] == "17"
        assert parsed["dim"] == "2"
        assert parsed["subcommand"] == "flows"


class TestSimulateCommand:
    def test_summaries_and_event_log(self, tmp_path):
        log = tmp_path / "events.log"
        rc = main(
            [
                "simulate", "--lambda", "1", "--dim", "1", "--n", "12", "--T", "0.05",
                "--replicas", "3", "--seed", "5", "--out-dir", str(tmp_path),
                "--event-log", str(log),
            ]
        )
        assert rc == 0
        _, body = read_header(tmp_path / "trajectory_summaries.csv")
        assert len(body.splitlines()) == 4  # header + 3 replicas
        lines = log.read_text().splitlines()
        assert lines, "event log is empty"
        kinds = {line.split()[1] for line in lines}
        assert kinds <= {"ex", "flip"}

    def test_same_seed_byte_identical(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            rc = main(
                ["simulate", "--n", "10", "--T", "0.05", "--replicas", "4",
                 "--seed", "9", "--out-dir", str(d)]
            )
            assert rc == 0
        b1 = (d1 / "trajectory_summaries.csv").read_bytes()
        b2 = (d2 / "trajectory_summaries.csv").read_bytes()
        assert b1 == b2

    def test_2d_simulation(self, tmp_path):
        rc = main(["simulate", "--dim", "2", "--n", "4", "--T", "0.02",
                   "--replicas", "2", "--out-dir", str(tmp_path)])
        assert rc == 0


class TestExactCommand:
    def test_series_and_verdicts(self, tmp_path):
        rc = main(["exact", "--lambda", "1", "--dim", "1", "--n", "5", "--T", "0.4",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        _, body = read_header(tmp_path / "entropy_series.csv")
        assert body.splitlines()[0] == "t,H,dH_dt,yau_rhs"
        doc = json.loads((tmp_path / "exact_verdicts.json").read_text())
        checks = doc["checks"]
        assert checks["adjoint_summation_vs_transpose"]["pass"]
        assert checks["entropy_production_bound"]["pass"]
        assert "max_abs_diff" in checks["adjoint_polynomial_comparison"]


class TestConcCommand:
    def test_all_suites_pass(self, tmp_path):
        rc = main(["conc", "--suite", "all", "--out-dir", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "conc_verdicts.json").read_text())
        assert set(doc["checks"]) == {"subgaussian", "chisq", "bdiff", "tail", "holder"}
        for v in doc["checks"].values():
            assert v["pass"]
            assert v["worst_margin"] > -1e-12

    def test_single_suite(self, tmp_path):
        rc = main(["conc", "--suite", "tail", "--out-dir", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "conc_verdicts.json").read_text())
        assert list(doc["checks"]) == ["tail"]


class TestBgAndFluctCommands:
    def test_bg_small(self, tmp_path):
        rc = main(["bg", "--n-grid", "8,16", "--T", "0.3", "--replicas", "150",
                   "--seed", "3", "--out-dir", str(tmp_path)])
        assert rc == 0
        _, body = read_header(tmp_path / "bg_decay.csv")
        assert len(body.splitlines()) == 3

    def test_fluct_small(self, tmp_path):
        rc = main(["fluct", "--n", "24", "--T", "0.15", "--replicas", "40",
                   "--modes", "1", "--seed", "2", "--out-dir", str(tmp_path)])
        assert rc == 0
        for name in ("fluct_replicas.csv", "fluct_moments.csv", "ou_fit.csv",
                     "fluct_verdicts.json"):
            assert (tmp_path / name).exists()
        _, body = read_header(tmp_path / "ou_fit.csv")
        cols = body.splitlines()[0].split(",")
        assert cols[:3] == ["mode", "theta_hat", "se"]
        assert len(cols) == 6  # three drift candidates reported


class TestBenchCommand:
    def test_bench_runs(self, tmp_path):
        rc = main(["bench", "--n", "24", "--T", "0.02", "--out-dir", str(tmp_path)])
        assert rc == 0
        _, body = read_header(tmp_path / "engine_benchmark.csv")
        assert len(body.splitlines()) >= 2


class TestConfigHandling:
    def test_config_file_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 10\nT = 0.02\nreplicas = 2\nseed = 4\n")
        rc = main(["simulate", "--config", str(cfg), "--n", "8",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        header, _ = read_header(tmp_path / "trajectory_summaries.csv")
        assert header["n"] == "8"  # flag beats file
        assert header["T"] == "0.02"  # file value survives

    def test_missing_config_file(self, tmp_path):
        rc = main(["simulate", "--config", str(tmp_path / "nope.cfg")])
        assert rc == 3

    def test_bad_values_exit_3(self, tmp_path, capsys):
        assert main(["simulate", "--lambda", "-2", "--out-dir", str(tmp_path)]) == 3
        err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert err["kind"] == "config"
        assert main(["simulate", "--T", "0", "--out-dir", str(tmp_path)]) == 3
        assert main(["exact", "--n", "40", "--out-dir", str(tmp_path)]) == 3

    def test_parse_config_text(self):
        parsed = parse_config_text("a = 1\n# comment\nb = x,y\n\nbad line\n")
        assert parsed == {"a": "1", "b": "x,y"}

    def test_replacement_scale_validation(self):
        # the d=1 default ell = n satisfies ell * cost ~ n^2/3 <= n^2
        validate_replacement_scale(1, 64, [default_box_size(1, 64)])
        with pytest.raises(ConfigError):
            validate_replacement_scale(1, 8, [64])

    def test_default_box_sizes(self):
        import math

        assert default_box_size(1, 100) == 100
        assert default_box_size(2, 100) == round(100 / math.sqrt(math.log(100)))
        assert default_box_size(3, 64) == 16
