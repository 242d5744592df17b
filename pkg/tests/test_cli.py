"""CLI commands: artifacts, determinism, config embedding, exit codes."""

import json
from pathlib import Path

import pytest

from abrbench.cli import main
from abrbench.metrics import REPORT_HEADER


def read(path: Path) -> str:
    return path.read_text()


def tree_bytes(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture()
def trace_dir(tmp_path):
    out = tmp_path / "traces"
    rc = main([
        "synth", "--count", "3", "--seed", "100", "--mean", "2.0",
        "--volatility", "0.3", "--duration", "60", "--out", str(out),
    ])
    assert rc == 0
    return out


class TestSynth:
    def test_writes_trace_csvs_and_config(self, tmp_path):
        out = tmp_path / "o"
        assert main(["synth", "--count", "2", "--seed", "5", "--out", str(out)]) == 0
        assert (out / "synth-5.csv").exists()
        assert (out / "synth-6.csv").exists()
        config = json.loads(read(out / "run_config.json"))
        assert config["command"] == "synth"
        assert config["seed"] == 5

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["synth", "--count", "2", "--seed", "3"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert tree_bytes(a) == tree_bytes(b)


class TestSimulate:
    def test_session_log_artifact(self, tmp_path, trace_dir):
        out = tmp_path / "sim"
        rc = main([
            "simulate", "--trace", str(trace_dir / "synth-100.csv"),
            "--policy", "buffer_based", "--manifest", "pensieve",
            "--seed", "1", "--out", str(out),
        ])
        assert rc == 0
        text = read(out / "session_synth-100_buffer_based_1.jsonl")
        lines = [json.loads(line) for line in text.strip().splitlines()]
        assert lines[-1]["record"] == "summary"
        assert lines[-1]["config"]["command"] == "simulate"
        assert len(lines) == 49  # 48 chunks + summary

    def test_deterministic_across_runs(self, tmp_path, trace_dir):
        outs = []
        for name in ("x", "y"):
            out = tmp_path / name
            rc = main([
                "simulate", "--trace", str(trace_dir), "--policy", "random:4",
                "--manifest", "pensieve", "--seed", "4", "--out", str(out),
            ])
            assert rc == 0
            outs.append(tree_bytes(out))
        assert outs[0] == outs[1]

    def test_regenerate_from_embedded_config(self, tmp_path, trace_dir):
        first = tmp_path / "first"
        rc = main([
            "simulate", "--trace", str(trace_dir / "synth-101.csv"),
            "--policy", "robust_mpc", "--manifest", "pensieve", "--out", str(first),
        ])
        assert rc == 0
        second = tmp_path / "second"
        rc = main([
            "simulate", "--config", str(first / "run_config.json"), "--out", str(second),
        ])
        assert rc == 0
        assert tree_bytes(first) == tree_bytes(second)

    def test_missing_trace_is_usage_error(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path / "o")]) == 2

    def test_bad_trace_file_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("0.0,-2.0\n")
        rc = main([
            "simulate", "--trace", str(bad), "--policy", "buffer_based",
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 3

    def test_unknown_flag_rejected(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--nonsense", "1"])
        assert exc.value.code == 2


class TestSolveExpert:
    def test_label_lines(self, tmp_path, trace_dir):
        out = tmp_path / "labels"
        rc = main([
            "solve-expert", "--trace", str(trace_dir / "synth-100.csv"),
            "--manifest", "pensieve", "--horizon", "4", "--out", str(out),
        ])
        assert rc == 0
        lines = [json.loads(l) for l in read(out / "labels_synth-100.jsonl").strip().splitlines()]
        labels = [l for l in lines if l["record"] == "label"]
        assert len(labels) == 48
        first = labels[0]
        assert set(first) >= {"observation", "expert_level", "adverse_level", "objective", "iterations"}
        assert len(first["observation"]) == 2 * 8 + 6 + 3
        assert 0 <= first["expert_level"] < 6
        assert 0 <= first["adverse_level"] < 6


class TestTrainEvaluateRank:
    def test_pipeline(self, tmp_path, trace_dir):
        train_out = tmp_path / "train"
        rc = main([
            "train", "--traces", str(trace_dir), "--manifest", "pensieve",
            "--epochs", "2", "--horizon", "3", "--latent-dim", "4",
            "--hidden-dim", "8", "--seed", "2", "--out", str(train_out),
        ])
        assert rc == 0
        checkpoint = train_out / "checkpoint.json"
        report = json.loads(read(train_out / "report.json"))
        assert len(report["loss_ema"]) == 2
        assert report["config"]["epochs"] == 2

        eval_out = tmp_path / "eval"
        rc = main([
            "evaluate", "--traces", str(trace_dir), "--manifest", "pensieve",
            "--policies", f"buffer_based,fixed:0,actor:{checkpoint}",
            "--seeds", "0,1", "--out", str(eval_out),
        ])
        assert rc == 0
        assert read(eval_out / "report.csv").splitlines()[0] == REPORT_HEADER
        report = json.loads(read(eval_out / "report.json"))
        assert set(report["matrix"]) == {"synth-100", "synth-101", "synth-102"}

        rank_out = tmp_path / "rank"
        rc = main(["rank", "--report", str(eval_out / "report.json"), "--out", str(rank_out)])
        assert rc == 0
        lines = read(rank_out / "ranking.csv").splitlines()
        assert lines[0].startswith("policy,avg_rank,points")
        ranking = json.loads(read(rank_out / "ranking.json"))["ranking"]
        assert sum(r["points"] for r in ranking.values()) == 3 * (25 + 18 + 15)

    def test_train_deterministic_and_worker_invariant(self, tmp_path, trace_dir):
        outs = []
        for name, workers in (("w1", "1"), ("w1b", "1"), ("w4", "4")):
            out = tmp_path / name
            rc = main([
                "train", "--traces", str(trace_dir / "synth-100.csv"),
                "--manifest", "pensieve", "--epochs", "2", "--horizon", "3",
                "--latent-dim", "4", "--hidden-dim", "8", "--seed", "2",
                "--workers", workers, "--out", str(out),
            ])
            assert rc == 0
            tree = tree_bytes(out)
            del tree["run_config.json"]  # workers field legitimately differs
            # strip the embedded config's workers entry as well
            checkpoint = json.loads(tree.pop("checkpoint.json"))
            report = json.loads(tree.pop("report.json"))
            checkpoint["config"].pop("workers")
            report["config"].pop("workers")
            outs.append((checkpoint, report))
        assert outs[0] == outs[1] == outs[2]


class TestBenchExpert:
    def test_csv_shape(self, tmp_path):
        out = tmp_path / "bench"
        rc = main([
            "bench-expert", "--n-values", "2,3", "--instances", "2",
            "--manifest", "pensieve", "--solvers", "ao,enum,dp",
            "--dp-grid", "1.0", "--out", str(out),
        ])
        assert rc == 0
        lines = read(out / "bench.csv").strip().splitlines()
        assert lines[0] == "solver,n,mean_ms,objective_gap"
        assert len(lines) == 1 + 3 * 2
        for line in lines[1:]:
            solver, n, mean_ms, gap = line.split(",")
            assert solver in {"ao", "enum", "dp"}
            assert float(mean_ms) >= 0.0
        # enumeration is the ground truth: zero gap
        enum_rows = [l for l in lines[1:] if l.startswith("enum,")]
        assert all(float(row.split(",")[3]) == 0.0 for row in enum_rows)

    def test_deterministic_apart_from_timings(self, tmp_path):
        def normalized(root):
            rows = read(root / "bench.csv").strip().splitlines()
            return [",".join(c for i, c in enumerate(r.split(",")) if i != 2) for r in rows]

        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["bench-expert", "--n-values", "2", "--instances", "2", "--solvers", "ao,enum"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert normalized(a) == normalized(b)
        assert read(a / "run_config.json") == read(b / "run_config.json")


class TestConfigPrecedence:
    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"count": 1, "seed": 50, "out": str(tmp_path / "ignored")}))
        out = tmp_path / "actual"
        rc = main(["synth", "--config", str(config), "--seed", "60", "--out", str(out)])
        assert rc == 0
        assert (out / "synth-60.csv").exists()
        resolved = json.loads(read(out / "run_config.json"))
        assert resolved["seed"] == 60
        assert resolved["count"] == 1

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"bogus": 1}))
        assert main(["synth", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
