"""Command-line behavior: exit codes, file outputs, printed summaries."""

import json
import os
import subprocess
import sys

import pytest

from qroute import gradcheck
from qroute.cli import main
from qroute.core import read_instances

TINY_TRAIN = {
    "instance": {"m": 4, "capacity": 15},
    "encoder": {"d_x": 8, "n_layers": 1, "variant": "classical",
                "score_blocks": 1},
    "decoder": {"heads": 2, "temperature": 2.0},
    "critic": {"readout_layers": 1, "conv_channels": 4, "quantum": False},
    "qsim": {"n_qubits": 2, "n_layers": 1},
    "ppo": {"epochs": 1, "collect_steps": 1, "collect_batch": 6,
            "update_epochs": 1, "minibatch": 6, "learning_rate": 1e-3,
            "val_instances": 4, "seed": 0},
}


def write_tiny_config(tmp_path, **overrides):
    doc = json.loads(json.dumps(TINY_TRAIN))
    for section, fields in overrides.items():
        doc.setdefault(section, {}).update(fields)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny training run shared by the eval tests."""
    root = tmp_path_factory.mktemp("trained")
    cfg = write_tiny_config(root)
    out_dir = root / "run"
    assert main(["train", "--config", str(cfg),
                 "--out-dir", str(out_dir)]) == 0
    inst_path = root / "instances.jsonl"
    assert main(["generate", "--m", "4", "--capacity", "15", "--count", "5",
                 "--seed", "3", "--out", str(inst_path)]) == 0
    return root, out_dir, inst_path


class TestGenerate:
    def test_writes_instances(self, tmp_path, capsys):
        out = tmp_path / "x.jsonl"
        code = main(["generate", "--m", "3", "--count", "4", "--seed", "1",
                     "--out", str(out)])
        assert code == 0
        assert "wrote 4 instances" in capsys.readouterr().out
        instances = read_instances(out)
        assert len(instances) == 4
        assert all(i.m == 3 for i in instances)
        assert all(i.capacity == 30 for i in instances)  # benchmark default

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert main(["generate", "--m", "5", "--count", "3", "--seed",
                         "7", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_arguments_exit_2(self, tmp_path):
        out = str(tmp_path / "x.jsonl")
        assert main(["generate", "--m", "0", "--count", "1",
                     "--out", out]) == 2
        assert main(["generate", "--m", "3", "--count", "-1",
                     "--out", out]) == 2
        assert main(["generate", "--m", "3", "--capacity", "5", "--count",
                     "1", "--out", out]) == 2


class TestParser:
    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_gradcheck_scope_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["gradcheck", "--scope", "everything"])
        assert exc.value.code == 2

    def test_threads_must_be_positive(self):
        assert main(["--threads", "0", "params"]) == 2

    def test_env_default_threads(self, monkeypatch):
        from qroute.cli import _default_threads
        monkeypatch.setenv("QROUTE_THREADS", "3")
        assert _default_threads() == 3
        monkeypatch.setenv("QROUTE_THREADS", "junk")
        assert _default_threads() == 1
        monkeypatch.delenv("QROUTE_THREADS")
        assert _default_threads() == 1


class TestTrain:
    def test_smoke_run(self, tmp_path, capsys):
        cfg = write_tiny_config(tmp_path)
        out_dir = tmp_path / "run"
        assert main(["train", "--config", str(cfg),
                     "--out-dir", str(out_dir)]) == 0
        out = capsys.readouterr().out
        assert "done: 1 epochs" in out
        assert (out_dir / "metrics.csv").exists()
        assert (out_dir / "checkpoint.qgat").exists()
        assert (out_dir / "resolved_config.json").exists()

    def test_bad_config_exits_2(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"encoder": {"variant": "analog"}}))
        assert main(["train", "--config", str(cfg),
                     "--out-dir", str(tmp_path / "run")]) == 2
        assert main(["train", "--config", str(tmp_path / "missing.json"),
                     "--out-dir", str(tmp_path / "run")]) == 2


class TestEval:
    def test_table_and_outputs(self, trained, tmp_path, capsys):
        _, out_dir, inst_path = trained
        results = tmp_path / "results.csv"
        solutions = tmp_path / "solutions.jsonl"
        code = main(["eval",
                     "--checkpoint", str(out_dir / "checkpoint.qgat"),
                     "--instances", str(inst_path),
                     "--strategy", "both", "--width", "4",
                     "--out", str(results),
                     "--solutions", str(solutions)])
        assert code == 0
        out = capsys.readouterr().out
        assert "checkpoint epoch 1, 5 instances" in out
        assert "model (best of 4)" in out
        assert "nearest-neighbor" in out
        assert "reference (exact)" in out  # m=4 gets the exact solver

        lines = results.read_text().splitlines()
        assert lines[0] == "method,type,mean_length,gap_percent"
        assert len(lines) == 5  # greedy, sampling, nn, reference
        # the exact reference has gap exactly zero against itself
        ref_row = [l for l in lines if l.startswith("reference")][0]
        assert float(ref_row.rsplit(",", 1)[1]) == 0.0

        sol_lines = solutions.read_text().splitlines()
        assert len(sol_lines) == 5
        first = json.loads(sol_lines[0])
        assert first["instance_id"] == 0
        assert first["sequence"][0] == 0 and first["sequence"][-1] == 0

    def test_greedy_only(self, trained, tmp_path, capsys):
        _, out_dir, inst_path = trained
        code = main(["eval",
                     "--checkpoint", str(out_dir / "checkpoint.qgat"),
                     "--instances", str(inst_path),
                     "--strategy", "greedy",
                     "--out", str(tmp_path / "r.csv")])
        assert code == 0
        out = capsys.readouterr().out
        assert "best of" not in out

    def test_config_hash_gate(self, trained, tmp_path):
        root, out_dir, inst_path = trained
        other = write_tiny_config(tmp_path, ppo={"seed": 123})
        assert main(["eval",
                     "--checkpoint", str(out_dir / "checkpoint.qgat"),
                     "--instances", str(inst_path),
                     "--config", str(other),
                     "--out", str(tmp_path / "r.csv")]) == 2

    def test_empty_instance_file_exits_2(self, trained, tmp_path):
        _, out_dir, _ = trained
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert main(["eval",
                     "--checkpoint", str(out_dir / "checkpoint.qgat"),
                     "--instances", str(empty)]) == 2

    def test_reference_file_must_cover_all_instances(self, trained, tmp_path):
        _, out_dir, inst_path = trained
        refs = tmp_path / "refs.csv"
        refs.write_text("instance_id,method,length\n0,solver,1.5\n")
        assert main(["eval",
                     "--checkpoint", str(out_dir / "checkpoint.qgat"),
                     "--instances", str(inst_path),
                     "--references", str(refs),
                     "--out", str(tmp_path / "r.csv")]) == 2

    def test_reference_file_used_when_complete(self, trained, tmp_path,
                                               capsys):
        _, out_dir, inst_path = trained
        refs = tmp_path / "refs.csv"
        rows = ["instance_id,method,length"]
        rows += [f"{i},solver,2.0" for i in range(5)]
        rows += [f"{i},other,3.0" for i in range(5)]  # worse; min wins
        refs.write_text("\n".join(rows) + "\n")
        assert main(["eval",
                     "--checkpoint", str(out_dir / "checkpoint.qgat"),
                     "--instances", str(inst_path),
                     "--strategy", "greedy",
                     "--references", str(refs),
                     "--out", str(tmp_path / "r.csv")]) == 0
        out = capsys.readouterr().out
        assert "reference (file)" in out
        ref_line = [l for l in (tmp_path / "r.csv").read_text().splitlines()
                    if l.startswith("reference")][0]
        assert ref_line.split(",")[2] == "2.0"


class TestParams:
    def test_reports_counts_and_ratio(self, tmp_path, capsys):
        cfg = write_tiny_config(tmp_path,
                                encoder={"variant": "quantum"},
                                critic={"quantum": True})
        assert main(["params", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "configured: classical" in out
        assert "classical reference: classical" in out
        assert "quantum 0 " in out
        assert "total ratio (configured / classical reference):" in out


class TestGradcheck:
    def test_failure_exits_1(self, monkeypatch, capsys):
        def fake_run_scope(scope, seed=0):
            return [gradcheck.GradReport(
                name="stub", parameters=3, max_abs_err=1.0, max_rel_err=1.0,
                worst="w", tolerance=1e-5, passed=False)]
        monkeypatch.setattr(gradcheck, "run_scope", fake_run_scope)
        assert main(["gradcheck", "--scope", "qsim"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_pass_exits_0(self, monkeypatch, capsys):
        def fake_run_scope(scope, seed=0):
            return [gradcheck.GradReport(
                name="stub", parameters=3, max_abs_err=0.0, max_rel_err=0.0,
                worst="w", tolerance=1e-5, passed=True)]
        monkeypatch.setattr(gradcheck, "run_scope", fake_run_scope)
        assert main(["gradcheck", "--scope", "qsim"]) == 0
        assert "PASS" in capsys.readouterr().out


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "x.jsonl"
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(
            p for p in (env.get("PYTHONPATH"),) if p
        )
        proc = subprocess.run(
            [sys.executable, "-m", "qroute", "generate", "--m", "2",
             "--count", "1", "--out", str(out)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
