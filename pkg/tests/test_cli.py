"""
Tests for the evoloss command-line interface
"""
import json
from pathlib import Path

import numpy as np
import pytest

from evoloss.core import nn
from evoloss.core.models import Genome, MLN_SPEC, MlpSpec
from evoloss.storage import persist
from evoloss.ui import cli

TINY_DOCUMENT = {
    "profile": "desk",
    "taskgen": {"master_train_size": 2000, "master_val_size": 1000,
                "task_train_size": 400, "task_val_size": 200},
    "inner": {"batch_size": 50, "steps": 10},
    "es": {"mu": 2, "lambda": 2, "generations": 1},
    "eval": {"batch_size": 50, "steps": 10, "num_tasks": 2, "record_every": 5},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_DOCUMENT))
    return str(path)


@pytest.fixture
def genome_file(tmp_path):
    params = nn.xavier_init(MLN_SPEC, np.random.default_rng(0))
    path = tmp_path / "g.mln"
    persist.save_genome(Genome(params, np.full(params.size, 0.05)), MLN_SPEC, path)
    return str(path)


class TestUsage:
    """Test argument and configuration errors"""

    def test_train_requires_config(self, tmp_path):
        assert cli.main(["train", "--out", str(tmp_path)]) == cli.EXIT_USAGE

    def test_no_command(self):
        assert cli.main([]) == cli.EXIT_USAGE

    def test_full_profile_needs_generations(self, tmp_path):
        assert cli.main(["train", "--config", "full", "--out", str(tmp_path / "run")]) == cli.EXIT_USAGE

    def test_bad_threads(self, tiny_config, tmp_path):
        code = cli.main(["train", "--config", tiny_config, "--out", str(tmp_path / "run"), "--threads", "0"])
        assert code == cli.EXIT_USAGE

    def test_mln_loss_needs_genome(self, tmp_path):
        assert cli.main(["trajectory", "--loss", "mln", "--out", str(tmp_path)]) == cli.EXIT_USAGE


class TestInspect:
    """Test genome inspection"""

    def test_canonical_constants(self, genome_file, capsys):
        assert cli.main(["inspect", "--genome", genome_file]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "N_w=175,718" in out
        assert "tau0=0.034537" in out
        assert "tau1=0.001687" in out
        assert "sigma: min=0.05" in out

    def test_bad_genome_is_runtime_failure(self, tmp_path):
        path = tmp_path / "bad.mln"
        path.write_bytes(b"garbage")
        assert cli.main(["inspect", "--genome", str(path)]) == cli.EXIT_RUNTIME

    def test_missing_genome_is_runtime_failure(self, tmp_path):
        assert cli.main(["inspect", "--genome", str(tmp_path / "absent.mln")]) == cli.EXIT_RUNTIME

    def test_dump_task(self, genome_file, tiny_config, tmp_path):
        out = tmp_path / "task"
        code = cli.main(["inspect", "--genome", genome_file, "--config", tiny_config, "--dump-task", str(out)])
        assert code == cli.EXIT_OK
        train = persist.read_csv(out / "task_train.csv")
        assert list(train.columns) == ["f0", "f1", "f2", "f3", "f4", "label"]
        assert len(train) == 400


class TestSweep:
    """Test the curve subcommand"""

    def test_writes_grid(self, genome_file, tmp_path):
        assert cli.main(["sweep", "--genome", genome_file, "--out", str(tmp_path / "curve")]) == cli.EXIT_OK
        frame = persist.read_csv(tmp_path / "curve" / "curve.csv")
        assert len(frame) == 1001
        assert (frame["loss"] > 0).all()

    def test_invalid_step(self, genome_file, tmp_path):
        code = cli.main(["sweep", "--genome", genome_file, "--step", "0.7", "--out", str(tmp_path)])
        assert code == cli.EXIT_USAGE


class TestRuns:
    """Test small end-to-end runs"""

    def test_train_then_eval(self, tiny_config, tmp_path):
        run_dir = tmp_path / "run"
        assert cli.main(["train", "--config", tiny_config, "--out", str(run_dir), "--threads", "2"]) == cli.EXIT_OK
        for name in (persist.BEST_FILE, persist.HISTORY_FILE, persist.MANIFEST_FILE, "evoloss.log"):
            assert (run_dir / name).exists()
        assert len(persist.read_history(run_dir)) == 2

        report_dir = tmp_path / "report"
        code = cli.main(["eval", "--genome", str(run_dir / persist.BEST_FILE), "--config", tiny_config,
                         "--out", str(report_dir), "--threads", "1"])
        assert code == cli.EXIT_OK
        report = persist.read_json(report_dir / "report.json")
        assert set(report["aggregates"]) == {"mln", "ce", "mse"}
        assert len(persist.read_csv(report_dir / "report_tasks.csv")) == 6

    def test_eval_rejects_classifier_genome(self, tiny_config, tmp_path):
        spec = MlpSpec((5, 2))
        path = tmp_path / "clf.mln"
        persist.save_genome(Genome(np.zeros(nn.genome_length(spec))), spec, path)
        code = cli.main(["eval", "--genome", str(path), "--config", tiny_config, "--out", str(tmp_path / "r")])
        assert code == cli.EXIT_USAGE

    def test_trajectory_all(self, genome_file, tiny_config, tmp_path):
        out = tmp_path / "traj"
        code = cli.main(["trajectory", "--genome", genome_file, "--loss", "all", "--every", "5",
                         "--config", tiny_config, "--out", str(out)])
        assert code == cli.EXIT_OK
        for kind in ("mln", "ce", "mse"):
            frame = persist.read_csv(out / f"traj_{kind}.csv")
            assert frame["step"].tolist() == [0, 5, 10]


class TestMasterSeed:
    """Test that evaluation tasks come from the pool the genome was trained on"""

    def _dump(self, genome_path, tiny_config, out, *extra):
        code = cli.main(["inspect", "--genome", str(genome_path), "--config", tiny_config,
                         "--dump-task", str(out), *extra])
        assert code == cli.EXIT_OK
        return (out / "task_train.csv").read_bytes()

    def test_manifest_seed_next_to_genome(self, genome_file, tiny_config, tmp_path):
        run_dir = tmp_path / "run"
        run_dir.mkdir()
        genome = run_dir / persist.BEST_FILE
        genome.write_bytes(Path(genome_file).read_bytes())
        persist.write_manifest(run_dir, {"profile": "desk"}, {"master": 7, "eval": 1})

        from_manifest = self._dump(genome, tiny_config, tmp_path / "a")
        explicit = self._dump(genome_file, tiny_config, tmp_path / "b", "--master-seed", "7")
        from_config = self._dump(genome_file, tiny_config, tmp_path / "c")
        assert from_manifest == explicit
        assert from_manifest != from_config

    def test_flag_overrides_manifest(self, genome_file, tiny_config, tmp_path):
        run_dir = tmp_path / "run"
        run_dir.mkdir()
        genome = run_dir / persist.BEST_FILE
        genome.write_bytes(Path(genome_file).read_bytes())
        persist.write_manifest(run_dir, {"profile": "desk"}, {"master": 7, "eval": 1})

        overridden = self._dump(genome, tiny_config, tmp_path / "a", "--master-seed", "0")
        from_config = self._dump(genome_file, tiny_config, tmp_path / "b")
        assert overridden == from_config

    def test_resume_keeps_trained_seed(self, tiny_config, tmp_path):
        run_dir = tmp_path / "run"
        assert cli.main(["train", "--config", tiny_config, "--out", str(run_dir), "--seed", "7",
                         "--threads", "2"]) == cli.EXIT_OK
        assert cli.main(["train", "--config", tiny_config, "--out", str(run_dir), "--resume",
                         "--threads", "2"]) == cli.EXIT_OK
        assert persist.read_json(run_dir / persist.MANIFEST_FILE)["seeds"]["master"] == 7
        assert len(persist.read_history(run_dir)) == 2
