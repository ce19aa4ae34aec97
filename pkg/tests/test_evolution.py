"""
Tests for the (mu + lambda) evolution strategy and its fitness jobs
"""
import math
from dataclasses import replace

import numpy as np
import pytest

from evoloss.core import nn
from evoloss.core.errors import CheckpointError, ConfigError
from evoloss.core.models import EsConfig, Genome, MLN_SPEC, ScoredGenome
from evoloss.evolution import strategy, workers
from evoloss.storage import persist
from evoloss.tasks.taskgen import build_meta_datasets, classifier_spec
from evoloss.training.innerloop import meta_loss

N_GENES = 175_718


class ZeroNormal:
    """Stands in for a Generator whose normal draws are all zero"""

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


def canonical_genome(seed: int = 0, sigma: float = 0.05) -> Genome:
    params = nn.xavier_init(MLN_SPEC, np.random.default_rng(seed))
    return Genome(params, np.full(params.size, sigma))


def constant_genome() -> Genome:
    genome = canonical_genome()
    genome.params[:4 * 32] = 0.0
    return genome


@pytest.fixture
def datasets(tiny_es_config):
    return build_meta_datasets(tiny_es_config.task, tiny_es_config.master_seed)


class TestTauConstants:
    """Test the self-adaptation learning rates"""

    def test_canonical_values(self):
        tau0, tau1 = strategy.tau_constants(nn.genome_length(MLN_SPEC))
        assert round(tau0, 6) == 0.034537
        assert round(tau1, 6) == 0.001687

    def test_formulas(self):
        tau0, tau1 = strategy.tau_constants(16)
        assert tau0 == pytest.approx(1 / math.sqrt(8))
        assert tau1 == pytest.approx(1 / math.sqrt(32))


class TestMutate:
    """Test self-adaptive mutation"""

    def test_zero_noise_is_identity(self):
        parent = canonical_genome()
        for literal in (False, True):
            child = strategy.mutate(parent, ZeroNormal(), per_gene_draws=literal)
            assert child.params.tobytes() == parent.params.tobytes()
            assert child.sigma.tobytes() == parent.sigma.tobytes()

    def test_parent_untouched(self):
        parent = canonical_genome()
        before = parent.params.copy()
        strategy.mutate(parent, np.random.default_rng(0))
        assert np.array_equal(parent.params, before)

    def test_log_sigma_moments_per_gene_draws(self):
        """With independent draws per gene, ln(sigma'/sigma) is N(0, tau0^2 + tau1^2)"""
        parent = canonical_genome()
        child = strategy.mutate(parent, np.random.default_rng(1), per_gene_draws=True)
        ratio = np.log(child.sigma / parent.sigma)
        tau0, tau1 = strategy.tau_constants(N_GENES)
        sd = math.sqrt(tau0 ** 2 + tau1 ** 2)
        assert sd == pytest.approx(0.034578, abs=1e-6)
        assert abs(ratio.mean()) <= 5 * sd / math.sqrt(N_GENES)
        assert abs(ratio.std() - sd) <= 5 * sd / math.sqrt(2 * N_GENES)

    def test_log_sigma_spread_with_global_draw(self):
        """One global draw per child shifts every gene alike; the spread around it is tau0"""
        parent = canonical_genome()
        child = strategy.mutate(parent, np.random.default_rng(2))
        ratio = np.log(child.sigma / parent.sigma)
        tau0, tau1 = strategy.tau_constants(N_GENES)
        assert abs(ratio.std() - tau0) <= 5 * tau0 / math.sqrt(2 * N_GENES)
        assert abs(ratio.mean()) <= 5 * math.sqrt(tau1 ** 2 + tau0 ** 2 / N_GENES)

    def test_params_step_scaled_by_new_sigma(self):
        parent = canonical_genome(sigma=0.05)
        child = strategy.mutate(parent, np.random.default_rng(3))
        steps = (child.params - parent.params) / child.sigma
        assert abs(steps.std() - 1.0) < 0.01

    def test_sigma_floor(self):
        parent = canonical_genome(sigma=1e-9)
        child = strategy.mutate(parent, np.random.default_rng(4), sigma_floor=1e-6)
        assert np.all(child.sigma >= 1e-6)

    def test_deterministic(self):
        parent = canonical_genome()
        a = strategy.mutate(parent, np.random.default_rng(5))
        b = strategy.mutate(parent, np.random.default_rng(5))
        assert a.params.tobytes() == b.params.tobytes()


class TestSelection:
    """Test truncation selection"""

    def _scored(self, fitness):
        return [ScoredGenome(Genome(np.zeros(1)), f, i) for i, f in enumerate(fitness)]

    def test_dominance(self):
        population = self._scored([-0.3, -0.1, -0.5, -0.2, -0.05, -0.4])
        survivors = strategy.select(population, 3)
        assert len(survivors) == 3
        kept = {s.index for s in survivors}
        assert min(s.fitness for s in survivors) >= max(p.fitness for p in population if p.index not in kept)
        assert [s.index for s in survivors] == [4, 1, 3]

    def test_ties_go_to_lower_index(self):
        survivors = strategy.select(self._scored([-0.2] * 6), 4)
        assert [s.index for s in survivors] == [0, 1, 2, 3]


class TestPopulation:
    """Test initialization and statistics"""

    def test_init_population(self):
        cfg = EsConfig(generations=1)
        population = strategy.init_population(cfg, np.random.default_rng(0))
        assert len(population) == 25
        assert all(len(g) == N_GENES for g in population)
        assert all(np.all(g.sigma == 0.05) for g in population)

    def test_init_population_deterministic(self):
        cfg = EsConfig(generations=1, mu=2)
        a = strategy.init_population(cfg, np.random.default_rng(9))
        b = strategy.init_population(cfg, np.random.default_rng(9))
        assert all(x.params.tobytes() == y.params.tobytes() for x, y in zip(a, b))

    def test_generation_stats(self):
        genomes = [Genome(np.zeros(2), np.array([0.1, 0.2])), Genome(np.zeros(2), np.array([0.3, 0.4]))]
        stats = strategy.generation_stats(3, [-0.2, -0.1], genomes, 1.5)
        assert stats.best == -0.1
        assert stats.best == max(stats.fitness)
        assert stats.median == pytest.approx(-0.15)
        assert (stats.sigma_min, stats.sigma_max) == (0.1, 0.4)
        assert stats.sigma_med == pytest.approx(0.25)


class TestEvaluate:
    """Test fitness jobs"""

    def test_constant_mln_scores_the_untrained_classifier(self, tiny_es_config, datasets):
        task, inner = workers.sample_worker_task(tiny_es_config, datasets, 1, 2)
        spec = classifier_spec(inner.classifier, 5, inner.hidden)
        initial = nn.xavier_init(spec, np.random.default_rng(inner.seed))
        fitness = workers.evaluate(constant_genome(), 1, 2, tiny_es_config, datasets)
        assert fitness == -meta_loss(initial, spec, task)

    def test_fitness_is_not_positive(self, tiny_es_config, datasets):
        for worker in range(3):
            assert workers.evaluate(canonical_genome(worker), 0, worker, tiny_es_config, datasets) <= 0

    def test_same_job_same_fitness(self, tiny_es_config, datasets):
        genome = canonical_genome(1)
        a = workers.evaluate(genome, 4, 1, tiny_es_config, datasets)
        b = workers.evaluate(genome, 4, 1, tiny_es_config, datasets)
        assert a == b

    def test_workers_get_different_tasks(self, tiny_es_config, datasets):
        a, _ = workers.sample_worker_task(tiny_es_config, datasets, 0, 0)
        b, _ = workers.sample_worker_task(tiny_es_config, datasets, 0, 1)
        assert not np.array_equal(a.ground_truth.params, b.ground_truth.params)

    def test_thread_count_does_not_matter(self, tiny_es_config, datasets):
        genomes = [canonical_genome(s) for s in range(4)]
        single = workers.evaluate_all(genomes, 1, tiny_es_config, datasets)
        pooled = workers.evaluate_all(genomes, 1, replace(tiny_es_config, threads=3), datasets)
        assert single == pooled

    def test_run_jobs_keeps_order(self):
        assert workers.run_jobs(pow, [(2, k) for k in range(6)], threads=3) == [1, 2, 4, 8, 16, 32]


class TestRunEs:
    """Test whole evolution runs on small tasks"""

    def test_history_and_checkpoints(self, tiny_es_config, tmp_path):
        best, history = strategy.run_es(tiny_es_config, out_dir=tmp_path)
        assert len(history) == tiny_es_config.generations + 1
        assert len(history[0].fitness) == tiny_es_config.mu
        assert all(len(s.fitness) == tiny_es_config.mu + tiny_es_config.lam for s in history[1:])
        assert all(s.best == max(s.fitness) for s in history)
        assert all(f <= 0 for s in history for f in s.fitness)
        assert len(best) == N_GENES
        for generation in range(tiny_es_config.generations + 1):
            assert (tmp_path / persist.checkpoint_name(generation)).exists()
        assert (tmp_path / persist.BEST_FILE).exists()
        assert (tmp_path / persist.HISTORY_FILE).exists()
        genomes, state = persist.load_population(tmp_path)
        assert len(genomes) == tiny_es_config.mu
        assert state["next_generation"] == tiny_es_config.generations + 1

    def test_best_is_highest_fitness_ever(self, tiny_es_config, tmp_path):
        _, history = strategy.run_es(tiny_es_config, out_dir=tmp_path)
        state = persist.read_json(tmp_path / persist.POPULATION_DIR / persist.STATE_FILE)
        assert state["best_fitness"] == max(s.best for s in history)

    def test_history_independent_of_threads(self, tiny_es_config, tmp_path):
        strategy.run_es(tiny_es_config, out_dir=tmp_path / "one")
        strategy.run_es(replace(tiny_es_config, threads=3), out_dir=tmp_path / "three")
        one = (tmp_path / "one" / persist.HISTORY_FILE).read_bytes()
        three = (tmp_path / "three" / persist.HISTORY_FILE).read_bytes()
        assert one == three
        assert (tmp_path / "one" / persist.BEST_FILE).read_bytes() == \
            (tmp_path / "three" / persist.BEST_FILE).read_bytes()

    def test_resume_continues_identically(self, tiny_es_config, tmp_path):
        strategy.run_es(tiny_es_config, out_dir=tmp_path / "full")
        strategy.run_es(replace(tiny_es_config, generations=1), out_dir=tmp_path / "split")
        strategy.run_es(tiny_es_config, out_dir=tmp_path / "split", resume=True)
        for name in (persist.HISTORY_FILE, persist.FITNESS_FILE, persist.BEST_FILE,
                     persist.checkpoint_name(tiny_es_config.generations)):
            assert (tmp_path / "full" / name).read_bytes() == (tmp_path / "split" / name).read_bytes()

    def test_resume_after_interrupted_checkpoint(self, tiny_es_config, tmp_path, monkeypatch):
        strategy.run_es(tiny_es_config, out_dir=tmp_path / "full")
        write_history = persist.write_history

        def interrupted(out_dir, history):
            if len(history) == 2:
                raise KeyboardInterrupt
            write_history(out_dir, history)

        monkeypatch.setattr(persist, "write_history", interrupted)
        with pytest.raises(KeyboardInterrupt):
            strategy.run_es(tiny_es_config, out_dir=tmp_path / "split")
        monkeypatch.setattr(persist, "write_history", write_history)

        _, state = persist.load_population(tmp_path / "split")
        assert state["next_generation"] == 1
        _, history = strategy.run_es(tiny_es_config, out_dir=tmp_path / "split", resume=True)
        assert [s.generation for s in history] == list(range(tiny_es_config.generations + 1))
        for name in (persist.HISTORY_FILE, persist.FITNESS_FILE, persist.BEST_FILE):
            assert (tmp_path / "full" / name).read_bytes() == (tmp_path / "split" / name).read_bytes()

    def test_resume_rejects_short_history(self, tiny_es_config, tmp_path):
        strategy.run_es(replace(tiny_es_config, generations=1), out_dir=tmp_path)
        persist.write_history(tmp_path, persist.read_history(tmp_path)[:1])
        with pytest.raises(CheckpointError):
            strategy.run_es(tiny_es_config, out_dir=tmp_path, resume=True)

    def test_generations_required(self, tiny_es_config):
        with pytest.raises(ConfigError):
            strategy.run_es(replace(tiny_es_config, generations=None))

    def test_resume_needs_directory(self, tiny_es_config):
        with pytest.raises(ConfigError):
            strategy.run_es(tiny_es_config, resume=True)
