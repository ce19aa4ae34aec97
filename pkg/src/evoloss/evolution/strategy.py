"""
(mu + lambda) evolution strategy over meta-loss network genomes

Each generation clones uniformly chosen parents into lambda children,
mutates them with log-normal self-adaptation of the per-gene mutation
strengths, scores parents and children on fresh tasks and keeps the mu
best.
"""
import logging
import math
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import nn
from ..core.errors import CheckpointError, ConfigError
from ..core.models import EsConfig, GenerationStats, Genome, MLN_SPEC, MetaDatasets, ScoredGenome
from ..storage import persist
from ..tasks.taskgen import build_meta_datasets
from .workers import evaluate_all

logger = logging.getLogger(__name__)

STREAM_INIT = 307
STREAM_BREED = 211


def tau_constants(n_genes: int) -> Tuple[float, float]:
    """Per-gene and global learning rates of the sigma update"""
    tau0 = 1.0 / math.sqrt(2.0 * math.sqrt(n_genes))
    tau1 = 1.0 / math.sqrt(2.0 * n_genes)
    return tau0, tau1


def init_population(cfg: EsConfig, rng: np.random.Generator) -> List[Genome]:
    """mu Xavier-initialized genomes with every sigma at sigma_init"""
    n = nn.genome_length(MLN_SPEC)
    return [Genome(nn.xavier_init(MLN_SPEC, rng), np.full(n, cfg.sigma_init))
            for _ in range(cfg.mu)]


def mutate(parent: Genome, rng, sigma_floor: float = 1e-6, per_gene_draws: bool = False) -> Genome:
    """
    Self-adaptive mutation

    sigma'_j = max(floor, sigma_j * exp(tau0 * n_j + tau1 * g)) with one
    global draw g per child (or one per gene when per_gene_draws), then
    params'_j = params_j + sigma'_j * m_j.

    Args:
        parent: Genome to copy
        rng: Anything with numpy's standard_normal signature
        sigma_floor: Lower bound of every mutation strength
        per_gene_draws: Draw the tau1 term per gene instead of once per child

    Returns:
        The mutated child
    """
    n = parent.params.size
    tau0, tau1 = tau_constants(n)
    global_draw = rng.standard_normal(n) if per_gene_draws else rng.standard_normal()
    gene_draw = rng.standard_normal(n)
    sigma = np.maximum(sigma_floor, parent.sigma * np.exp(tau0 * gene_draw + tau1 * global_draw))
    params = parent.params + sigma * rng.standard_normal(n)
    return Genome(params, sigma)


def select(population: Sequence[ScoredGenome], mu: int) -> List[ScoredGenome]:
    """The mu fittest individuals; equal fitness goes to the lower index"""
    ranked = sorted(population, key=lambda s: (-s.fitness, s.index))
    return ranked[:mu]


def generation_stats(generation: int, fitness: Sequence[float], genomes: Sequence[Genome],
                     seconds: float) -> GenerationStats:
    sigmas = np.concatenate([g.sigma for g in genomes])
    values = np.asarray(fitness, dtype=np.float64)
    return GenerationStats(
        generation=generation,
        fitness=[float(f) for f in values],
        best=float(values.max()),
        median=float(np.median(values)),
        mean=float(values.mean()),
        sigma_min=float(sigmas.min()),
        sigma_med=float(np.median(sigmas)),
        sigma_max=float(sigmas.max()),
        seconds=seconds,
    )


def run_es(cfg: EsConfig, datasets: Optional[MetaDatasets] = None,
           out_dir: Optional[Union[str, Path]] = None,
           resume: bool = False) -> Tuple[Genome, List[GenerationStats]]:
    """
    Evolve the meta-loss network

    Generation 0 scores the mu initial genomes; generations 1..E breed lambda
    children and rescore all mu + lambda. Survivors are kept in their stored
    single-precision form so a resumed run continues exactly like an
    uninterrupted one.

    Args:
        cfg: Evolution settings
        datasets: Master datasets; built from cfg.task and cfg.master_seed when omitted
        out_dir: Checkpoint directory (gen_####.mln, best.mln, history, population)
        resume: Continue from the population checkpoint in out_dir

    Returns:
        Tuple of (highest-fitness genome ever evaluated, per-generation statistics)
    """
    _check_config(cfg)
    if datasets is None:
        datasets = build_meta_datasets(cfg.task, cfg.master_seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    if resume:
        if out is None:
            raise ConfigError("resume", "needs an output directory")
        genomes, state = persist.load_population(out)
        history = _resumed_history(out, int(state["next_generation"]))
        best_genome, _ = persist.load_genome(out / persist.BEST_FILE)
        best = ScoredGenome(best_genome, float(state["best_fitness"]), int(state["best_generation"]))
        parents = [ScoredGenome(g, f, i) for i, (g, f) in enumerate(zip(genomes, state["parent_fitness"]))]
        start = int(state["next_generation"])
        logger.info(f"Resuming at generation {start} with {len(parents)} parents")
    else:
        history, best, parents, start = [], None, [], 0

    for generation in range(start, cfg.generations + 1):
        started = time.perf_counter()
        if generation == 0:
            candidates = init_population(cfg, np.random.default_rng([cfg.master_seed, 0, STREAM_INIT]))
        else:
            breed_rng = np.random.default_rng([cfg.master_seed, generation, STREAM_BREED])
            children = []
            for _ in range(cfg.lam):
                parent = parents[int(breed_rng.integers(0, len(parents)))].genome
                children.append(mutate(parent, breed_rng, cfg.sigma_floor, cfg.per_gene_draws))
            candidates = [p.genome for p in parents] + children

        fitness = evaluate_all(candidates, generation, cfg, datasets)
        scored = [ScoredGenome(g, f, i) for i, (g, f) in enumerate(zip(candidates, fitness))]
        survivors = select(scored, cfg.mu)
        champion = survivors[0]
        if best is None or champion.fitness > best.fitness:
            best = ScoredGenome(champion.genome, champion.fitness, generation)
        parents = [ScoredGenome(s.genome.stored(), s.fitness, i) for i, s in enumerate(survivors)]

        stats = generation_stats(generation, fitness, candidates, time.perf_counter() - started)
        history.append(stats)
        logger.info(f"Generation {generation}: best {stats.best:.6f} median {stats.median:.6f} "
                    f"sigma [{stats.sigma_min:.3g}, {stats.sigma_max:.3g}] in {stats.seconds:.1f}s")

        if out is not None:
            _checkpoint(out, generation, champion, best, parents, history)

    return best.genome, history


def _checkpoint(out: Path, generation: int, champion: ScoredGenome, best: ScoredGenome,
                parents: List[ScoredGenome], history: List[GenerationStats]):
    persist.save_genome(champion.genome, MLN_SPEC, out / persist.checkpoint_name(generation))
    persist.save_genome(best.genome, MLN_SPEC, out / persist.BEST_FILE)
    persist.write_history(out, history)
    # state.json commits the checkpoint, so it goes last
    persist.save_population(out, [p.genome for p in parents], MLN_SPEC, {
        "next_generation": generation + 1,
        "best_fitness": best.fitness,
        "best_generation": best.index,
        "parent_fitness": [p.fitness for p in parents],
    })
    logger.info(f"Checkpoint written for generation {generation}")


def _resumed_history(out: Path, next_generation: int) -> List[GenerationStats]:
    """History rows for generations 0..next_generation-1; later rows belong to an unfinished checkpoint"""
    history = persist.read_history(out)[:next_generation]
    generations = [s.generation for s in history]
    if generations != list(range(next_generation)):
        raise CheckpointError(str(out), f"history holds generations {generations}, "
                                        f"population checkpoint expects 0..{next_generation - 1}")
    return history


def _check_config(cfg: EsConfig):
    if cfg.generations is None or cfg.generations < 0:
        raise ConfigError("es.generations", "must be set to a non-negative integer")
    if cfg.mu < 1:
        raise ConfigError("es.mu", f"must be >= 1, got {cfg.mu}")
    if cfg.lam < 1:
        raise ConfigError("es.lambda", f"must be >= 1, got {cfg.lam}")
    if cfg.sigma_init <= 0:
        raise ConfigError("es.sigma_init", f"must be > 0, got {cfg.sigma_init}")
