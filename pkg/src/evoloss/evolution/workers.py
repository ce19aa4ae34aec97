"""
Fitness evaluation jobs and the worker pool that runs them

Each job draws its task and classifier seed from a stream keyed by
(master_seed, generation, worker), so its result does not depend on which
thread runs it or when.
"""
import logging
from dataclasses import replace
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np
from joblib import Parallel, delayed

from ..core.errors import DivergenceError
from ..core.models import EsConfig, Genome, InnerConfig, LossKind, MetaDatasets, Provenance, Task
from ..tasks.taskgen import classifier_spec, generate_task
from ..training.innerloop import meta_loss, train_classifier

logger = logging.getLogger(__name__)

DIVERGED_FITNESS = -1.0
STREAM_EVALUATE = 101

T = TypeVar("T")


def worker_stream(master_seed: int, generation: int, worker: int, tag: int = STREAM_EVALUATE) -> np.random.Generator:
    return np.random.default_rng([master_seed, generation, worker, tag])


def sample_worker_task(cfg: EsConfig, datasets: MetaDatasets,
                       generation: int, worker: int) -> Tuple[Task, InnerConfig]:
    """The meta-training task and inner-loop config a worker uses in a generation"""
    rng = worker_stream(cfg.master_seed, generation, worker)
    task = generate_task(cfg.task, datasets.meta_train, rng, Provenance.META_TRAIN)
    inner = replace(cfg.inner, seed=int(rng.integers(0, 2 ** 62)))
    return task, inner


def evaluate(genome: Genome, generation: int, worker: int, cfg: EsConfig,
             datasets: MetaDatasets) -> float:
    """
    Fitness of a genome: negated meta-loss after training with it on a fresh task

    A diverged inner loop scores DIVERGED_FITNESS, below every reachable fitness.
    """
    task, inner = sample_worker_task(cfg, datasets, generation, worker)
    spec = classifier_spec(inner.classifier, task.train_features.shape[1], inner.hidden)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            params, _ = train_classifier(task, inner, LossKind.mln(genome.params), record=False)
    except DivergenceError as e:
        logger.warning(f"Generation {generation} worker {worker}: {e}")
        return DIVERGED_FITNESS
    fitness = -meta_loss(params, spec, task)
    if not np.isfinite(fitness):
        logger.warning(f"Generation {generation} worker {worker}: non-finite meta-loss")
        return DIVERGED_FITNESS
    logger.debug(f"Generation {generation} worker {worker}: fitness {fitness:.6f}")
    return fitness


def run_jobs(fn: Callable[..., T], arg_lists: Sequence[tuple], threads: int = 1,
             backend: str = "threading") -> List[T]:
    """Run fn over the argument tuples; results come back in submission order"""
    if threads <= 1:
        return [fn(*args) for args in arg_lists]
    return Parallel(n_jobs=threads, backend=backend)(delayed(fn)(*args) for args in arg_lists)


def evaluate_all(genomes: Sequence[Genome], generation: int, cfg: EsConfig,
                 datasets: MetaDatasets) -> List[float]:
    """Fitness of every genome of a generation, ordered by worker index"""
    jobs = [(genome, generation, worker, cfg, datasets) for worker, genome in enumerate(genomes)]
    return run_jobs(evaluate, jobs, cfg.threads, cfg.backend)
