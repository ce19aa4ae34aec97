"""
Random generation of classifier-learning tasks

Feature vectors come from a pool of normal distributions; a Xavier-initialized
ground-truth classifier labels them. Tasks whose classes are too unbalanced
are rejected and the ground truth is redrawn.
"""
import logging
from typing import Tuple, Union

import numpy as np

from ..core import nn
from ..core.errors import DimensionMismatchError, TaskGenerationError
from ..core.models import (
    ClassifierKind, Dataset, DistributionPool, GroundTruth, HiddenActivation,
    MetaDatasets, MetaSplit, MlpSpec, OutputActivation, Provenance, Split, Task,
    TaskConfig,
)

logger = logging.getLogger(__name__)

NUM_CLASSES = 2

# Tags that keep the random streams of the meta-learning sides disjoint
STREAM_POOL = 11
STREAM_META_TRAIN = 23
STREAM_META_TEST = 37


def classifier_spec(kind: ClassifierKind, dim: int = 5, hidden: int = 32,
                    identity_head: bool = False) -> MlpSpec:
    """
    Architecture of a two-class classifier

    Args:
        kind: LINEAR gives [dim, 2]; MLP3 gives [dim, H, H, 2] with ReLU hidden units
        dim: Feature dimension
        hidden: Hidden width H of the three-layer perceptron
        identity_head: Emit raw logits instead of softmax probabilities

    Returns:
        MlpSpec for the classifier
    """
    head = OutputActivation.IDENTITY if identity_head else OutputActivation.SOFTMAX
    if kind == ClassifierKind.LINEAR:
        return MlpSpec((dim, NUM_CLASSES), HiddenActivation.IDENTITY, head)
    return MlpSpec((dim, hidden, hidden, NUM_CLASSES), HiddenActivation.RELU, head)


def build_pool(rng: np.random.Generator, size: int = 50,
               value_range: Tuple[float, float] = (0.0, 5.0)) -> DistributionPool:
    """Draw `size` (mean, std) pairs uniformly from value_range"""
    lo, hi = float(value_range[0]), float(value_range[1])
    if size < 1:
        raise TaskGenerationError(f"pool size must be >= 1, got {size}")
    if lo > hi or lo < 0:
        raise TaskGenerationError(f"invalid pool range [{lo}, {hi}]")
    means = rng.uniform(lo, hi, size=size)
    stds = rng.uniform(lo, hi, size=size)
    return DistributionPool(means=means, stds=stds)


def sample_dataset(pool: DistributionPool, n: int, dim: int, rng: np.random.Generator,
                   provenance: Provenance = Provenance.META_TRAIN,
                   split: Split = Split.TRAINING) -> Dataset:
    """
    Sample n feature vectors from the pool

    Each point picks one pool entry uniformly and draws all of its `dim`
    features i.i.d. from that entry's normal distribution.
    """
    if pool.size == 0:
        raise TaskGenerationError("distribution pool is empty")
    if n < 1:
        raise TaskGenerationError(f"dataset size must be >= 1, got {n}")
    which = rng.integers(0, pool.size, size=n)
    means = pool.means[which][:, None]
    stds = pool.stds[which][:, None]
    features = rng.normal(means, stds, size=(n, dim))
    return Dataset(features=features, provenance=provenance, split=split)


def build_meta_datasets(cfg: TaskConfig, seed: int) -> MetaDatasets:
    """
    Materialize the pool and the master datasets of both meta-learning sides

    One pool generates both sides; each side is drawn from its own stream.
    """
    pool = build_pool(np.random.default_rng([seed, STREAM_POOL]), cfg.pool_size, cfg.value_range)
    sides = {}
    for provenance, tag in ((Provenance.META_TRAIN, STREAM_META_TRAIN),
                            (Provenance.META_TEST, STREAM_META_TEST)):
        rng = np.random.default_rng([seed, tag])
        sides[provenance] = MetaSplit(
            training=sample_dataset(pool, cfg.master_train_size, cfg.dim, rng, provenance, Split.TRAINING),
            validation=sample_dataset(pool, cfg.master_val_size, cfg.dim, rng, provenance, Split.VALIDATION),
        )
    logger.info(f"Master datasets ready: {cfg.master_train_size} train / "
                f"{cfg.master_val_size} validation points per side")
    return MetaDatasets(pool=pool, meta_train=sides[Provenance.META_TRAIN],
                        meta_test=sides[Provenance.META_TEST])


def make_ground_truth(kind: ClassifierKind, rng: np.random.Generator,
                      dim: int = 5, hidden: int = 32) -> GroundTruth:
    """Xavier-initialized ground-truth classifier"""
    spec = classifier_spec(kind, dim, hidden)
    return GroundTruth(kind=kind, spec=spec, params=nn.xavier_init(spec, rng))


def label(gt: GroundTruth, features: np.ndarray) -> np.ndarray:
    """Argmax class of the ground truth's outputs; an exact tie goes to class 0"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != gt.spec.input_dim:
        raise DimensionMismatchError("feature shape", f"(N, {gt.spec.input_dim})", features.shape)
    outputs, _ = nn.forward(gt.spec, gt.params, features)
    return np.argmax(outputs, axis=1).astype(np.int64)


def minority_fraction(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> float:
    counts = np.bincount(labels, minlength=num_classes)
    return float(counts.min()) / max(labels.size, 1)


def generate_task(cfg: TaskConfig, source: Union[MetaSplit, DistributionPool],
                  rng: np.random.Generator, provenance: Provenance = Provenance.META_TRAIN) -> Task:
    """
    Build one balanced task

    Args:
        cfg: Task sizes, balance threshold and ground-truth family
        source: Master split to subsample without replacement, or a pool to sample fresh points from
        rng: Caller-owned random stream
        provenance: Meta-learning side the task belongs to

    Returns:
        Task whose labels come from its ground truth

    Raises:
        TaskGenerationError: No ground truth met the balance threshold within max_attempts
    """
    if cfg.task_train_size < 1 or cfg.task_val_size < 1:
        raise TaskGenerationError("task sizes must be >= 1")

    if isinstance(source, MetaSplit):
        train_idx = rng.choice(len(source.training), size=cfg.task_train_size, replace=False)
        val_idx = rng.choice(len(source.validation), size=cfg.task_val_size, replace=False)
        train_x = source.training.features[train_idx]
        val_x = source.validation.features[val_idx]
    else:
        train_x = sample_dataset(source, cfg.task_train_size, cfg.dim, rng, provenance, Split.TRAINING).features
        val_x = sample_dataset(source, cfg.task_val_size, cfg.dim, rng, provenance, Split.VALIDATION).features

    for attempt in range(1, cfg.max_attempts + 1):
        gt = make_ground_truth(cfg.ground_truth, rng, cfg.dim, cfg.hidden)
        train_y = label(gt, train_x)
        val_y = label(gt, val_x)
        worst = min(minority_fraction(train_y), minority_fraction(val_y))
        if worst >= cfg.balance_min:
            if attempt > 1:
                logger.debug(f"Balanced ground truth found after {attempt} attempts")
            return Task(train_features=train_x, train_labels=train_y,
                        val_features=val_x, val_labels=val_y, ground_truth=gt)

    raise TaskGenerationError(
        f"no ground truth reached minority fraction {cfg.balance_min} in {cfg.max_attempts} attempts",
        attempts=cfg.max_attempts,
    )
