"""
Inner loop: train a classifier on a task under a given loss

theta <- theta - optimizer(d loss(C_theta(x), y) / d theta), with the loss
gradient taken w.r.t. the prediction vector and chained through the
classifier by nn.backward.
"""
import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np

from ..core import nn
from ..core.errors import DimensionMismatchError, DivergenceError
from ..core.models import (
    InnerConfig, LossKind, MlpSpec, OptimizerConfig, OutputActivation, Task,
    TrainRecord, TrainRow,
)
from ..tasks.taskgen import classifier_spec
from .loss import check_loss_kind, multiclass_batch_loss
from .optimizers import make_optimizer

logger = logging.getLogger(__name__)


class EpochBatcher:
    """Cycles through shuffled epochs of a dataset without replacement"""

    def __init__(self, size: int, batch_size: int, rng: np.random.Generator):
        if not 1 <= batch_size <= size:
            raise DimensionMismatchError("batch size", f"1..{size}", batch_size)
        self.size = size
        self.batch_size = batch_size
        self.rng = rng
        self.order = rng.permutation(size)
        self.position = 0

    def next(self) -> np.ndarray:
        if self.position + self.batch_size > self.size:
            self.order = self.rng.permutation(self.size)
            self.position = 0
        batch = self.order[self.position:self.position + self.batch_size]
        self.position += self.batch_size
        return batch


def probabilities(spec: MlpSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Class probabilities; raw-logit heads are passed through a softmax"""
    out, _ = nn.forward(spec, params, features)
    if spec.output_activation != OutputActivation.SOFTMAX:
        out = nn.softmax(out)
    return out


def loss_and_gradient(spec: MlpSpec, params: np.ndarray, features: np.ndarray,
                      labels: np.ndarray, loss: LossKind) -> Tuple[float, np.ndarray]:
    """
    Batch loss of a classifier and its gradient w.r.t. the classifier parameters

    Returns:
        Tuple of (loss value, flat parameter gradient)
    """
    predictions, trace = nn.forward(spec, params, features)
    value, pred_grad = multiclass_batch_loss(predictions, labels, loss)
    param_grads, _ = nn.backward(spec, params, trace, pred_grad)
    return value, param_grads


def meta_loss(classifier_params: np.ndarray, classifier_spec: MlpSpec, task: Task) -> float:
    """Mean squared difference between learned and ground-truth probabilities on validation data"""
    learned = probabilities(classifier_spec, classifier_params, task.val_features)
    gt = task.ground_truth
    target = probabilities(gt.spec, gt.params, task.val_features)
    return float(np.mean((learned - target) ** 2))


def validation_accuracy(classifier_params: np.ndarray, spec: MlpSpec, task: Task) -> float:
    """Fraction of validation points whose argmax prediction matches the stored label"""
    return accuracy(spec, classifier_params, task.val_features, task.val_labels)


def accuracy(spec: MlpSpec, params: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    outputs, _ = nn.forward(spec, params, features)
    return float(np.mean(np.argmax(outputs, axis=1) == labels))


def fit(spec: MlpSpec, params: np.ndarray, features: np.ndarray, labels: np.ndarray,
        loss: LossKind, optimizer: OptimizerConfig, steps: int, batch_size: int,
        rng: np.random.Generator,
        on_step: Optional[Callable[[int, float, np.ndarray], None]] = None) -> np.ndarray:
    """
    Generic gradient-descent loop shared by generated tasks and MNIST

    Args:
        spec: Classifier architecture
        params: Initial parameters (updated in place)
        features: Training inputs
        labels: Training class indices
        loss: Loss to minimize
        optimizer: Update rule settings
        steps: Number of updates
        batch_size: Samples per update
        rng: Stream driving the batch order
        on_step: Called after every update with (step, pre-update batch loss, params)

    Returns:
        The trained parameter vector

    Raises:
        DivergenceError: A loss value or gradient became non-finite
    """
    check_loss_kind(loss)
    batcher = EpochBatcher(features.shape[0], batch_size, rng)
    opt = make_optimizer(optimizer, params.size)
    for step in range(1, steps + 1):
        idx = batcher.next()
        value, grads = loss_and_gradient(spec, params, features[idx], labels[idx], loss)
        if not math.isfinite(value):
            raise DivergenceError(step, f"loss is {value}")
        if not np.all(np.isfinite(grads)):
            raise DivergenceError(step, "gradient has non-finite entries")
        opt.step(params, grads)
        if on_step is not None:
            on_step(step, value, params)
    return params


def train_classifier(task: Task, cfg: InnerConfig, loss: LossKind,
                     record: bool = True) -> Tuple[np.ndarray, TrainRecord]:
    """
    Train a freshly initialized classifier on the task's training split

    The classifier is Xavier-initialized from cfg.seed, and the same stream
    then drives the batch order, so two runs with equal seeds differ only in
    the loss they use.

    Args:
        task: Task to learn
        cfg: Inner-loop settings
        loss: Loss kind to train with
        record: Collect trajectory rows at cfg.record_every cadence

    Returns:
        Tuple of (final parameters, TrainRecord)
    """
    if cfg.steps < 1:
        raise DimensionMismatchError("inner steps", ">= 1", cfg.steps)
    spec = classifier_spec(cfg.classifier, task.train_features.shape[1], cfg.hidden, cfg.identity_head)
    rng = np.random.default_rng(cfg.seed)
    params = nn.xavier_init(spec, rng)
    trajectory = TrainRecord()

    def snapshot(step: int, train_loss: float, current: np.ndarray):
        trajectory.rows.append(TrainRow(
            step=step,
            train_loss=train_loss,
            meta_loss=meta_loss(current, spec, task),
            val_accuracy=validation_accuracy(current, spec, task),
        ))

    on_step = None
    if record:
        cadence = max(1, cfg.record_every)
        snapshot(0, float("nan"), params)

        def on_step(step, value, current):
            if step % cadence == 0 or step == cfg.steps:
                snapshot(step, value, current)

    fit(spec, params, task.train_features, task.train_labels, loss, cfg.optimizer,
        cfg.steps, cfg.batch_size, rng, on_step)
    trajectory.final_params = params
    return params, trajectory
