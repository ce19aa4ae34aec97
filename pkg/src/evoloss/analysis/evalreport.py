"""
Meta-testing and reporting

Paired comparisons of an evolved MLN against cross-entropy and MSE on
generated tasks, the MLN function curve, per-step trajectories and the
artifacts they are written to.
"""
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigError
from ..core.models import (
    ClassifierKind, CurvePoint, EvalConfig, EvalReport, InnerConfig, LossKind,
    MLN_SPEC, MetaDatasets, MlpSpec, OptimizerConfig, Provenance, Task, TaskConfig,
    TaskRow, TrainRecord,
)
from ..evolution.workers import run_jobs
from ..storage import persist
from ..tasks.taskgen import build_meta_datasets, generate_task
from ..training.innerloop import train_classifier
from ..training.loss import CE_CLAMP, mln_pairs

logger = logging.getLogger(__name__)

STREAM_EVAL = 401

# Published accuracies, echoed next to our numbers for context only
REFERENCE = {
    "linear": {"mln": 0.9921, "ce": 0.9635, "mse": 0.9812},
    "mlp3": {"mln": 0.9835, "ce": 0.9818, "mse": 0.9817},
    "mnist_lenet": {"mln": 0.9937, "ce": 0.9932, "mse": 0.9931},
}

TASK_COLUMNS = ["task_seed", "loss", "final_accuracy", "final_meta_loss", "steps_to_95"]
TRAJECTORY_COLUMNS = ["step", "train_loss", "meta_loss", "val_accuracy"]
CURVE_COLUMNS = ["p", "loss", "ce", "mse"]


def default_losses(genome_params: Optional[np.ndarray]) -> List[LossKind]:
    kinds = [LossKind.cross_entropy(), LossKind.mean_squared_error()]
    if genome_params is not None:
        kinds.insert(0, LossKind.mln(genome_params))
    return kinds


def eval_task(datasets: MetaDatasets, task_cfg: TaskConfig, family: ClassifierKind,
              seed: int, index: int) -> Tuple[int, Task]:
    """The index-th meta-testing task for a seed, and the seed that reproduces it"""
    task_seed = int(np.random.default_rng([seed, index, STREAM_EVAL]).integers(0, 2 ** 31))
    cfg = replace(task_cfg, ground_truth=family)
    task = generate_task(cfg, datasets.meta_test, np.random.default_rng(task_seed), Provenance.META_TEST)
    return task_seed, task


def inner_config_for(eval_cfg: EvalConfig, loss: LossKind, family: ClassifierKind,
                     seed: int, hidden: int = 32) -> InnerConfig:
    """Meta-testing inner-loop settings; only the learning rate depends on the loss"""
    try:
        lr = eval_cfg.learning_rates[loss.name]
    except KeyError:
        raise ConfigError(f"eval.learning_rates.{loss.name}", "missing")
    return InnerConfig(
        classifier=family,
        optimizer=OptimizerConfig(kind=eval_cfg.optimizer, learning_rate=lr),
        batch_size=eval_cfg.batch_size,
        steps=eval_cfg.steps,
        seed=seed,
        hidden=hidden,
        record_every=eval_cfg.record_every,
    )


def steps_to_fraction(record: TrainRecord, fraction: float = 0.95) -> int:
    """First recorded step whose accuracy reaches fraction of the final accuracy"""
    target = fraction * record.rows[-1].val_accuracy
    for row in record.rows:
        if row.val_accuracy >= target:
            return row.step
    return record.rows[-1].step


def _compare_task(index: int, losses: Sequence[LossKind], family: ClassifierKind,
                  eval_cfg: EvalConfig, task_cfg: TaskConfig, datasets: MetaDatasets) -> List[TaskRow]:
    task_seed, task = eval_task(datasets, task_cfg, family, eval_cfg.seed, index)
    rows = []
    for loss in losses:
        inner = inner_config_for(eval_cfg, loss, family, task_seed, task_cfg.hidden)
        _, record = train_classifier(task, inner, loss, record=True)
        final = record.rows[-1]
        rows.append(TaskRow(task_seed=task_seed, loss=loss.name, final_accuracy=final.val_accuracy,
                            final_meta_loss=final.meta_loss, steps_to_95=steps_to_fraction(record)))
    logger.debug(f"Task {index} done: " + ", ".join(f"{r.loss}={r.final_accuracy:.4f}" for r in rows))
    return rows


def compare_on_generated(genome_params: Optional[np.ndarray], family: ClassifierKind, num_tasks: int,
                         eval_cfg: EvalConfig, task_cfg: TaskConfig,
                         datasets: Optional[MetaDatasets] = None,
                         losses: Optional[Sequence[LossKind]] = None) -> EvalReport:
    """
    Train one classifier per loss kind on each of num_tasks meta-testing tasks

    Every loss on a task starts from the same classifier initialization and
    sees the same batch order.

    Args:
        genome_params: Evolved MLN parameters, or None to compare the baselines only
        family: Ground-truth and learner family
        num_tasks: Number of meta-testing tasks
        eval_cfg: Optimizer, learning rates, budget and seed
        task_cfg: Task sizes and master dataset sizes
        datasets: Master datasets; built from task_cfg and eval_cfg.seed when omitted
        losses: Loss kinds to compare; defaults to MLN (when given), CE and MSE

    Returns:
        EvalReport with per-task rows and per-loss aggregates
    """
    if num_tasks < 1:
        raise ConfigError("eval.num_tasks", f"must be >= 1, got {num_tasks}")
    if datasets is None:
        datasets = build_meta_datasets(task_cfg, eval_cfg.seed)
    losses = list(losses) if losses is not None else default_losses(genome_params)

    jobs = [(i, losses, family, eval_cfg, task_cfg, datasets) for i in range(num_tasks)]
    per_task = run_jobs(_compare_task, jobs, eval_cfg.threads, eval_cfg.backend)
    rows = [row for task_rows in per_task for row in task_rows]

    report = EvalReport(family=family.value, rows=rows,
                        aggregates=aggregate(rows),
                        config=_config_echo(eval_cfg, task_cfg, num_tasks))
    for name, stats in report.aggregates.items():
        logger.info(f"{family.value} {name}: accuracy {stats['accuracy_mean']:.4f} "
                    f"meta-loss {stats['meta_loss_mean']:.6f}")
    return report


def _config_echo(eval_cfg: EvalConfig, task_cfg: TaskConfig, num_tasks: int) -> Dict:
    # thread count and backend do not change results, keep them out of the report
    echo = persist.to_jsonable(eval_cfg)
    echo.pop("threads")
    echo.pop("backend")
    return {"eval": echo, "taskgen": persist.to_jsonable(task_cfg), "num_tasks": num_tasks}


def aggregate(rows: Sequence[TaskRow]) -> Dict[str, Dict[str, float]]:
    """Mean and standard deviation per loss kind"""
    result = {}
    for name in dict.fromkeys(r.loss for r in rows):
        mine = [r for r in rows if r.loss == name]
        acc = np.array([r.final_accuracy for r in mine])
        meta = np.array([r.final_meta_loss for r in mine])
        steps = np.array([r.steps_to_95 for r in mine], dtype=np.float64)
        result[name] = {
            "tasks": len(mine),
            "accuracy_mean": float(acc.mean()), "accuracy_std": float(acc.std()),
            "meta_loss_mean": float(meta.mean()), "meta_loss_std": float(meta.std()),
            "steps_to_95_mean": float(steps.mean()), "steps_to_95_std": float(steps.std()),
        }
    return result


def write_report(report: EvalReport, out_dir: Union[str, Path]):
    """report.json (aggregates, config echo, references) and report_tasks.csv"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_json(out / "report.json", {
        "family": report.family,
        "aggregates": report.aggregates,
        "config": report.config,
        "reference": REFERENCE.get(report.family, {}),
    })
    persist.write_csv(out / "report_tasks.csv", [persist.to_jsonable(r) for r in report.rows], TASK_COLUMNS)


def curve_grid(step: float) -> np.ndarray:
    """Inclusive grid 0, step, 2*step, ..., 1"""
    if not 0 < step <= 0.5:
        raise ConfigError("step", f"must be in (0, 0.5], got {step}")
    count = int(np.floor(1.0 / step + 1e-9))
    grid = np.arange(count + 1) * step
    if np.isclose(grid[-1], 1.0, rtol=0, atol=1e-9):
        grid[-1] = 1.0
    else:
        grid = np.append(grid, 1.0)
    return grid


def sweep_curve(genome_params: np.ndarray, step: float = 0.001,
                spec: MlpSpec = MLN_SPEC) -> List[CurvePoint]:
    """MLN loss of the prediction (p, 1 - p) against label (1, 0) along the grid, with CE and MSE alongside"""
    grid = curve_grid(step)
    values, _, _ = mln_pairs(genome_params, grid, 1.0 - grid, spec, need_grad=False)
    ce = -np.log(np.maximum(grid, CE_CLAMP))
    mse = (1.0 - grid) ** 2
    return [CurvePoint(p_true=float(p), loss=float(v), ce=float(c), mse=float(m))
            for p, v, c, m in zip(grid, values, ce, mse)]


def summarize_curve(points: Sequence[CurvePoint]) -> Dict[str, float]:
    """Location of the minimum and the value range of the curve"""
    losses = np.array([pt.loss for pt in points])
    at = int(np.argmin(losses))
    return {"argmin_p": points[at].p_true, "min_loss": float(losses.min()),
            "max_loss": float(losses.max()), "points": len(points)}


def write_curve(points: Sequence[CurvePoint], out_dir: Union[str, Path]) -> Dict[str, float]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_csv(out / "curve.csv",
                      [{"p": pt.p_true, "loss": pt.loss, "ce": pt.ce, "mse": pt.mse} for pt in points],
                      CURVE_COLUMNS)
    summary = summarize_curve(points)
    persist.write_json(out / "curve_summary.json", summary)
    logger.info(f"Curve minimum {summary['min_loss']:.4f} at p={summary['argmin_p']:.3f}, "
                f"range ({summary['min_loss']:.4f}, {summary['max_loss']:.4f})")
    return summary


def trajectory(loss: LossKind, task: Task, inner: InnerConfig) -> TrainRecord:
    """Per-step learning curve of one loss kind on one task"""
    _, record = train_classifier(task, inner, loss, record=True)
    return record


def write_trajectory(record: TrainRecord, path: Union[str, Path]):
    persist.write_csv(path, [persist.to_jsonable(r) for r in record.rows], TRAJECTORY_COLUMNS)
