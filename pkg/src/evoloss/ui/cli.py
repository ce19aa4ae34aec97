"""
Command-line interface for evoloss

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from ..analysis import evalreport
from ..analysis.mnist import load_mnist, mnist_repeat
from ..core.errors import ConfigError, EvolossError
from ..core.models import ClassifierKind, Genome, LossKind, MlpSpec
from ..core.nn import genome_length
from ..evolution.strategy import run_es, tau_constants
from ..storage import persist
from ..tasks.taskgen import build_meta_datasets, generate_task
try:
    from config.config import Config, RunConfig
except ImportError:
    import os
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', '..'))
    from config.config import Config, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

LOSS_CHOICES = ["mln", "ce", "mse", "all"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoloss",
        description="Evolve a meta-loss network on generated tasks and evaluate it",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="meta-train an MLN with the evolution strategy")
    train.add_argument("--config", required=True, help="profile name (desk, full) or JSON file")
    train.add_argument("--seed", type=int, help="master seed override")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--resume", action="store_true", help="continue from the last checkpoint in --out")
    _add_threads(train)

    ev = sub.add_parser("eval", help="compare an MLN with CE and MSE on generated tasks")
    ev.add_argument("--genome", required=True)
    ev.add_argument("--family", choices=[k.value for k in ClassifierKind])
    ev.add_argument("--tasks", type=int, help="number of meta-testing tasks")
    ev.add_argument("--seed", type=int, help="evaluation seed override")
    ev.add_argument("--config", default=Config.DEFAULT_PROFILE)
    ev.add_argument("--out", required=True)
    _add_master_seed(ev)
    _add_threads(ev)

    sweep = sub.add_parser("sweep", help="write the MLN function curve")
    sweep.add_argument("--genome", required=True)
    sweep.add_argument("--step", type=float, default=Config.DEFAULT_SWEEP_STEP)
    sweep.add_argument("--out", required=True)

    traj = sub.add_parser("trajectory", help="per-step learning curves on one meta-testing task")
    traj.add_argument("--genome", help="MLN genome (needed for --loss mln/all)")
    traj.add_argument("--loss", choices=LOSS_CHOICES)
    traj.add_argument("--family", choices=[k.value for k in ClassifierKind])
    traj.add_argument("--seed", type=int)
    traj.add_argument("--every", type=int, default=1, help="record cadence in steps")
    traj.add_argument("--config", default=Config.DEFAULT_PROFILE)
    traj.add_argument("--out", required=True)
    _add_master_seed(traj)

    mn = sub.add_parser("mnist", help="train the dense MNIST classifier with each loss")
    mn.add_argument("--genome", help="MLN genome (needed for --loss mln/all)")
    mn.add_argument("--data-dir", required=True)
    mn.add_argument("--loss", choices=LOSS_CHOICES, default="all")
    mn.add_argument("--repeats", type=int, help="seeds per loss (default: mnist.repeats)")
    mn.add_argument("--config", default=Config.DEFAULT_PROFILE)
    mn.add_argument("--out", required=True)

    insp = sub.add_parser("inspect", help="describe a genome file")
    insp.add_argument("--genome", required=True)
    insp.add_argument("--dump-task", help="also write a meta-training task as CSV into this directory")
    insp.add_argument("--seed", type=int, default=0, help="task seed for --dump-task")
    insp.add_argument("--config", default=Config.DEFAULT_PROFILE)
    _add_master_seed(insp)
    return parser


def _add_threads(parser: argparse.ArgumentParser):
    parser.add_argument("--threads", type=int, help="worker threads (default: $EVOLOSS_THREADS or CPU count)")


def _add_master_seed(parser: argparse.ArgumentParser):
    parser.add_argument("--master-seed", type=int,
                        help="seed of the shared Gaussian pool (default: the manifest.json next to --genome, "
                             "then the config)")


def _master_seed(args, run: RunConfig) -> int:
    """Pool seed for meta-testing tasks; a genome from a training run keeps that run's pool"""
    if args.master_seed is not None:
        return args.master_seed
    if args.genome:
        manifest = Path(args.genome).parent / persist.MANIFEST_FILE
        if manifest.exists():
            seed = int(persist.read_json(manifest)["seeds"]["master"])
            logger.info(f"Using master seed {seed} from {manifest}")
            return seed
    return run.seeds["master"]


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads", f"must be >= 1, got {args.threads}")
        return args.threads
    return Config.default_threads()


def _load_config(source: str, training: bool = False) -> RunConfig:
    run = Config.load(source)
    Config.validate_config(run, training=training)
    return run


def _load_mln(path: str) -> Genome:
    genome, spec = persist.load_genome(path)
    if spec.input_dim != 4 or spec.output_dim != 1:
        raise ConfigError("--genome", f"{path} holds a {list(spec.layer_dims)} network, not a meta-loss network")
    return genome


def _loss_kinds(choice: str, genome_path: Optional[str]) -> List[LossKind]:
    names = ["mln", "ce", "mse"] if choice == "all" else [choice]
    if "mln" in names and genome_path is None:
        raise ConfigError("--genome", f"required for --loss {choice}")
    kinds = []
    for name in names:
        if name == "mln":
            genome, spec = persist.load_genome(genome_path)
            kinds.append(LossKind.mln(genome.params, spec))
        elif name == "ce":
            kinds.append(LossKind.cross_entropy())
        else:
            kinds.append(LossKind.mean_squared_error())
    return kinds


def cmd_train(args) -> int:
    """Run the evolution strategy and leave checkpoints, history and best.mln in --out"""
    run = _load_config(args.config, training=True)
    seed = args.seed
    manifest = Path(args.out) / persist.MANIFEST_FILE
    if seed is None and args.resume and manifest.exists():
        seed = int(persist.read_json(manifest)["seeds"]["master"])
    if seed is not None:
        run = replace(run, es=replace(run.es, master_seed=seed), seeds=dict(run.seeds, master=seed))
    run = run.with_threads(_threads(args))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / Config.LOG_FILE)
    handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
    logging.getLogger().addHandler(handler)
    try:
        persist.write_manifest(out, {"profile": run.profile, "document": run.document}, run.seeds)
        logger.info(f"Meta-training: mu={run.es.mu} lambda={run.es.lam} generations={run.es.generations} "
                    f"threads={run.es.threads} -> {out}")
        _, history = run_es(run.es, out_dir=out, resume=args.resume)
        logger.info(f"Finished {len(history)} generations; best fitness {max(s.best for s in history):.6f}")
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    """Paired MLN / CE / MSE comparison on meta-testing tasks"""
    run = _load_config(args.config)
    genome = _load_mln(args.genome)
    eval_cfg = replace(run.eval, threads=_threads(args))
    if args.seed is not None:
        eval_cfg = replace(eval_cfg, seed=args.seed)
    family = ClassifierKind(args.family) if args.family else eval_cfg.family
    num_tasks = args.tasks if args.tasks is not None else eval_cfg.num_tasks

    datasets = build_meta_datasets(run.task, _master_seed(args, run))
    report = evalreport.compare_on_generated(genome.params, family, num_tasks, eval_cfg, run.task, datasets)
    evalreport.write_report(report, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Write curve.csv and curve_summary.json for a genome"""
    genome, spec = persist.load_genome(args.genome)
    points = evalreport.sweep_curve(genome.params, args.step, spec)
    evalreport.write_curve(points, args.out)
    return EXIT_OK


def cmd_trajectory(args) -> int:
    """Write traj_<kind>.csv for each requested loss on one meta-testing task"""
    run = _load_config(args.config)
    choice = args.loss or ("mln" if args.genome else "ce")
    kinds = _loss_kinds(choice, args.genome)
    family = ClassifierKind(args.family) if args.family else run.eval.family
    seed = args.seed if args.seed is not None else run.eval.seed
    if args.every < 1:
        raise ConfigError("--every", f"must be >= 1, got {args.every}")

    datasets = build_meta_datasets(run.task, _master_seed(args, run))
    task_seed, task = evalreport.eval_task(datasets, run.task, family, seed, 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in kinds:
        inner = evalreport.inner_config_for(run.eval, kind, family, task_seed, run.task.hidden)
        record = evalreport.trajectory(kind, task, replace(inner, record_every=args.every))
        evalreport.write_trajectory(record, out / f"traj_{kind.name}.csv")
        last = record.rows[-1]
        logger.info(f"Trajectory {kind.name}: final meta-loss {last.meta_loss:.6f}, accuracy {last.val_accuracy:.4f}")
    return EXIT_OK


def cmd_mnist(args) -> int:
    """Scaled MNIST comparison; writes mnist_report.json"""
    run = _load_config(args.config)
    kinds = _loss_kinds(args.loss, args.genome)
    mnist_cfg = run.mnist
    if args.repeats is not None:
        if args.repeats < 1:
            raise ConfigError("--repeats", f"must be >= 1, got {args.repeats}")
        mnist_cfg = replace(mnist_cfg, repeats=args.repeats)
    data = load_mnist(args.data_dir)
    reports = [mnist_repeat(args.data_dir, kind, mnist_cfg, data=data) for kind in kinds]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persist.write_json(out / "mnist_report.json", {
        "results": reports,
        "config": mnist_cfg,
        "reference": evalreport.REFERENCE["mnist_lenet"],
    })
    return EXIT_OK


def describe_genome(genome: Genome, spec: MlpSpec) -> List[str]:
    """Human-readable summary lines for inspect"""
    n = genome_length(spec)
    tau0, tau1 = tau_constants(n)
    lines = [
        f"layers: {list(spec.layer_dims)}",
        f"hidden activation: {spec.hidden_activation.value}",
        f"output activation: {spec.output_activation.value}",
        f"prelu per layer: {spec.prelu_per_layer}",
        f"N_w={n:,}",
        f"tau0={tau0:.6f}",
        f"tau1={tau1:.6f}",
    ]
    if genome.sigma is None:
        lines.append("sigma: none")
    else:
        s = genome.sigma
        lines.append(f"sigma: min={s.min():.6g} median={np.median(s):.6g} max={s.max():.6g} mean={s.mean():.6g}")
    return lines


def cmd_inspect(args) -> int:
    """Print the spec, genome length, tau constants and sigma statistics"""
    genome, spec = persist.load_genome(args.genome)
    for line in describe_genome(genome, spec):
        print(line)
    if args.dump_task:
        run = _load_config(args.config)
        datasets = build_meta_datasets(run.task, _master_seed(args, run))
        task = generate_task(run.task, datasets.meta_train, np.random.default_rng(args.seed))
        out = Path(args.dump_task)
        out.mkdir(parents=True, exist_ok=True)
        columns = [f"f{i}" for i in range(run.task.dim)] + ["label"]
        for name, x, y in (("task_train.csv", task.train_features, task.train_labels),
                           ("task_val.csv", task.val_features, task.val_labels)):
            rows = [dict(zip(columns, list(features) + [int(lab)])) for features, lab in zip(x, y)]
            persist.write_csv(out / name, rows, columns)
        print(f"task written to {out}")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "trajectory": cmd_trajectory,
    "mnist": cmd_mnist,
    "inspect": cmd_inspect,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (EvolossError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
