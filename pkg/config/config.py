"""
Configuration settings for evoloss

Run settings come from JSON documents layered over a bundled profile
(`desk` or `full`). A document may name its base profile with a top-level
"profile" key; every other top-level key is a section whose keys override
the profile's. Unknown sections or keys are rejected.
"""
import copy
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional

from evoloss.core.errors import ConfigError
from evoloss.core.models import (
    ClassifierKind, EsConfig, EvalConfig, InnerConfig, MnistConfig, OptimizerConfig,
    OptimizerKind, TaskConfig,
)


@dataclass
class RunConfig:
    """Typed view of a merged configuration document"""
    profile: str
    task: TaskConfig
    inner: InnerConfig
    es: EsConfig
    eval: EvalConfig
    mnist: MnistConfig
    seeds: Dict[str, int]
    document: Dict[str, Any] = field(default_factory=dict)

    def with_threads(self, threads: int) -> "RunConfig":
        return replace(self, es=replace(self.es, threads=threads),
                       eval=replace(self.eval, threads=threads))


class Config:
    """Configuration class for evoloss"""

    # Profiles
    PROFILE_DIR: Path = Path(__file__).resolve().parent / "profiles"
    DEFAULT_PROFILE: str = "desk"
    PROFILES = ("desk", "full")

    # Runtime
    THREADS_ENV: str = "EVOLOSS_THREADS"
    LOG_FILE: str = "evoloss.log"
    DEFAULT_SWEEP_STEP: float = 0.001

    # MNIST location used by validate_setup.py and the slow tests
    MNIST_DIR: Optional[str] = os.getenv("EVOLOSS_MNIST_DIR")

    @classmethod
    def default_threads(cls) -> int:
        """Thread count from EVOLOSS_THREADS, else the available parallelism"""
        value = os.getenv(cls.THREADS_ENV)
        if value:
            try:
                threads = int(value)
            except ValueError:
                raise ConfigError(cls.THREADS_ENV, f"not an integer: {value!r}")
            if threads < 1:
                raise ConfigError(cls.THREADS_ENV, f"must be >= 1, got {threads}")
            return threads
        return os.cpu_count() or 1

    @classmethod
    def load_profile(cls, name: str) -> Dict[str, Any]:
        """Raw document of a bundled profile"""
        if name not in cls.PROFILES:
            raise ConfigError("profile", f"unknown profile {name!r}; choose from {', '.join(cls.PROFILES)}")
        with open(cls.PROFILE_DIR / f"{name}.json", "r", encoding="utf-8") as fh:
            return json.load(fh)

    @classmethod
    def load(cls, source: str) -> RunConfig:
        """
        Load a configuration

        Args:
            source: Bundled profile name or path to a JSON document

        Returns:
            RunConfig built from the profile merged with the document
        """
        if source in cls.PROFILES:
            return cls.from_document({"profile": source})
        path = Path(source)
        if not path.is_file():
            raise ConfigError("config", f"no such profile or file: {source}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                document = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"{path} is not valid JSON: {e}")
        if not isinstance(document, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_document(document)

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> RunConfig:
        """Merge a document over its base profile and build the typed config"""
        document = dict(document)
        profile = document.pop("profile", cls.DEFAULT_PROFILE)
        merged = cls.merge(cls.load_profile(profile), document)
        try:
            return cls._build(profile, merged)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("config", str(e))

    @staticmethod
    def merge(base: Dict[str, Any], overrides: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
        """Override base with overrides, rejecting keys the base does not have"""
        merged = copy.deepcopy(base)
        for key, value in overrides.items():
            name = f"{prefix}{key}"
            if key not in merged:
                raise ConfigError(name, "unknown key")
            if isinstance(merged[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(name, "expected an object")
                merged[key] = Config.merge(merged[key], value, prefix=f"{name}.")
            else:
                merged[key] = value
        return merged

    @classmethod
    def _build(cls, profile: str, doc: Dict[str, Any]) -> RunConfig:
        t, i, e, v, m, seeds = (doc["taskgen"], doc["inner"], doc["es"], doc["eval"],
                                doc["mnist"], doc["seeds"])
        task = TaskConfig(
            pool_size=int(t["pool_size"]),
            value_range=(float(t["value_range"][0]), float(t["value_range"][1])),
            dim=int(t["dim"]),
            master_train_size=int(t["master_train_size"]),
            master_val_size=int(t["master_val_size"]),
            task_train_size=int(t["task_train_size"]),
            task_val_size=int(t["task_val_size"]),
            balance_min=float(t["balance_min"]),
            max_attempts=int(t["max_attempts"]),
            ground_truth=_enum(ClassifierKind, t["ground_truth"], "taskgen.ground_truth"),
            hidden=int(t["hidden"]),
        )
        inner = InnerConfig(
            classifier=_enum(ClassifierKind, i["classifier"], "inner.classifier"),
            optimizer=OptimizerConfig(kind=_enum(OptimizerKind, i["optimizer"], "inner.optimizer"),
                                      learning_rate=float(i["learning_rate"])),
            batch_size=int(i["batch_size"]),
            steps=int(i["steps"]),
            hidden=int(i["hidden"]),
            record_every=int(i["record_every"]),
        )
        es = EsConfig(
            generations=None if e["generations"] is None else int(e["generations"]),
            mu=int(e["mu"]),
            lam=int(e["lambda"]),
            sigma_init=float(e["sigma_init"]),
            sigma_floor=float(e["sigma_floor"]),
            per_gene_draws=bool(e["per_gene_draws"]),
            master_seed=int(seeds["master"]),
            inner=inner,
            task=task,
            backend=str(e["backend"]),
        )
        evaluation = EvalConfig(
            family=_enum(ClassifierKind, v["family"], "eval.family"),
            num_tasks=int(v["num_tasks"]),
            optimizer=_enum(OptimizerKind, v["optimizer"], "eval.optimizer"),
            learning_rates={k: float(x) for k, x in v["learning_rates"].items()},
            batch_size=int(v["batch_size"]),
            steps=int(v["steps"]),
            record_every=int(v["record_every"]),
            seed=int(seeds["eval"]),
            backend=str(e["backend"]),
        )
        mnist = MnistConfig(
            train_subset=int(m["train_subset"]),
            test_subset=int(m["test_subset"]),
            epochs=int(m["epochs"]),
            batch_size=int(m["batch_size"]),
            optimizer=_enum(OptimizerKind, m["optimizer"], "mnist.optimizer"),
            learning_rate=float(m["learning_rate"]),
            hidden=int(m["hidden"]),
            repeats=int(m["repeats"]),
            seed=int(seeds["eval"]),
        )
        return RunConfig(profile=profile, task=task, inner=inner, es=es, eval=evaluation,
                         mnist=mnist, seeds={k: int(x) for k, x in seeds.items()}, document=doc)

    @classmethod
    def validate_config(cls, run: RunConfig, training: bool = False) -> bool:
        """
        Check cross-field invariants

        Args:
            run: Configuration to check
            training: Also require the settings only meta-training needs

        Returns:
            True when valid

        Raises:
            ConfigError: naming the first offending key
        """
        t, i, e, v = run.task, run.inner, run.es, run.eval
        lo, hi = t.value_range
        checks = [
            ("taskgen.value_range", 0 <= lo <= hi, "needs 0 <= lo <= hi"),
            ("taskgen.pool_size", t.pool_size >= 1, "must be >= 1"),
            ("taskgen.dim", t.dim >= 1, "must be >= 1"),
            ("taskgen.task_train_size", 1 <= t.task_train_size <= t.master_train_size,
             "must be in 1..master_train_size"),
            ("taskgen.task_val_size", 1 <= t.task_val_size <= t.master_val_size,
             "must be in 1..master_val_size"),
            ("taskgen.balance_min", 0 <= t.balance_min <= 0.5, "must be in [0, 0.5]"),
            ("taskgen.max_attempts", t.max_attempts >= 1, "must be >= 1"),
            ("inner.learning_rate", i.optimizer.learning_rate > 0, "must be > 0"),
            ("inner.batch_size", 1 <= i.batch_size <= t.task_train_size, "must be in 1..task_train_size"),
            ("inner.steps", i.steps >= 1, "must be >= 1"),
            ("inner.record_every", i.record_every >= 1, "must be >= 1"),
            ("es.mu", e.mu >= 1, "must be >= 1"),
            ("es.lambda", e.lam >= 1, "must be >= 1"),
            ("es.sigma_init", e.sigma_init > 0, "must be > 0"),
            ("es.sigma_floor", e.sigma_floor > 0, "must be > 0"),
            ("es.backend", e.backend in ("threading", "loky"), "must be 'threading' or 'loky'"),
            ("eval.learning_rates", all(lr > 0 for lr in v.learning_rates.values()), "must be > 0"),
            ("eval.learning_rates", set(v.learning_rates) <= {"mln", "ce", "mse"}, "keys are mln, ce, mse"),
            ("eval.batch_size", 1 <= v.batch_size <= t.task_train_size, "must be in 1..task_train_size"),
            ("eval.steps", v.steps >= 1, "must be >= 1"),
            ("eval.num_tasks", v.num_tasks >= 1, "must be >= 1"),
            ("mnist.batch_size", 1 <= run.mnist.batch_size <= run.mnist.train_subset,
             "must be in 1..train_subset"),
            ("mnist.repeats", run.mnist.repeats >= 1, "must be >= 1"),
        ]
        if training:
            checks.append(("es.generations", e.generations is not None and e.generations >= 0,
                           "must be set for meta-training (no published value)"))
        for key, ok, detail in checks:
            if not ok:
                raise ConfigError(key, detail)
        return True


def _enum(enum_cls, value: Any, key: str):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(key, f"{value!r} is not one of {choices}")
