"""
Core data models and enums for evoloss
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Dict, Any, Optional, Tuple

import numpy as np

from .errors import DimensionMismatchError


class HiddenActivation(Enum):
    """Activation applied after every hidden layer"""
    PRELU = "prelu"
    RELU = "relu"
    IDENTITY = "identity"


class OutputActivation(Enum):
    """Activation applied after the last layer"""
    SOFTPLUS = "softplus"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class ClassifierKind(Enum):
    """Dense network family used for ground truths and learners"""
    LINEAR = "linear"
    MLP3 = "mlp3"


class Provenance(Enum):
    """Which side of the meta-learning split a dataset belongs to"""
    META_TRAIN = "meta_train"
    META_TEST = "meta_test"


class Split(Enum):
    """Role of a dataset inside a task"""
    TRAINING = "training"
    VALIDATION = "validation"


class LossType(Enum):
    """Loss functions a classifier can be trained with"""
    MLN = "mln"
    CROSS_ENTROPY = "ce"
    MEAN_SQUARED_ERROR = "mse"


class OptimizerKind(Enum):
    """Update rule used in the inner loop"""
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a dense feed-forward network"""
    layer_dims: Tuple[int, ...]
    hidden_activation: HiddenActivation = HiddenActivation.IDENTITY
    output_activation: OutputActivation = OutputActivation.IDENTITY
    prelu_per_layer: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise DimensionMismatchError("layer_dims length", ">= 2", len(dims))
        if any(d < 1 for d in dims):
            raise DimensionMismatchError("layer_dims entries", ">= 1", list(dims))
        object.__setattr__(self, "layer_dims", dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    def is_hidden(self, layer: int) -> bool:
        return layer < self.num_layers - 1

    def has_alpha(self, layer: int) -> bool:
        """Whether the layer carries a learnable PReLU slope"""
        return (self.is_hidden(layer)
                and self.prelu_per_layer
                and self.hidden_activation == HiddenActivation.PRELU)


# The meta-loss network: [p_true, p_false, 1, 0] -> positive scalar
MLN_SPEC = MlpSpec(
    layer_dims=(4, 32, 64, 128, 256, 512, 1),
    hidden_activation=HiddenActivation.PRELU,
    output_activation=OutputActivation.SOFTPLUS,
    prelu_per_layer=True,
)


@dataclass
class ForwardTrace:
    """Pre- and post-activations recorded by one forward pass"""
    spec: MlpSpec
    param_count: int
    pre: List[np.ndarray]   # one per layer
    post: List[np.ndarray]  # post[0] is the input batch, post[i + 1] follows layer i

    @property
    def batch_size(self) -> int:
        return self.post[0].shape[0]


@dataclass
class Genome:
    """MLN parameters paired with per-gene mutation strengths"""
    params: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=np.float64)
            if self.sigma.shape != self.params.shape:
                raise DimensionMismatchError("sigma length", self.params.size, self.sigma.size)

    def __len__(self) -> int:
        return self.params.size

    def copy(self) -> "Genome":
        return Genome(self.params.copy(), None if self.sigma is None else self.sigma.copy())

    def stored(self) -> "Genome":
        """The genome exactly as a checkpoint file holds it (single precision)"""
        params = self.params.astype(np.float32).astype(np.float64)
        sigma = None if self.sigma is None else self.sigma.astype(np.float32).astype(np.float64)
        return Genome(params, sigma)


@dataclass
class ScoredGenome:
    """A genome with the fitness it obtained and its slot in the generation"""
    genome: Genome
    fitness: float
    index: int


@dataclass
class DistributionPool:
    """Normal distributions that generate feature vectors"""
    means: np.ndarray
    stds: np.ndarray

    @property
    def size(self) -> int:
        return int(self.means.size)

    @property
    def entries(self) -> List[Tuple[float, float]]:
        return [(float(m), float(s)) for m, s in zip(self.means, self.stds)]


@dataclass
class Dataset:
    """A block of generated feature vectors"""
    features: np.ndarray
    provenance: Provenance = Provenance.META_TRAIN
    split: Split = Split.TRAINING

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class MetaSplit:
    """Master training and validation sets for one provenance"""
    training: Dataset
    validation: Dataset


@dataclass
class MetaDatasets:
    """Everything task sampling draws from for one run seed"""
    pool: DistributionPool
    meta_train: MetaSplit
    meta_test: MetaSplit


@dataclass
class GroundTruth:
    """Known classifier that labels a task"""
    kind: ClassifierKind
    spec: MlpSpec
    params: np.ndarray


@dataclass
class Task:
    """A generated classifier-learning task"""
    train_features: np.ndarray
    train_labels: np.ndarray
    val_features: np.ndarray
    val_labels: np.ndarray
    ground_truth: GroundTruth


@dataclass(frozen=True)
class LossKind:
    """A loss function; the MLN variant carries its network parameters"""
    type: LossType
    params: Optional[np.ndarray] = None
    spec: MlpSpec = MLN_SPEC

    @classmethod
    def mln(cls, params: np.ndarray, spec: MlpSpec = MLN_SPEC) -> "LossKind":
        return cls(LossType.MLN, np.asarray(params, dtype=np.float64), spec)

    @classmethod
    def cross_entropy(cls) -> "LossKind":
        return cls(LossType.CROSS_ENTROPY)

    @classmethod
    def mean_squared_error(cls) -> "LossKind":
        return cls(LossType.MEAN_SQUARED_ERROR)

    @property
    def name(self) -> str:
        return self.type.value


@dataclass
class TaskConfig:
    """Task generation settings"""
    pool_size: int = 50
    value_range: Tuple[float, float] = (0.0, 5.0)
    dim: int = 5
    master_train_size: int = 500_000
    master_val_size: int = 500_000
    task_train_size: int = 50_000
    task_val_size: int = 10_000
    balance_min: float = 0.4
    max_attempts: int = 1000
    ground_truth: ClassifierKind = ClassifierKind.LINEAR
    hidden: int = 32


@dataclass
class OptimizerConfig:
    """Inner-loop update rule"""
    kind: OptimizerKind = OptimizerKind.SGD
    learning_rate: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class InnerConfig:
    """Classifier training settings"""
    classifier: ClassifierKind = ClassifierKind.LINEAR
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 500
    steps: int = 1000
    seed: int = 0
    hidden: int = 32
    record_every: int = 1
    identity_head: bool = False  # raw logits as predictions; gradient-identity checks only


@dataclass
class EsConfig:
    """Outer-loop evolution settings"""
    generations: int
    mu: int = 25
    lam: int = 25
    sigma_init: float = 0.05
    sigma_floor: float = 1e-6
    per_gene_draws: bool = False
    master_seed: int = 0
    inner: InnerConfig = field(default_factory=InnerConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    threads: int = 1
    backend: str = "threading"


@dataclass
class EvalConfig:
    """Meta-testing settings"""
    family: ClassifierKind = ClassifierKind.LINEAR
    num_tasks: int = 20
    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rates: Dict[str, float] = field(
        default_factory=lambda: {"mln": 1e-4, "ce": 1e-3, "mse": 1e-3})
    batch_size: int = 500
    steps: int = 1000
    record_every: int = 1
    seed: int = 0
    threads: int = 1
    backend: str = "threading"


@dataclass
class MnistConfig:
    """Scaled MNIST evaluation settings"""
    train_subset: int = 10_000
    test_subset: int = 2_000
    epochs: int = 5
    batch_size: int = 100
    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 1e-3
    hidden: int = 128
    seed: int = 0
    repeats: int = 1


@dataclass
class TrainRow:
    """One recorded point of a training run"""
    step: int
    train_loss: float
    meta_loss: float
    val_accuracy: float


@dataclass
class TrainRecord:
    """Learning curve and final parameters of one training run"""
    rows: List[TrainRow] = field(default_factory=list)
    final_params: Optional[np.ndarray] = None


@dataclass
class GenerationStats:
    """Summary of one ES generation"""
    generation: int
    fitness: List[float]
    best: float
    median: float
    mean: float
    sigma_min: float
    sigma_med: float
    sigma_max: float
    seconds: float = 0.0


@dataclass
class TaskRow:
    """Outcome of training with one loss on one meta-testing task"""
    task_seed: int
    loss: str
    final_accuracy: float
    final_meta_loss: float
    steps_to_95: int


@dataclass
class EvalReport:
    """Paired comparison of loss kinds on generated tasks"""
    family: str
    rows: List[TaskRow] = field(default_factory=list)
    aggregates: Dict[str, Dict[str, float]] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)


@dataclass
class CurvePoint:
    """Loss of the prediction (p_true, 1 - p_true) against the label (1, 0)"""
    p_true: float
    loss: float
    ce: float = 0.0
    mse: float = 0.0


@dataclass
class MnistReport:
    """Test accuracy of one loss kind on the MNIST subset"""
    loss: str
    test_accuracy: float
    train_size: int
    test_size: int
    epochs: int
    steps: int
    seed: int = 0


@dataclass
class MnistSummary:
    """Test accuracy of one loss kind over repeated seeds"""
    loss: str
    repeats: int
    accuracy_mean: float
    accuracy_std: float
    runs: List[MnistReport] = field(default_factory=list)
