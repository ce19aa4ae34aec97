"""
MNIST IDX parsing and the scaled MNIST evaluation

IDX layout (big-endian): u32 magic, u32 item count, then u32 rows and
u32 columns for image files, followed by the u8 payload.
"""
import gzip
import logging
import struct
from dataclasses import replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from ..core import nn
from ..core.errors import IdxFormatError
from ..core.models import (
    HiddenActivation, LossKind, MlpSpec, MnistConfig, MnistReport, MnistSummary,
    OptimizerConfig, OutputActivation,
)
from ..training.innerloop import accuracy, fit

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
NUM_CLASSES = 10

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

MnistData = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def _read_bytes(path: Path) -> bytes:
    # plain files first, then the .gz archives MNIST is distributed as
    if path.exists():
        return path.read_bytes()
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        with gzip.open(gz, "rb") as fh:
            return fh.read()
    raise IdxFormatError(str(path), "file not found")


def parse_idx_images(data: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode an IDX3 image file into an N x rows x cols uint8 array"""
    if len(data) < 16:
        raise IdxFormatError(path, "truncated header")
    magic, count, rows, cols = struct.unpack_from(">IIII", data, 0)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(path, f"magic number mismatch in image file ({magic} != {IMAGE_MAGIC})")
    expected = count * rows * cols
    if len(data) - 16 != expected:
        raise IdxFormatError(path, f"payload has {len(data) - 16} bytes, header says {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def parse_idx_labels(data: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode an IDX1 label file into an N uint8 array"""
    if len(data) < 8:
        raise IdxFormatError(path, "truncated header")
    magic, count = struct.unpack_from(">II", data, 0)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(path, f"magic number mismatch in label file ({magic} != {LABEL_MAGIC})")
    if len(data) - 8 != count:
        raise IdxFormatError(path, f"payload has {len(data) - 8} labels, header says {count}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size and labels.max() >= NUM_CLASSES:
        raise IdxFormatError(path, f"label {int(labels.max())} out of range")
    return labels


def load_mnist(data_dir: Union[str, Path]) -> MnistData:
    """
    Load the four MNIST files

    Returns:
        Tuple of (train images N x 784 in [0, 1], train labels, test images, test labels)
    """
    data_dir = Path(data_dir)
    paths = {key: data_dir / name for key, name in FILES.items()}
    train_x = parse_idx_images(_read_bytes(paths["train_images"]), str(paths["train_images"]))
    train_y = parse_idx_labels(_read_bytes(paths["train_labels"]), str(paths["train_labels"]))
    test_x = parse_idx_images(_read_bytes(paths["test_images"]), str(paths["test_images"]))
    test_y = parse_idx_labels(_read_bytes(paths["test_labels"]), str(paths["test_labels"]))
    if train_x.shape[0] != train_y.shape[0] or test_x.shape[0] != test_y.shape[0]:
        raise IdxFormatError(str(data_dir), "image and label counts differ")
    logger.info(f"Loaded MNIST: {train_x.shape[0]} train / {test_x.shape[0]} test images")
    return (_flatten(train_x), train_y.astype(np.int64), _flatten(test_x), test_y.astype(np.int64))


def mnist_spec(hidden: int = 128) -> MlpSpec:
    return MlpSpec((784, hidden, NUM_CLASSES), HiddenActivation.RELU, OutputActivation.SOFTMAX)


def mnist_eval(data_dir: Optional[Union[str, Path]], loss: LossKind, cfg: MnistConfig,
               data: Optional[MnistData] = None) -> MnistReport:
    """
    Train the dense MNIST classifier with one loss and report its test accuracy

    The subsets, initialization and batch order depend only on cfg.seed, so
    reports for different losses are paired.

    Args:
        data_dir: Directory holding the IDX files (ignored when data is given)
        loss: Loss to train with; the MLN uses the one-vs-one reduction over 10 classes
        cfg: Subset sizes, epochs and optimizer settings
        data: Already loaded arrays from load_mnist

    Returns:
        MnistReport for this loss
    """
    train_x, train_y, test_x, test_y = data if data is not None else load_mnist(data_dir)
    subset_rng = np.random.default_rng([cfg.seed, 1])
    train_idx = subset_rng.permutation(train_x.shape[0])[:cfg.train_subset]
    test_idx = subset_rng.permutation(test_x.shape[0])[:cfg.test_subset]
    x, y = train_x[train_idx], train_y[train_idx]

    spec = mnist_spec(cfg.hidden)
    rng = np.random.default_rng([cfg.seed, 2])
    params = nn.xavier_init(spec, rng)
    steps = cfg.epochs * max(1, x.shape[0] // cfg.batch_size)
    optimizer = OptimizerConfig(kind=cfg.optimizer, learning_rate=cfg.learning_rate)

    logger.info(f"MNIST with {loss.name}: {x.shape[0]} samples, {steps} steps")
    fit(spec, params, x, y, loss, optimizer, steps, cfg.batch_size, rng)
    test_accuracy = accuracy(spec, params, test_x[test_idx], test_y[test_idx])
    logger.info(f"MNIST {loss.name} test accuracy {test_accuracy:.4f}")
    return MnistReport(loss=loss.name, test_accuracy=test_accuracy, train_size=int(x.shape[0]),
                       test_size=int(test_idx.size), epochs=cfg.epochs, steps=steps, seed=cfg.seed)

def mnist_repeat(data_dir: Optional[Union[str, Path]], loss: LossKind, cfg: MnistConfig,
                 data: Optional[MnistData] = None) -> MnistSummary:
    """Run mnist_eval for seeds cfg.seed .. cfg.seed + cfg.repeats - 1 and summarize"""
    if data is None:
        data = load_mnist(data_dir)
    runs = [mnist_eval(None, loss, replace(cfg, seed=cfg.seed + r), data=data) for r in range(cfg.repeats)]
    accuracies = np.array([r.test_accuracy for r in runs])
    summary = MnistSummary(loss=loss.name, repeats=len(runs), accuracy_mean=float(accuracies.mean()),
                           accuracy_std=float(accuracies.std()), runs=runs)
    logger.info(f"MNIST {loss.name} over {len(runs)} seeds: "
                f"{summary.accuracy_mean:.4f} +- {summary.accuracy_std:.4f}")
    return summary



def _flatten(images: np.ndarray) -> np.ndarray:
    return images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
