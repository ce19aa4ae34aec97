"""
Serialization of genomes and run artifacts

Genome file layout (all integers little-endian):

    magic      4 bytes  b"MLNG"
    version    u16
    n_dims     u8, then n_dims x u32 layer widths
    hidden     u8 activation code
    output     u8 activation code
    prelu      u8 flag
    count      u64 parameter count
    params     count x f32
    has_sigma  u8 flag
    sigma      count x f32 (only when has_sigma)
    crc32      u32 over every preceding byte
"""
import dataclasses
import json
import logging
import os
import shutil
import struct
import zlib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .. import ARTIFACT_VERSION, __version__
from ..core.errors import CheckpointError, DimensionMismatchError, GenomeFileError
from ..core.models import (
    GenerationStats, Genome, HiddenActivation, MlpSpec, OutputActivation,
)
from ..core.nn import genome_length

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b"MLNG"
FORMAT_VERSION = 1

HIDDEN_CODES = {HiddenActivation.PRELU: 0, HiddenActivation.RELU: 1, HiddenActivation.IDENTITY: 2}
OUTPUT_CODES = {OutputActivation.SOFTPLUS: 0, OutputActivation.SOFTMAX: 1, OutputActivation.IDENTITY: 2}

HISTORY_FILE = "history.csv"
TIMING_FILE = "timing.csv"
FITNESS_FILE = "fitness.csv"
MANIFEST_FILE = "manifest.json"
BEST_FILE = "best.mln"
POPULATION_DIR = "population"
STATE_FILE = "state.json"

HISTORY_COLUMNS = ["generation", "best", "median", "mean", "sigma_min", "sigma_med", "sigma_max"]


def encode_genome(genome: Genome, spec: MlpSpec) -> bytes:
    """Encode a genome into the binary file layout"""
    expected = genome_length(spec)
    if genome.params.size != expected:
        raise DimensionMismatchError("genome length", expected, genome.params.size)

    parts = [
        MAGIC,
        struct.pack("<HB", FORMAT_VERSION, len(spec.layer_dims)),
        struct.pack(f"<{len(spec.layer_dims)}I", *spec.layer_dims),
        struct.pack("<BBB", HIDDEN_CODES[spec.hidden_activation],
                    OUTPUT_CODES[spec.output_activation], int(spec.prelu_per_layer)),
        struct.pack("<Q", expected),
        genome.params.astype("<f4").tobytes(),
    ]
    if genome.sigma is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(genome.sigma.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_genome(data: bytes, path: Optional[str] = None) -> Tuple[Genome, MlpSpec]:
    """
    Decode and validate a genome file

    Raises:
        GenomeFileError: reason is "not a genome file", "corrupt" or "inconsistent header"
    """
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise GenomeFileError(GenomeFileError.NOT_A_GENOME, path)
    if len(data) < len(MAGIC) + 4:
        raise GenomeFileError(GenomeFileError.CORRUPT, path, "file too short")
    body, trailer = data[:-4], data[-4:]
    (stored_crc,) = struct.unpack("<I", trailer)
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise GenomeFileError(GenomeFileError.CORRUPT, path, "CRC mismatch")

    try:
        offset = len(MAGIC)
        version, n_dims = struct.unpack_from("<HB", body, offset)
        offset += 3
        if version != FORMAT_VERSION:
            raise GenomeFileError(GenomeFileError.INCONSISTENT, path, f"unsupported version {version}")
        dims = struct.unpack_from(f"<{n_dims}I", body, offset)
        offset += 4 * n_dims
        hidden_code, output_code, prelu = struct.unpack_from("<BBB", body, offset)
        offset += 3
        (count,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        spec = MlpSpec(
            layer_dims=tuple(dims),
            hidden_activation=_decode_code(HIDDEN_CODES, hidden_code, path),
            output_activation=_decode_code(OUTPUT_CODES, output_code, path),
            prelu_per_layer=bool(prelu),
        )
    except (struct.error, DimensionMismatchError) as e:
        raise GenomeFileError(GenomeFileError.INCONSISTENT, path, str(e))

    if count != genome_length(spec):
        raise GenomeFileError(GenomeFileError.INCONSISTENT, path,
                              f"parameter count {count} != {genome_length(spec)} for spec")
    needed = offset + 4 * count + 1
    if len(body) < needed:
        raise GenomeFileError(GenomeFileError.INCONSISTENT, path, "payload shorter than header")
    params = np.frombuffer(body, dtype="<f4", count=count, offset=offset).astype(np.float64)
    offset += 4 * count
    has_sigma = body[offset]
    offset += 1
    sigma = None
    if has_sigma:
        if len(body) != offset + 4 * count:
            raise GenomeFileError(GenomeFileError.INCONSISTENT, path, "sigma block length")
        sigma = np.frombuffer(body, dtype="<f4", count=count, offset=offset).astype(np.float64)
    elif len(body) != offset:
        raise GenomeFileError(GenomeFileError.INCONSISTENT, path, "trailing bytes")
    return Genome(params, sigma), spec


def save_genome(genome: Genome, spec: MlpSpec, path: PathLike):
    """Write a genome file; the data is fsynced before the file is moved into place"""
    _atomic_write(Path(path), encode_genome(genome, spec))


def load_genome(path: PathLike) -> Tuple[Genome, MlpSpec]:
    """Read and validate a genome file"""
    path = Path(path)
    return decode_genome(path.read_bytes(), str(path))


def to_jsonable(obj: Any) -> Any:
    """Convert dataclasses, enums, tuples and numpy scalars into JSON-ready values"""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path: PathLike, payload: Any):
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n"
    _atomic_write(Path(path), text.encode("utf-8"))


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path: PathLike, rows: List[Dict[str, Any]], columns: List[str]):
    """Write rows with a fixed column order"""
    frame = pd.DataFrame(rows, columns=columns)
    _atomic_write(Path(path), frame.to_csv(index=False).encode("utf-8"))


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_manifest(out_dir: PathLike, config: Any, seeds: Dict[str, int]):
    """manifest.json: configuration echo, seeds and versions"""
    write_json(Path(out_dir) / MANIFEST_FILE, {
        "artifact_version": ARTIFACT_VERSION,
        "evoloss_version": __version__,
        "config": config,
        "seeds": seeds,
    })


def write_history(out_dir: PathLike, history: List[GenerationStats]):
    """history.csv, timing.csv and fitness.csv for every finished generation"""
    out_dir = Path(out_dir)
    write_csv(out_dir / HISTORY_FILE,
              [{c: getattr(s, c) for c in HISTORY_COLUMNS} for s in history], HISTORY_COLUMNS)
    write_csv(out_dir / TIMING_FILE,
              [{"generation": s.generation, "seconds": s.seconds} for s in history],
              ["generation", "seconds"])
    write_csv(out_dir / FITNESS_FILE,
              [{"generation": s.generation, "worker": i, "fitness": f}
               for s in history for i, f in enumerate(s.fitness)],
              ["generation", "worker", "fitness"])


def read_history(out_dir: PathLike) -> List[GenerationStats]:
    """Rebuild the generation statistics written by write_history"""
    out_dir = Path(out_dir)
    summary = read_csv(out_dir / HISTORY_FILE)
    timing = read_csv(out_dir / TIMING_FILE).set_index("generation")["seconds"]
    fitness = read_csv(out_dir / FITNESS_FILE)
    history = []
    for row in summary.itertuples(index=False):
        gen = int(row.generation)
        values = fitness[fitness["generation"] == gen].sort_values("worker")["fitness"]
        history.append(GenerationStats(
            generation=gen,
            fitness=[float(v) for v in values],
            best=float(row.best), median=float(row.median), mean=float(row.mean),
            sigma_min=float(row.sigma_min), sigma_med=float(row.sigma_med),
            sigma_max=float(row.sigma_max),
            seconds=float(timing.get(gen, 0.0)),
        ))
    return history


def checkpoint_name(generation: int) -> str:
    return f"gen_{generation:04d}.mln"


def save_population(out_dir: PathLike, genomes: List[Genome], spec: MlpSpec, state: Dict[str, Any]):
    """
    Write every surviving parent and the resume state

    Parents go into a fresh snapshot directory; state.json is replaced last and
    is the only file that names a snapshot, so an interrupted write leaves the
    previous checkpoint intact. Older snapshots are removed afterwards.
    """
    pop_dir = Path(out_dir) / POPULATION_DIR
    pop_dir.mkdir(parents=True, exist_ok=True)
    snapshot = f"snap_{int(state.get('next_generation', 0)):04d}"
    snap_dir = pop_dir / snapshot
    if snap_dir.exists():
        shutil.rmtree(snap_dir)
    snap_dir.mkdir()
    for i, genome in enumerate(genomes):
        save_genome(genome, spec, snap_dir / f"parent_{i:02d}.mln")
    write_json(pop_dir / STATE_FILE, dict(state, parents=len(genomes), snapshot=snapshot))
    for stale in pop_dir.iterdir():
        if stale.is_dir() and stale.name != snapshot:
            shutil.rmtree(stale)


def load_population(out_dir: PathLike) -> Tuple[List[Genome], Dict[str, Any]]:
    pop_dir = Path(out_dir) / POPULATION_DIR
    state_path = pop_dir / STATE_FILE
    if not state_path.exists():
        raise CheckpointError(str(pop_dir), "no population checkpoint to resume from")
    state = read_json(state_path)
    snap_dir = pop_dir / state["snapshot"]
    genomes = [load_genome(snap_dir / f"parent_{i:02d}.mln")[0] for i in range(state["parents"])]
    return genomes, state


def _decode_code(table: Dict[Enum, int], code: int, path: Optional[str]) -> Enum:
    for member, value in table.items():
        if value == code:
            return member
    raise GenomeFileError(GenomeFileError.INCONSISTENT, path, f"unknown activation code {code}")


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
