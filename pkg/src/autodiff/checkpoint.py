"""
Flat binary checkpoints for parameter sets and optimizer state.

Layout (little-endian):
    magic b"DPNF" | u32 version | u32 count
    per record: u32 name length | utf-8 name | u32 rank | u64 dims[rank] | f64 data
"""

import struct
from pathlib import Path
from typing import BinaryIO, Dict, Optional, Union

import numpy as np

from src.autodiff.optim import AdamState
from src.autodiff.params import ParameterSet

MAGIC = b"DPNF"
VERSION = 1

PathLike = Union[str, Path]


def write_records(handle: BinaryIO, records: Dict[str, np.ndarray]) -> None:
    handle.write(MAGIC)
    handle.write(struct.pack("<II", VERSION, len(records)))
    for name, value in records.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f8")
        handle.write(struct.pack("<I", len(encoded)))
        handle.write(encoded)
        handle.write(struct.pack("<I", array.ndim))
        handle.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        handle.write(array.tobytes())


def read_records(handle: BinaryIO) -> Dict[str, np.ndarray]:
    magic = handle.read(4)
    if magic != MAGIC:
        raise ValueError(f"not a parameter checkpoint (magic {magic!r})")
    version, count = struct.unpack("<II", handle.read(8))
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    records: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = struct.unpack("<I", handle.read(4))
        name = handle.read(name_length).decode("utf-8")
        (rank,) = struct.unpack("<I", handle.read(4))
        dims = struct.unpack(f"<{rank}Q", handle.read(8 * rank)) if rank else ()
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(handle.read(8 * size), dtype="<f8")
        if data.size != size:
            raise ValueError(f"truncated record {name!r}")
        records[name] = data.reshape(dims).astype(np.float64)
    return records


def save_parameters(path: PathLike, params: ParameterSet) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        write_records(handle, params.state_dict())


def load_parameters(path: PathLike, params: Optional[ParameterSet] = None) -> ParameterSet:
    """Load into `params` (shapes checked) or into a fresh set of trainable parameters."""
    with open(path, "rb") as handle:
        records = read_records(handle)
    if params is None:
        params = ParameterSet()
        for name, value in records.items():
            params.add(name, value)
        return params
    params.load_state_dict(records)
    return params


def save_optimizer(path: PathLike, state: AdamState) -> None:
    records: Dict[str, np.ndarray] = {"step": np.array([float(state.step)])}
    for name in state.m:
        records[f"m/{name}"] = state.m[name]
        records[f"v/{name}"] = state.v[name]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        write_records(handle, records)


def load_optimizer(path: PathLike) -> AdamState:
    with open(path, "rb") as handle:
        records = read_records(handle)
    state = AdamState(step=int(records.pop("step")[0]))
    for key, value in records.items():
        kind, name = key.split("/", 1)
        getattr(state, kind)[name] = value.copy()
    return state
