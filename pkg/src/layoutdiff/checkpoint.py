"""Checkpoint files: an 8-byte little-endian header length, a JSON header,
then a blob of little-endian float32 weights at the offsets the header lists.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import ArchSpec, TinyDenoiser
from .schedules import NoiseSchedule

FORMAT = "layoutdiff-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    engine: str
    arch: ArchSpec
    schedule: NoiseSchedule
    params: dict
    seed: int
    train_config: dict = field(default_factory=dict)
    loss_trace: list = field(default_factory=list)
    dropped_count: int = 0

    def denoiser(self) -> TinyDenoiser:
        net = TinyDenoiser(self.arch, np.random.default_rng(0))
        net.load_parameters(self.params)
        return net

    def header(self) -> dict:
        tensors, offset = [], 0
        for name in sorted(self.params):
            arr = self.params[name]
            nbytes = arr.size * 4
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
            offset += nbytes
        return {
            "format": FORMAT,
            "version": VERSION,
            "engine": self.engine,
            "arch": self.arch.to_dict(),
            "schedule": self.schedule.to_dict(),
            "seed": self.seed,
            "train_config": self.train_config,
            "loss_trace": self.loss_trace,
            "dropped_count": self.dropped_count,
            "n_parameters": int(sum(a.size for a in self.params.values())),
            "tensors": tensors,
            "blob_bytes": offset,
        }


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    header = ckpt.header()
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for t in header["tensors"]:
            fh.write(np.ascontiguousarray(ckpt.params[t["name"]], dtype="<f4").tobytes())
    return path


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8:8 + n].decode("utf-8"))
    if header.get("format") != FORMAT or "version" not in header:
        raise ValueError(f"{path}: not a checkpoint")
    blob = data[8 + n:]
    if len(blob) != header["blob_bytes"]:
        raise ValueError(f"{path}: weight blob has {len(blob)} bytes, header says {header['blob_bytes']}")
    arch = ArchSpec(**header["arch"])
    params = {}
    for t in header["tensors"]:
        arr = np.frombuffer(blob, dtype="<f4", count=t["nbytes"] // 4, offset=t["offset"])
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.dtype(arch.dtype))
    if sum(a.size for a in params.values()) != header["n_parameters"]:
        raise ValueError(f"{path}: weight count does not match header")
    return Checkpoint(
        engine=header["engine"],
        arch=arch,
        schedule=NoiseSchedule.from_dict(header["schedule"]),
        params=params,
        seed=header["seed"],
        train_config=header["train_config"],
        loss_trace=header["loss_trace"],
        dropped_count=header["dropped_count"],
    )
