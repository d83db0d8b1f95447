"""Checkpoint container.

Layout::

    b"KAECKPT\\n"
    uint64 little-endian: byte length of the header
    header: UTF-8 JSON (sorted keys) with format version, model config,
            vocabulary characters, tensor index (name, shape, offset) and
            free-form metadata (seed, epoch, optimizer step, rng state, ...)
    tensor payload: little-endian float32, concatenated in index order
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import KAEModel, ModelConfig
from .ndiff import Adam
from .vocab import Vocabulary

MAGIC = b"KAECKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: KAEModel
    vocab: Vocabulary
    meta: dict = field(default_factory=dict)
    optimizer_arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def make_optimizer(self, **kw) -> Adam:
        opt_meta = self.meta.get("optimizer", {})
        args = {k: opt_meta[k] for k in ("lr", "beta1", "beta2", "eps") if k in opt_meta}
        args.update(kw)
        opt = Adam(self.model.params, **args)
        if self.optimizer_arrays:
            opt.load_state_arrays(self.optimizer_arrays, int(opt_meta.get("step_count", 0)))
        return opt


def _to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def save_checkpoint(path, model: KAEModel, vocab: Vocabulary, optimizer: Adam | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    arrays: dict[str, np.ndarray] = {f"param.{k}": v.data for k, v in model.params.items()}
    meta = dict(meta or {})
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
        meta["optimizer"] = {
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "step_count": optimizer.step_count,
        }
    index = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += len(blob)
        blobs.append(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "vocabulary": vocab.to_list(),
        "tensors": index,
        "meta": _to_jsonable(meta),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)
    return path


def read_header(path) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a KAE checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format_version')}")
    return header, len(MAGIC) + 8 + n


def load_checkpoint(path) -> Checkpoint:
    header, start = read_header(path)
    raw = Path(path).read_bytes()[start:]
    cfg = ModelConfig(**header["model_config"])
    vocab = Vocabulary.from_list(header["vocabulary"])
    model = KAEModel.__new__(KAEModel)
    model.cfg = cfg
    model.params = {}
    opt_arrays = {}
    from . import ndiff as nd

    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=entry["offset"]).reshape(entry["shape"])
        arr = arr.astype(cfg.np_dtype)
        name = entry["name"]
        if name.startswith("param."):
            key = name[len("param."):]
            model.params[key] = nd.parameter(arr, name=key)
        else:
            opt_arrays[name] = arr
    expected = KAEModel(cfg, seed=0).params.keys()
    if list(expected) != list(model.params.keys()):
        raise CheckpointError("checkpoint tensors do not match the model configuration")
    return Checkpoint(model, vocab, header["meta"], opt_arrays)
