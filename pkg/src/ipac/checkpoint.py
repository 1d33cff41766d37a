"""Binary checkpoint format.

Layout::

    b"IPAC" | version: u32 LE | header_len: u64 LE | header: UTF-8 JSON | tensor data

Tensor data follows the header's ``parameters`` manifest in order, as
little-endian float32 by default. Training-state checkpoints use float64
(``"dtype": "<f8"``) so that resumed runs continue bit-for-bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, EncoderModel
from .errors import CheckpointError
from .lora import LoraConfig
from .numerics import Tensor
from .phoneme import Vocabulary

MAGIC = b"IPAC"
VERSION = 1
DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    model: EncoderModel
    vocab: Vocabulary | None = None
    extra_tensors: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def encode_checkpoint(model: EncoderModel, vocab: Vocabulary | None = None,
                      extra_tensors: dict[str, np.ndarray] | None = None,
                      meta: dict | None = None, dtype: str = "float32") -> bytes:
    if dtype not in DTYPES:
        raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
    np_dtype = DTYPES[dtype]
    tensors = [(n, p.data) for n, p in model.params.items()]
    tensors += list((extra_tensors or {}).items())
    header = {
        "config": model.config.to_dict(),
        "lora": None if model.lora is None else model.lora.to_dict(),
        "projection_active": model.projection_active,
        "trainable": sorted(n for n, p in model.params.items() if p.requires_grad),
        "vocabulary": None if vocab is None else {"symbols": list(vocab.symbols)},
        "dtype": np_dtype,
        "parameters": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        "extra": sorted((extra_tensors or {}).keys()),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(blob)), blob]
    for _, a in tensors:
        parts.append(np.ascontiguousarray(a, dtype=np_dtype).tobytes())
    return b"".join(parts)


def save_checkpoint(path: str | Path, model: EncoderModel, vocab: Vocabulary | None = None,
                    extra_tensors: dict[str, np.ndarray] | None = None,
                    meta: dict | None = None, dtype: str = "float32") -> None:
    data = encode_checkpoint(model, vocab, extra_tensors, meta, dtype)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if raw[:4] != MAGIC:
        raise CheckpointError("not an IPAC checkpoint (bad magic)")
    if len(raw) < 16:
        raise CheckpointError("truncated checkpoint header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    np_dtype = np.dtype(header.get("dtype", "<f4"))
    offset = 16 + hlen
    extra_names = set(header.get("extra", []))
    trainable = set(header.get("trainable", []))
    params, extras = {}, {}
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np_dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"truncated data for {entry['name']}")
        arr = np.frombuffer(raw, dtype=np_dtype, count=count, offset=offset).astype(np.float64)
        arr = arr.reshape(shape)
        offset += nbytes
        if entry["name"] in extra_names:
            extras[entry["name"]] = arr
        else:
            params[entry["name"]] = Tensor(arr, requires_grad=entry["name"] in trainable, name=entry["name"])
    if offset != len(raw):
        raise CheckpointError("trailing bytes after tensor data")
    config = EncoderConfig.from_dict(header["config"])
    lora = None if header["lora"] is None else LoraConfig.from_dict(header["lora"])
    model = EncoderModel(config, params, lora, header["projection_active"])
    vocab = None if header["vocabulary"] is None else Vocabulary(header["vocabulary"]["symbols"])
    return Checkpoint(model, vocab, extras, header.get("meta", {}))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
