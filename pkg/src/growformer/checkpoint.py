"""Binary checkpoint format.

Layout (little-endian): magic ``NXF1``, u32 format version, u32 JSON
length, the JSON blob (model config, RNG state, counters, optional
experiment config; sorted keys), u32 matrix count, then per matrix:
u32 name length, name bytes, u32 rows, u32 cols, 2-byte dtype tag
(``f8`` or ``f4``), raw row-major payload. Matrices are written in
sorted name order, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import ModelConfig
from .rng import RngState

MAGIC = b"NXF1"
FORMAT_VERSION = 1
_DTYPES = {"f8": np.dtype("<f8"), "f4": np.dtype("<f4")}


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    rng: RngState = field(default_factory=lambda: RngState(0))
    step: int = 0
    tokens: int = 0
    experiment: dict | None = None
    version: int = FORMAT_VERSION


def _header_json(ck: Checkpoint) -> bytes:
    blob = {
        "version": ck.version,
        "model": ck.model_config.to_dict(),
        "rng": ck.rng.to_dict(),
        "step": ck.step,
        "tokens": ck.tokens,
        "experiment": ck.experiment,
    }
    return json.dumps(blob, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _iter_matrices(ck: Checkpoint):
    for prefix, group in (("p/", ck.params), ("m/", ck.adam_m), ("v/", ck.adam_v)):
        for name in group:
            yield prefix + name, group[name]


def save_checkpoint(ck: Checkpoint, path) -> None:
    blob = _header_json(ck)
    entries = sorted(_iter_matrices(ck), key=lambda kv: kv[0])
    dtype_tag = ck.model_config.dtype
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", ck.version, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(entries)))
        for name, mat in entries:
            mat = np.ascontiguousarray(mat, dtype=_DTYPES[dtype_tag])
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(dtype_tag.encode("ascii"))
            fh.write(mat.tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValidationError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, json_len = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported format version {version}")
    off = 12
    blob = json.loads(data[off : off + json_len].decode("utf-8"))
    off += json_len
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    groups = {"p/": params, "m/": adam_m, "v/": adam_v}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        rows, cols = struct.unpack_from("<II", data, off)
        off += 8
        tag = data[off : off + 2].decode("ascii")
        off += 2
        if tag not in _DTYPES:
            raise ValidationError(f"{path}: unknown dtype tag {tag!r}")
        nbytes = rows * cols * _DTYPES[tag].itemsize
        mat = np.frombuffer(data[off : off + nbytes], dtype=_DTYPES[tag]).reshape(rows, cols)
        off += nbytes
        prefix, base = name[:2], name[2:]
        if prefix not in groups:
            raise ValidationError(f"{path}: unknown matrix group {prefix!r}")
        groups[prefix][base] = mat.astype(np.float64)
    return Checkpoint(
        model_config=ModelConfig.from_dict(blob["model"]),
        params=params,
        adam_m=adam_m,
        adam_v=adam_v,
        rng=RngState.from_dict(blob["rng"]),
        step=int(blob["step"]),
        tokens=int(blob["tokens"]),
        experiment=blob.get("experiment"),
        version=version,
    )
