"""Self-describing checkpoint files.

Layout: a UTF-8 text header terminated by an empty line::

    RECEXTRACT-CHECKPOINT
    version: 1
    arch: sasrec
    hparams: {"hidden": 64, ...}
    tensors: 37

followed by one record per tensor, all integers little-endian uint32::

    name_len, name (UTF-8), rank, extents[rank], data (float32 LE, row-major)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = "RECEXTRACT-CHECKPOINT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model, path):
    header = [MAGIC, f"version: {VERSION}", f"arch: {model.arch}",
              f"hparams: {json.dumps(model.hparams(), sort_keys=True)}",
              f"tensors: {len(model.params)}", "", ""]
    buf = bytearray("\n".join(header).encode("utf-8"))
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name].data, dtype="<f4")
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


def read_checkpoint(path):
    """Return (arch, hparams, {name: float32 array})."""
    blob = Path(path).read_bytes()
    end = blob.find(b"\n\n")
    if end < 0:
        raise CheckpointError(f"{path}: missing header terminator")
    lines = blob[:end].decode("utf-8").split("\n")
    if lines[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    fields = dict(line.split(": ", 1) for line in lines[1:])
    if int(fields["version"]) != VERSION:
        raise CheckpointError(f"{path}: unsupported version {fields['version']}")
    hparams = json.loads(fields["hparams"])
    at = end + 2
    tensors = {}
    for _ in range(int(fields["tensors"])):
        (n,) = struct.unpack_from("<I", blob, at)
        at += 4
        name = blob[at:at + n].decode("utf-8")
        at += n
        (rank,) = struct.unpack_from("<I", blob, at)
        at += 4
        shape = struct.unpack_from(f"<{rank}I", blob, at)
        at += 4 * rank
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=at).reshape(shape).astype(np.float32)
        at += 4 * count
    if at != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - at} trailing bytes")
    return fields["arch"], hparams, tensors


def load_checkpoint(path):
    from . import build_model

    arch, hparams, tensors = read_checkpoint(path)
    model = build_model(arch, **hparams)
    model.load_state_dict(tensors)
    return model
