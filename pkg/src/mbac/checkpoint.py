"""Checkpoint files: a key=value text header, a blank line, then binary arrays.

Each binary record is::

    uint32 name length | name (UTF-8) | uint32 rank | uint32 dim * rank | float32 data

all little-endian.  Arrays are always stored as 32-bit floats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT = "mbac-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)

    def group(self, prefix):
        """Arrays under ``prefix`` with the prefix stripped."""
        n = len(prefix)
        return {k[n:]: v for k, v in self.arrays.items() if k.startswith(prefix)}

    def put_group(self, prefix, arrays):
        for k, v in arrays.items():
            self.arrays[prefix + k] = v

    @property
    def lite(self):
        return self.meta.get("lite", "0") == "1"


def save(ckpt, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"format={FORMAT}", f"version={VERSION}"]
    for k, v in ckpt.meta.items():
        if k in ("format", "version"):
            continue
        v = str(v)
        if "\n" in v or "=" in k or "\n" in k:
            raise CheckpointError(f"header entry {k!r} cannot contain newlines or '=' in the key")
        lines.append(f"{k}={v}")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n\n").encode("utf-8"))
        for name, arr in ckpt.arrays.items():
            arr = np.asarray(arr, dtype="<f4", order="C")  # keeps rank-0 arrays rank 0
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    return path


def load(path):
    data = Path(path).read_bytes()
    end = data.find(b"\n\n")
    if end < 0:
        raise CheckpointError(f"{path}: missing header terminator")
    meta = {}
    for line in data[:end].decode("utf-8").split("\n"):
        k, _, v = line.partition("=")
        meta[k] = v
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if int(meta.get("version", -1)) != VERSION:
        raise CheckpointError(f"{path}: unsupported version {meta.get('version')}")
    pos = end + 2
    arrays = {}
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
            pos += 4 * count
            arrays[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt record") from exc
    return Checkpoint(meta, arrays)
