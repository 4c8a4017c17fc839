"""Model checkpoints.

Layout::

    BLOCKGCN-CKPT <version>\\n
    <model config as one JSON line>\\n
    <tensor count>\\n
    then per tensor: <hierarchical name>\\n<tensor dump>

Parameters and the fixed input statistics are both stored.

Tensor dumps use the format of :func:`blockgcn.tensor.dump_tensor`.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import MalformedHeaderError
from .model import BlockGCN, ModelConfig
from .tensor import dump_tensor, read_tensor

MAGIC = b"BLOCKGCN-CKPT"
VERSION = 1


def save_checkpoint(model: BlockGCN, path: str | Path) -> None:
    params = {**model.named_parameters(), **model.buffers}
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"%s %d\n" % (MAGIC, VERSION))
        fh.write(model.config.to_json().encode() + b"\n")
        fh.write(b"%d\n" % len(params))
        for name, value in params.items():
            fh.write(name.encode() + b"\n")
            fh.write(dump_tensor(value))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> BlockGCN:
    with open(path, "rb") as fh:
        head = fh.readline().split()
        if len(head) != 2 or head[0] != MAGIC:
            raise MalformedHeaderError(f"{path} is not a checkpoint")
        if int(head[1]) != VERSION:
            raise MalformedHeaderError(f"unsupported checkpoint version {head[1].decode()}")
        config = ModelConfig.from_dict(json.loads(fh.readline()))
        count = int(fh.readline())
        values = {}
        for _ in range(count):
            name = fh.readline().rstrip(b"\n").decode()
            values[name] = read_tensor(fh)
    model = BlockGCN(config)
    for name, buf in model.buffers.items():
        if name not in values:
            raise MalformedHeaderError(f"checkpoint lacks buffer {name}")
        buf[...] = values.pop(name)
    model.load_parameters(values)
    return model
