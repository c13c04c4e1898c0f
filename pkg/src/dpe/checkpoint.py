"""Versioned binary checkpoints for ensembles.

Layout: an 8-byte magic, a little-endian uint64 header length, a UTF-8
JSON header, then a flat payload of little-endian float64 blocks. The
header carries the architecture, ensemble metadata, the run seed and a
manifest of block names, shapes and byte offsets. Batch-norm running
statistics are stored alongside trainable blocks so a reloaded model
evaluates bit-identically. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from . import layers
from .ensemble import Ensemble
from .errors import ConfigError

MAGIC = b"DPENSCK\x00"
FORMAT_VERSION = 1

_SPEC_KINDS = {
    "dense": layers.Dense,
    "conv2d": layers.Conv2D,
    "relu": layers.ReLU,
    "batchnorm": layers.BatchNorm,
    "softmax": layers.Softmax,
}
_KIND_NAMES = {v: k for k, v in _SPEC_KINDS.items()}


def spec_to_dict(spec) -> dict:
    d = {"kind": _KIND_NAMES[type(spec)]}
    d.update(vars(spec))
    return d


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _SPEC_KINDS:
        raise ConfigError(f"unknown layer kind {kind!r} in checkpoint")
    return _SPEC_KINDS[kind](**d)


def _blocks(model: Ensemble):
    """(name, array) pairs in a fixed order: members outer, layers inner."""
    for e, member in enumerate(model.members):
        for i in range(len(model.specs)):
            for name, arr in member.params[i].items():
                yield f"m{e}/{i}.{name}", arr
            for name, arr in member.state[i].items():
                yield f"m{e}/{i}.{name}", arr


def save(model: Ensemble, path: str) -> None:
    manifest = []
    payload = bytearray()
    for name, arr in _blocks(model):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(data)
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "layer_specs": [spec_to_dict(s) for s in model.specs],
            "input_shape": list(model.input_shape),
            "n_members": model.n_members,
            "beta": model.beta,
            "seed": int(model.seed),
            "blocks": manifest,
        },
        sort_keys=True,
    ).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(len(header).to_bytes(8, "little"))
            f.write(header)
            f.write(bytes(payload))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str) -> Ensemble:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise ConfigError(f"{path}: not an ensemble checkpoint (bad magic)")
    header_len = int.from_bytes(raw[8:16], "little")
    header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(
            f"{path}: checkpoint format version {version} is not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    specs = [spec_from_dict(d) for d in header["layer_specs"]]
    model = Ensemble(
        specs,
        tuple(header["input_shape"]),
        n_members=header["n_members"],
        beta=header["beta"],
        seed=header["seed"],
    )
    payload = raw[16 + header_len :]
    by_name = {b["name"]: b for b in header["blocks"]}
    for name, arr in _blocks(model):
        if name not in by_name:
            raise ConfigError(f"{path}: checkpoint is missing block {name!r}")
        block = by_name[name]
        n = int(np.prod(block["shape"])) if block["shape"] else 1
        start = block["offset"]
        values = np.frombuffer(payload, dtype="<f8", count=n, offset=start)
        arr[...] = values.reshape(block["shape"])
    return model
