"""Binary model checkpoints.

Layout: magic ``G2GM``, uint32 LE format version, uint32 LE metadata length,
UTF-8 JSON metadata, then every parameter tensor as float64 LE in
:meth:`EncoderParameters.arrays` order.  Shapes are rebuilt from the
metadata, so the tensor block carries no headers.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .encoder import EncoderParameters, layer_shapes

MAGIC = b"G2GM"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_model(params: EncoderParameters, path, metadata: dict | None = None) -> None:
    meta = dict(metadata or {})
    meta.update(
        input_dim=params.input_dim,
        hidden_sizes=params.hidden_sizes,
        L_half=params.half_dim,
        activation=params.activation,
        var_activation=params.var_activation,
    )
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[EncoderParameters, dict]:
    """Parameters and metadata; raises :class:`CheckpointError` on any corruption."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    if len(data) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, meta_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    end = 12 + meta_len
    if len(data) < end:
        raise CheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(data[12:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata ({exc})") from None
    shapes = layer_shapes(meta["input_dim"], meta["hidden_sizes"], meta["L_half"])
    need = sum(int(np.prod(s)) for s in shapes) * 8
    if len(data) - end != need:
        raise CheckpointError(f"{path}: expected {need} tensor bytes, found {len(data) - end}")
    arrays, off = [], end
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape))
        off += count * 8
    return EncoderParameters.from_arrays(arrays), meta


def load_model(path) -> EncoderParameters:
    return read_checkpoint(path)[0]
