"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"SSCK" | u32 version | u32 header length | JSON header (utf-8) | payload

The JSON header lists every layer (kind, activation, padding, weight and bias
shapes), the head descriptor, the init seed and any named extra arrays.  The
payload is the concatenation of those arrays as little-endian float64 in
header order.  Serialisation is canonical (sorted keys, no timestamps), so
identical networks always produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .network import Conv2d, Dense, Flatten, MaxPool2d, Network

MAGIC = b"SSCK"
VERSION = 1


def _layer_header(layer) -> dict:
    entry = {"kind": layer.kind}
    if layer.has_weights:
        entry["activation"] = layer.activation
        entry["weight_shape"] = list(layer.weight.shape)
        entry["bias_shape"] = list(layer.bias.shape)
    if layer.kind == "conv2d":
        entry["padding"] = layer.padding
    return entry


def to_bytes(net: Network, extras: dict | None = None) -> bytes:
    extras = dict(sorted((extras or {}).items()))
    header = {
        "version": VERSION,
        "input_shape": list(net.input_shape),
        "head": list(net.head),
        "seed": int(net.seed),
        "layers": [_layer_header(layer) for layer in net.layers],
        "extras": [{"name": k, "shape": list(np.shape(v))} for k, v in extras.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    for layer in net.layers:
        if layer.has_weights:
            chunks.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    for v in extras.values():
        chunks.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return b"".join(chunks)


def from_bytes(data: bytes) -> tuple[Network, dict]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise DataFormatError("not a checkpoint (bad magic)", 0)
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", 4)
    if 12 + hlen > len(data):
        raise DataFormatError("truncated checkpoint header", len(data))
    try:
        header = json.loads(data[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"corrupt checkpoint header: {exc}", 12) from None
    offset = 12 + hlen

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n
        if end > len(data):
            raise DataFormatError("truncated checkpoint payload", len(data))
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64)
        offset = end
        return arr.reshape(shape)

    layers = []
    for entry in header["layers"]:
        kind = entry["kind"]
        if kind == "dense":
            w, b = take(entry["weight_shape"]), take(entry["bias_shape"])
            layers.append(Dense(w, b, entry["activation"]))
        elif kind == "conv2d":
            w, b = take(entry["weight_shape"]), take(entry["bias_shape"])
            layers.append(Conv2d(w, b, entry["activation"], entry["padding"]))
        elif kind == "maxpool2d":
            layers.append(MaxPool2d())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise DataFormatError(f"unknown layer kind {kind!r}", 12)
    extras = {e["name"]: take(e["shape"]) for e in header["extras"]}
    if offset != len(data):
        raise DataFormatError("trailing bytes after checkpoint payload", offset)
    net = Network(layers, tuple(header["input_shape"]), tuple(header["head"]), header["seed"])
    return net, extras


def save(path, net: Network, extras: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(net, extras))


def load(path) -> tuple[Network, dict]:
    return from_bytes(Path(path).read_bytes())
