"""BRW1: portable binary weight container.

Layout (all little-endian): magic "BRW1", u16 version, u32 entry count;
per entry: u16 name length, UTF-8 name, u8 rank, u32 dims..., float32
payload. Bit-exact round trips.
"""

import struct

import numpy as np

from ..errors import BreathSenseError
from .layers import Network, network_from_arch

MAGIC = b"BRW1"
VERSION = 1


class BadMagic(BreathSenseError):
    pass


class TruncatedPayload(BreathSenseError):
    pass


class ShapeMismatchOnLoad(BreathSenseError):
    pass


def pack_entries(entries) -> bytes:
    """entries: ordered (name, array) pairs; arrays stored as float32."""
    names = [name for name, _ in entries]
    if len(set(names)) != len(names):
        raise ValueError("entry names must be unique")
    out = [MAGIC, struct.pack("<HI", VERSION, len(entries))]
    for name, arr in entries:
        arr = np.asarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        out.append(arr.tobytes())
    return b"".join(out)


def unpack_entries(data: bytes):
    """Returns ordered (name, float32 array) pairs."""
    if len(data) < 10 or data[:4] != MAGIC:
        raise BadMagic("missing BRW1 magic")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise BadMagic(f"unsupported container version {version}")
    pos = 10
    entries = []
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos) if rank else ()
            pos += 4 * rank
        except struct.error:
            raise TruncatedPayload("entry header extends past end of data")
        n = int(np.prod(dims)) if dims else 1
        payload = data[pos : pos + 4 * n]
        if len(payload) < 4 * n:
            raise TruncatedPayload(f"entry {name!r} payload truncated")
        pos += 4 * n
        entries.append((name, np.frombuffer(payload, dtype="<f4").reshape(dims).copy()))
    return entries


def save_weights(network: Network, meta=None) -> bytes:
    """Serialize layer kinds, parameters and buffers (plus optional meta arrays)."""
    entries = network.state_entries()
    for key, arr in (meta or {}).items():
        entries.append((f"__meta__.{key}", np.asarray(arr, dtype=np.float32)))
    return pack_entries(entries)


def load_weights(data: bytes):
    """Rebuild a Network (and meta dict) whose forward is bit-identical."""
    entries = dict(unpack_entries(data))
    if "__arch__" not in entries:
        raise ShapeMismatchOnLoad("container has no __arch__ entry")
    meta = {k[len("__meta__.") :]: v for k, v in entries.items() if k.startswith("__meta__.")}
    shapes = {k: v.shape for k, v in entries.items()}
    network = network_from_arch(entries["__arch__"], shapes)
    load_weights_into(network, data)
    return network, meta


def load_weights_into(network: Network, data: bytes) -> None:
    """Copy container entries into an existing network, checking shapes."""
    entries = dict(unpack_entries(data))
    for i, layer in enumerate(network.layers):
        for key, arr in layer.state_items():
            name = f"L{i:02d}.{key}"
            if name not in entries:
                raise ShapeMismatchOnLoad(f"container missing entry {name}")
            new = entries[name]
            if new.shape != arr.shape:
                raise ShapeMismatchOnLoad(f"{name}: container {new.shape} vs model {arr.shape}")
            if key in layer.params:
                layer.params[key] = new.astype(layer.params[key].dtype)
            else:
                setattr(layer, key, new.astype(arr.dtype))
