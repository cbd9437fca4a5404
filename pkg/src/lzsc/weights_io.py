"""Named-tensor archive ("LZSC" format, version 1).

Layout, all integers little-endian::

    b"LZSC" | u32 version=1 | u32 entry_count
    entry: u32 name_len | name (UTF-8) | u8 dtype (0=f32, 1=f64) | u8 ndim
           | u32 dims[ndim] | payload (row-major, little-endian)

Network archives also carry ``<net>.meta.K``, ``.kernel_size`` and
``.n_iters`` as 0-d f64 entries so loaders can rebuild the topology.
Schedule scalars are stored raw (unconstrained).
"""
import struct
from pathlib import Path

import numpy as np

from .lzsc_block import (KERNEL_NAMES, SCHEDULE_NAMES, IterationModuleParams, LzscBlockParams,
                         ScheduleParams, validate_schedule)
from .networks import FNetParams, IFNetParams
from .tensor import ContractError

MAGIC = b"LZSC"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class ArchiveError(ValueError):
    pass


def write_archive(entries, path):
    """Write an ordered list of (name, array) pairs."""
    names = [name for name, _ in entries]
    if len(set(names)) != len(names):
        raise ArchiveError("duplicate entry names")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries:
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise ArchiveError(f"entry {name!r}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw + struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    data = b"".join(chunks)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write weights to {path}: {exc}") from exc


def read_archive(path):
    """Parse an archive into an ordered dict name -> array."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read weights from {path}: {exc}") from exc
    if len(data) < 12:
        raise ArchiveError(f"{path}: unexpected EOF in header")
    if data[:4] != MAGIC:
        raise ArchiveError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ArchiveError(f"{path}: unsupported version {version}")
    pos = 12
    out = {}

    def take(n, k):
        nonlocal pos
        if pos + n > len(data):
            raise ArchiveError(f"{path}: unexpected EOF at entry {k}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    for k in range(count):
        (name_len,) = struct.unpack("<I", take(4, k))
        name = take(name_len, k).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2, k))
        if code not in _DTYPES:
            raise ArchiveError(f"{path}: entry {name!r} has unknown dtype code {code}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, k))
        dt = _DTYPES[code]
        n = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(take(n, k), dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
        if name in out:
            raise ArchiveError(f"{path}: duplicate entry {name!r}")
        out[name] = arr
    if pos != len(data):
        raise ArchiveError(f"{path}: {len(data) - pos} trailing bytes after entry {count - 1}")
    return out


def _meta(prefix, K, kernel_size, n_iters):
    return [(f"{prefix}.meta.K", np.array(float(K))),
            (f"{prefix}.meta.kernel_size", np.array(float(kernel_size))),
            (f"{prefix}.meta.n_iters", np.array(float(n_iters)))]


def network_entries(nets, dtype=np.float32):
    """Flatten {"fnet": FNetParams, "ifnet": IFNetParams} into archive entries."""
    entries = []
    for prefix, net in nets.items():
        block = net.block_u1 if isinstance(net, FNetParams) else net.block_x1
        entries += _meta(prefix, block.feature_channels, block.kernel_size, block.n_iters)
        for name, arr in net.named_arrays(prefix):
            entries.append((name, np.asarray(arr, dtype=dtype)))
    return entries


def save_weights(nets, path, dtype=np.float32):
    """Save networks; validates schedules first so only loadable files are written."""
    for net in nets.values():
        for block in _blocks(net):
            validate_schedule(block.schedule, block.n_iters)
    write_archive(network_entries(nets, dtype), path)


def _blocks(net):
    if isinstance(net, FNetParams):
        return [net.block_u1, net.block_u2, net.block_c]
    return [net.block_x1, net.block_x2]


def _get(entries, name, shape=None):
    if name not in entries:
        raise ArchiveError(f"missing entry {name!r}")
    arr = entries[name]
    if shape is not None and arr.shape != tuple(shape):
        raise ArchiveError(f"entry {name!r} has shape {arr.shape}, expected {tuple(shape)}")
    return arr.copy()


def _load_block(entries, prefix, C, K, k, n):
    modules = []
    shapes = {"W_u": (K, C), "W_d": (C, K), "W_u_prev": (K, C), "W_d_prev": (C, K), "W_e": (K, C)}
    for i in range(n):
        kernels = {name: _get(entries, f"{prefix}.im{i}.{name}", shapes[name] + (k, k)) for name in KERNEL_NAMES}
        modules.append(IterationModuleParams(**kernels))
    schedule = ScheduleParams(*(_get(entries, f"{prefix}.schedule.{name}", ()) for name in SCHEDULE_NAMES))
    try:
        validate_schedule(schedule, n)
    except ContractError as exc:
        raise ArchiveError(f"{prefix}: schedule invariant violated: {exc}") from exc
    return LzscBlockParams(modules, schedule)


def _topology(entries, prefix, K=None, kernel_size=None, n_iters=None):
    got = []
    for key, want in (("K", K), ("kernel_size", kernel_size), ("n_iters", n_iters)):
        value = int(_get(entries, f"{prefix}.meta.{key}", ()))
        if want is not None and value != want:
            raise ArchiveError(f"{prefix}.meta.{key} is {value}, requested topology has {want}")
        got.append(value)
    return got


def load_fnet(entries, K=None, kernel_size=None, n_iters=None):
    K, k, n = _topology(entries, "fnet", K, kernel_size, n_iters)
    blocks = [_load_block(entries, f"fnet.{name}", c, K, k, n)
              for name, c in (("block_u1", 1), ("block_u2", 1), ("block_c", 2))]
    decoders = [_get(entries, f"fnet.{name}", (1, K, k, k)) for name in ("D_u1", "D_u2", "G_c", "G_u1", "G_u2")]
    return FNetParams(*blocks, *decoders)


def load_ifnet(entries, K=None, kernel_size=None, n_iters=None):
    K, k, n = _topology(entries, "ifnet", K, kernel_size, n_iters)
    blocks = [_load_block(entries, f"ifnet.{name}", 1, K, k, n) for name in ("block_x1", "block_x2")]
    decoders = [_get(entries, f"ifnet.{name}", (1, K, k, k)) for name in ("D_x1", "D_x2")]
    return IFNetParams(*blocks, *decoders)


def load_weights(path, K=None, kernel_size=None, n_iters=None):
    """Load every network present in the archive: returns {"fnet": ..., "ifnet": ...}."""
    entries = read_archive(path)
    nets = {}
    if "fnet.meta.K" in entries:
        nets["fnet"] = load_fnet(entries, K, kernel_size, n_iters)
    if "ifnet.meta.K" in entries:
        nets["ifnet"] = load_ifnet(entries, K, kernel_size, n_iters)
    if not nets:
        raise ArchiveError(f"{path}: no network found in archive")
    return nets
