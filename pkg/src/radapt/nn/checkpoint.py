"""Versioned binary serialization for models and optimizer state.

Layout (format version 1, documented byte-for-byte in
docs/checkpoint-format.md): an 8-byte magic, a uint32 format version, a
length-prefixed canonical-JSON header describing the architecture and
domains, then raw little-endian float32 arrays in parameter declaration
order, per-branch running statistics, and an optional optimizer section.

Version 1 stores 32-bit reals only; models in float64 (used for gradient
checking) must be cast down before saving.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from radapt.errors import ConfigError, DataError, OptimStateError
from radapt.nn.model import BranchStats, ModelParams, NetworkConfig

MAGIC = b"RADAPTCK"
FORMAT_VERSION = 1


def _header_bytes(model: ModelParams, has_optimizer: bool) -> bytes:
    cfg = model.config
    header = {
        "config": {
            "in_channels": cfg.in_channels,
            "block_channels": list(cfg.block_channels),
            "head_hidden": cfg.head_hidden,
            "n_levels": cfg.n_levels,
            "eps": cfg.eps,
            "ema_alpha": cfg.ema_alpha,
            "dtype": cfg.dtype,
        },
        "source_domain": model.source_domain,
        "domains": list(model.domains),
        "optimizer": has_optimizer,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, model: ModelParams, optimizer=None) -> None:
    """Write the model (and optionally Adam state) to ``path``.

    Saving is deterministic: the same model and state always produce the
    same bytes.
    """
    if model.config.np_dtype != np.float32:
        raise ConfigError(
            "checkpoint format 1 stores 32-bit reals; cast the model with "
            f'astype("float32") first (model dtype is {model.config.dtype})'
        )
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    header = _header_bytes(model, optimizer is not None)
    chunks.append(struct.pack("<I", len(header)))
    chunks.append(header)
    for pid in model.param_ids():
        chunks.append(np.ascontiguousarray(model.get_param(pid), dtype="<f4").tobytes())
    for domain in model.domains:
        for block in range(model.n_blocks):
            st = model.stats(block, domain)
            chunks.append(np.ascontiguousarray(st.mean, dtype="<f4").tobytes())
            chunks.append(np.ascontiguousarray(st.var, dtype="<f4").tobytes())
            chunks.append(struct.pack("<Q", st.num_batches))
    if optimizer is not None:
        known = set(model.param_ids())
        for pid in optimizer.mask:
            if pid not in known:
                raise OptimStateError(f"optimizer slot {pid!r} is not a model parameter")
        chunks.append(struct.pack("<I", len(optimizer.mask)))
        for pid in optimizer.mask:
            encoded = pid.encode("utf-8")
            chunks.append(struct.pack("<H", len(encoded)))
            chunks.append(encoded)
            chunks.append(np.ascontiguousarray(optimizer.m[pid], dtype="<f4").tobytes())
            chunks.append(np.ascontiguousarray(optimizer.v[pid], dtype="<f4").tobytes())
        chunks.append(struct.pack("<Q", optimizer.step))
        chunks.append(
            struct.pack("<dddd", optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps)
        )
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataError("checkpoint is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(4 * n)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def load_checkpoint(path):
    """Read a checkpoint; returns (model, optimizer-or-None)."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(8) != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", r.take(4))
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format version {version}")
    (hlen,) = struct.unpack("<I", r.take(4))
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    try:
        cfg_d = header["config"]
        config = NetworkConfig(
            in_channels=int(cfg_d["in_channels"]),
            block_channels=tuple(int(c) for c in cfg_d["block_channels"]),
            head_hidden=int(cfg_d["head_hidden"]),
            n_levels=int(cfg_d["n_levels"]),
            eps=float(cfg_d["eps"]),
            ema_alpha=float(cfg_d["ema_alpha"]),
            dtype=str(cfg_d["dtype"]),
        )
        source_domain = header["source_domain"]
        domains = list(header["domains"])
        has_optimizer = bool(header["optimizer"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid checkpoint header: {exc}") from exc
    if config.np_dtype != np.float32:
        raise DataError(f"{path}: format 1 requires float32, header says {config.dtype}")
    if source_domain not in domains:
        raise DataError(f"{path}: source domain {source_domain!r} missing from domain list")

    model = ModelParams(config, source_domain)
    model.domains = domains
    for pid, shape in _declaration_shapes(config, domains):
        model._params[pid] = r.array(shape)
    for domain in domains:
        for block, channels in enumerate(config.block_channels):
            mean = r.array((channels,))
            var = r.array((channels,))
            (num_batches,) = struct.unpack("<Q", r.take(8))
            model._stats[(block, domain)] = BranchStats(mean, var, int(num_batches))

    optimizer = None
    if has_optimizer:
        from radapt.optim import AdamState

        (n_slots,) = struct.unpack("<I", r.take(4))
        mask = []
        m: dict[str, np.ndarray] = {}
        v: dict[str, np.ndarray] = {}
        for _ in range(n_slots):
            (plen,) = struct.unpack("<H", r.take(2))
            pid = r.take(plen).decode("utf-8")
            if pid not in model._params:
                raise DataError(f"{path}: optimizer slot {pid!r} is not a model parameter")
            shape = model._params[pid].shape
            mask.append(pid)
            m[pid] = r.array(shape)
            v[pid] = r.array(shape)
        (step,) = struct.unpack("<Q", r.take(8))
        lr, beta1, beta2, eps = struct.unpack("<dddd", r.take(32))
        optimizer = AdamState(
            lr=lr, mask=tuple(mask), beta1=beta1, beta2=beta2, eps=eps, step=step, m=m, v=v
        )
    if r.pos != len(blob):
        raise DataError(f"{path}: {len(blob) - r.pos} trailing bytes after checkpoint payload")
    return model, optimizer


def _declaration_shapes(config: NetworkConfig, domains: list[str]):
    """Parameter ids with shapes, in declaration order, from the header alone."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    c_prev = config.in_channels
    for i, c_out in enumerate(config.block_channels):
        shapes.append((f"block{i}.conv.weight", (c_out, c_prev, 3, 3)))
        shapes.append((f"block{i}.conv.bias", (c_out,)))
        c_prev = c_out
    shapes.append(("head.fc1.weight", (config.head_hidden, c_prev)))
    shapes.append(("head.fc1.bias", (config.head_hidden,)))
    shapes.append(("head.fc2.weight", (config.n_levels, config.head_hidden)))
    shapes.append(("head.fc2.bias", (config.n_levels,)))
    for domain in domains:
        for i, c_out in enumerate(config.block_channels):
            shapes.append((f"block{i}.bn.{domain}.gamma", (c_out,)))
            shapes.append((f"block{i}.bn.{domain}.beta", (c_out,)))
    return shapes
