"""Binary container for :class:`~rankope.core.LoggedDataset`.

Layout (all integers little-endian)::

    magic      8 bytes   b"RANKOPE\\0"
    version    uint16    FORMAT_VERSION
    hlen       uint32    length of the JSON header
    header     hlen bytes, UTF-8 JSON with n, K, D, dim_x, n_contexts,
               action_counts, category_counts, reward_kind, policy kinds and
               params, behaviors, config_fingerprint and flags
    contexts   float64 (n_contexts, dim_x)
    samples    n row-major records: context_index int64, actions int64[K],
               embeddings int64[K, D], rewards float64[K], behavior_id int64
               (-1 when absent)
    logging    float64 (n_contexts, K, max_actions)
    target     float64 (n_contexts, K, max_actions)
    emb_probs  float64 (K, max_actions, D, max_categories)
    emb_alpha  same shape, present only if header["has_alpha"]
    crc32      uint32 over every preceding byte

Floats are stored as raw IEEE-754 doubles, so a round trip is bit-exact.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from .core import BehaviorMatrix, DatasetError, EmbeddingModel, LoggedDataset
from .policy import FactorizedRankingPolicy

MAGIC = b"RANKOPE\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")


class CorruptContainerError(DatasetError):
    """The file is truncated, has a bad header or fails its checksum."""


def _record_dtype(K: int, D: int) -> np.dtype:
    return np.dtype(
        [
            ("context_index", "<i8"),
            ("actions", "<i8", (K,)),
            ("embeddings", "<i8", (K, D)),
            ("rewards", "<f8", (K,)),
            ("behavior_id", "<i8"),
        ]
    )


def save_dataset(ds: LoggedDataset, path: Union[str, Path]) -> None:
    """Write ``ds`` to ``path``; refuses datasets that fail validation."""
    ds.validate()
    K, D = ds.n_positions, ds.n_dims
    header = {
        "n": ds.n,
        "K": K,
        "D": D,
        "dim_x": ds.dim_x,
        "n_contexts": ds.contexts.shape[0],
        "action_counts": ds.action_counts.tolist(),
        "category_counts": ds.category_counts.tolist(),
        "max_actions": ds.logging_policy.probs.shape[2],
        "emb_max_actions": ds.embedding_model.probs.shape[1],
        "max_categories": ds.embedding_model.probs.shape[3],
        "reward_kind": ds.reward_kind,
        "logging": {"kind": ds.logging_policy.kind, "params": ds.logging_policy.params},
        "target": {"kind": ds.target_policy.kind, "params": ds.target_policy.params},
        "behaviors": [{"name": b.name, "c": b.c.tolist()} for b in ds.behaviors],
        "has_behavior_ids": ds.behavior_ids is not None,
        "has_alpha": ds.embedding_model.alpha is not None,
        "config_fingerprint": ds.config_fingerprint,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    records = np.zeros(ds.n, dtype=_record_dtype(K, D))
    records["context_index"] = ds.context_index
    records["actions"] = ds.actions
    records["embeddings"] = ds.embeddings
    records["rewards"] = ds.rewards
    records["behavior_id"] = -1 if ds.behavior_ids is None else ds.behavior_ids
    parts = [
        _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)),
        header_bytes,
        np.ascontiguousarray(ds.contexts, dtype="<f8").tobytes(),
        records.tobytes(),
        np.ascontiguousarray(ds.logging_policy.probs, dtype="<f8").tobytes(),
        np.ascontiguousarray(ds.target_policy.probs, dtype="<f8").tobytes(),
        np.ascontiguousarray(ds.embedding_model.probs, dtype="<f8").tobytes(),
    ]
    if ds.embedding_model.alpha is not None:
        parts.append(np.ascontiguousarray(ds.embedding_model.alpha, dtype="<f8").tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, data: bytes, start: int) -> None:
        self.data = data
        self.pos = start

    def take(self, dtype: Union[str, np.dtype], shape: tuple) -> np.ndarray:
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        size = dtype.itemsize * count
        if self.pos + size > len(self.data):
            raise CorruptContainerError("corrupt container: payload truncated")
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos).reshape(shape)
        self.pos += size
        return arr.copy()


def load_dataset(path: Union[str, Path]) -> LoggedDataset:
    """Read a dataset written by :func:`save_dataset` and validate it.

    Raises
    ------
    CorruptContainerError
        Truncated file, unknown magic/version, bad header or checksum mismatch.
    DatasetError
        Payload decodes but violates an invariant; the message names the
        offending sample index.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + 4:
        raise CorruptContainerError("corrupt container: file too short")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    magic, version, hlen = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CorruptContainerError("corrupt container: bad magic")
    if version != FORMAT_VERSION:
        raise CorruptContainerError(f"corrupt container: unsupported version {version}")
    if zlib.crc32(body) != crc:
        raise CorruptContainerError("corrupt container: checksum mismatch")
    try:
        header = json.loads(body[_PREFIX.size : _PREFIX.size + hlen].decode("utf-8"))
        n, K, D = int(header["n"]), int(header["K"]), int(header["D"])
        dim_x, n_ctx = int(header["dim_x"]), int(header["n_contexts"])
        width, emb_width = int(header["max_actions"]), int(header["emb_max_actions"])
        n_cat = int(header["max_categories"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptContainerError(f"corrupt container: bad header ({exc})") from exc

    reader = _Reader(body, _PREFIX.size + hlen)
    contexts = reader.take("<f8", (n_ctx, dim_x))
    records = reader.take(_record_dtype(K, D), (n,))
    logging_probs = reader.take("<f8", (n_ctx, K, width))
    target_probs = reader.take("<f8", (n_ctx, K, width))
    emb_probs = reader.take("<f8", (K, emb_width, D, n_cat))
    alpha = reader.take("<f8", (K, emb_width, D, n_cat)) if header["has_alpha"] else None
    if reader.pos != len(body):
        raise CorruptContainerError("corrupt container: trailing bytes")

    counts = header["action_counts"]
    ds = LoggedDataset(
        contexts=contexts,
        context_index=records["context_index"],
        actions=records["actions"],
        embeddings=records["embeddings"],
        rewards=records["rewards"],
        logging_policy=FactorizedRankingPolicy(
            logging_probs, header["logging"]["kind"], header["logging"]["params"], counts
        ),
        target_policy=FactorizedRankingPolicy(
            target_probs, header["target"]["kind"], header["target"]["params"], counts
        ),
        embedding_model=EmbeddingModel(emb_probs, header["category_counts"], alpha),
        behavior_ids=records["behavior_id"] if header["has_behavior_ids"] else None,
        behaviors=[BehaviorMatrix(np.array(b["c"]), b["name"]) for b in header["behaviors"]],
        reward_kind=header["reward_kind"],
        config_fingerprint=header["config_fingerprint"],
    )
    return ds
