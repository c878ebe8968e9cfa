"""Binary checkpoints.

Layout (all integers little-endian)::

    magic  b"HARNNCKP"
    u32    format version
    u32    d, n_users, n_items, n_user_vocab, n_item_vocab, n_arrays
    per array: u16 name length, name (utf-8), u8 ndim, u64 * ndim shape
    per array: row-major float64 data
    u64 length + config JSON (utf-8)
    u64 length + vocabulary TSV: side<TAB>index<TAB>type<TAB>token
"""
from __future__ import annotations

import json
import struct

import numpy as np

from harnn.params import Layout, ParamStore
from harnn.schema import Dataset, Vocabulary

MAGIC = b"HARNNCKP"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable checkpoint or one that does not match the dataset."""


def _vocab_blob(vocab: dict[str, Vocabulary]) -> bytes:
    lines = []
    for side in ("user", "item"):
        lines += [f"{side}\t{i}\t{t}\t{tok}\n" for i, (t, tok) in enumerate(vocab[side].entries)]
    return "".join(lines).encode("utf-8")


def _parse_vocab_blob(blob: bytes) -> dict[str, Vocabulary]:
    entries = {"user": [], "item": []}
    for line in blob.decode("utf-8").splitlines():
        side, _, t, tok = line.split("\t")
        entries[side].append((t, tok))
    return {side: Vocabulary(e) for side, e in entries.items()}


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict, vocab: dict[str, Vocabulary],
                    counts: dict[str, int]):
    names = list(arrays)
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<6I", counts["d"], counts["n_users"], counts["n_items"],
                             counts["n_user_vocab"], counts["n_item_vocab"], len(names)))
    for name in names:
        a = arrays[name]
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
    for name in names:
        parts.append(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    voc = _vocab_blob(vocab)
    parts += [struct.pack("<Q", len(cfg)), cfg, struct.pack("<Q", len(voc)), voc]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_checkpoint(path):
    """Returns ``(arrays, config, vocab, counts)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    try:
        (version,) = struct.unpack_from("<I", buf, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
        off = 12
        d, nu, ni, nuv, niv, n_arrays = struct.unpack_from("<6I", buf, off)
        off += 24
        specs = []
        for _ in range(n_arrays):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off: off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}Q", buf, off)
            off += 8 * ndim
            specs.append((name, shape))
        arrays = {}
        for name, shape in specs:
            n = int(np.prod(shape, dtype=np.int64))
            arrays[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape)
            off += 8 * n
        (clen,) = struct.unpack_from("<Q", buf, off)
        off += 8
        config = json.loads(buf[off: off + clen].decode("utf-8"))
        off += clen
        (vlen,) = struct.unpack_from("<Q", buf, off)
        off += 8
        if off + vlen != len(buf):
            raise CheckpointError(f"{path}: expected {off + vlen} bytes, found {len(buf)}")
        vocab = _parse_vocab_blob(buf[off: off + vlen])
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    counts = {"d": d, "n_users": nu, "n_items": ni, "n_user_vocab": nuv, "n_item_vocab": niv}
    return arrays, config, vocab, counts


def dataset_counts(ds: Dataset, d: int) -> dict[str, int]:
    return {"d": d, "n_users": ds.n_users, "n_items": ds.n_items,
            "n_user_vocab": len(ds.vocab["user"]), "n_item_vocab": len(ds.vocab["item"])}


def save_model(path, model, config, ds: Dataset):
    """Persist a trained HARNN / NHMF / POP model with its config and vocabulary."""
    from harnn.trainer import TrainConfig  # noqa: F401  (config is a TrainConfig)

    if model.kind == "pop":
        arrays, d = {"counts": model.counts}, 0
    else:
        arrays, d = model.store.arrays, model.store.d
    cfg = dict(config.to_dict(), model=model.kind)
    if model.kind == "harnn":
        cfg["max_len"] = model.max_len
    save_checkpoint(path, arrays, cfg, ds.vocab, dataset_counts(ds, d))


def load_model(path, ds: Dataset):
    """Rebuild a model from ``path`` for dataset ``ds``; returns ``(model, config)``."""
    from harnn.baselines import NhmfModel, PopModel
    from harnn.model import HARNN
    from harnn.trainer import TrainConfig

    arrays, cfg, vocab, counts = read_checkpoint(path)
    expected = dataset_counts(ds, counts["d"])
    if counts != expected:
        raise CheckpointError(f"{path}: checkpoint counts {counts} do not match dataset {expected}")
    if any(vocab[s].entries != ds.vocab[s].entries for s in ("user", "item")):
        raise CheckpointError(f"{path}: vocabulary differs from the dataset's")
    config = TrainConfig.from_dict(cfg)
    if config.model == "pop":
        return PopModel(arrays["counts"]), config
    store = ParamStore(arrays, ds.n_items)
    if config.model == "nhmf":
        model = NhmfModel(store, None)
        model.layout = Layout.from_dataset(ds, model.arch)
        return model, config
    arch = config.arch()
    return HARNN(store, Layout.from_dataset(ds, arch), arch, config.max_len), config
