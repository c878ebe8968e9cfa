"""Attribute schema, TSV ingestion and vocabulary construction.

Interaction and attribute files are tab separated::

    interactions.tsv   user<TAB>item<TAB>timestamp
    attrs_user.tsv     entity<TAB>type_name<TAB>token
    attrs_item.tsv     entity<TAB>type_name<TAB>token

``schema.json`` declares every attribute type with its kind and the side
(user or item) that owns it.  Numerical tokens are real values; they are
quantized with 1-D k-means and from then on behave like categorical tokens.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from harnn.quantize import quantize_numerical

UNK = "<unk>"
SIDES = ("user", "item")


class ParseError(ValueError):
    """Malformed input file; the message names the file and line."""


class SchemaError(ValueError):
    pass


class AttributeKind(str, enum.Enum):
    CATEGORICAL = "categorical"
    MULTI_HOT = "multihot"
    NUMERICAL = "numerical"


@dataclass(frozen=True)
class AttributeType:
    name: str
    kind: AttributeKind
    side: str
    k: int = 32  # cluster count, numerical types only

    def __post_init__(self):
        if self.side not in SIDES:
            raise SchemaError(f"attribute type {self.name!r}: side must be one of {SIDES}")
        if self.kind is AttributeKind.NUMERICAL and self.k < 1:
            raise SchemaError(f"attribute type {self.name!r}: k must be positive")


@dataclass(frozen=True)
class AttributeSchema:
    types: tuple[AttributeType, ...] = ()

    def __post_init__(self):
        seen = set()
        for t in self.types:
            if (t.side, t.name) in seen:
                raise SchemaError(f"duplicate attribute type {t.name!r} on side {t.side!r}")
            seen.add((t.side, t.name))

    def side(self, side: str) -> tuple[AttributeType, ...]:
        return tuple(t for t in self.types if t.side == side)

    def to_dict(self) -> dict:
        out = []
        for t in self.types:
            entry = {"name": t.name, "kind": t.kind.value, "side": t.side}
            if t.kind is AttributeKind.NUMERICAL:
                entry["k"] = t.k
            out.append(entry)
        return {"types": out}

    @classmethod
    def from_dict(cls, data: dict) -> "AttributeSchema":
        types = []
        for entry in data.get("types", []):
            try:
                kind = AttributeKind(entry["kind"])
            except (KeyError, ValueError) as exc:
                raise SchemaError(f"bad attribute kind in {entry!r}") from exc
            types.append(AttributeType(entry["name"], kind, entry["side"], int(entry.get("k", 32))))
        return cls(tuple(types))

    @classmethod
    def load(cls, path) -> "AttributeSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class Vocabulary:
    """Attribute tokens of one side, indexed contiguously from 0.

    Each entry is ``(type_name, token)``.  Every type owns an ``<unk>`` entry.
    """

    entries: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self._index = {e: i for i, e in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries)

    def index(self, type_name: str, token: str) -> int:
        return self._index[(type_name, token)]

    def get(self, type_name: str, token: str, default=None):
        return self._index.get((type_name, token), default)

    def to_tsv(self) -> str:
        return "".join(f"{i}\t{t}\t{tok}\n" for i, (t, tok) in enumerate(self.entries))

    @classmethod
    def from_tsv(cls, text: str) -> "Vocabulary":
        entries = []
        for line in text.splitlines():
            if line:
                _, t, tok = line.split("\t")
                entries.append((t, tok))
        return cls(entries)


@dataclass
class InteractionLog:
    users: np.ndarray
    items: np.ndarray
    times: np.ndarray
    user_ids: list[str]
    item_ids: list[str]


def _read_rows(path, n_fields):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise ParseError(f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(parts)}")
            yield lineno, parts


def load_interactions(path) -> InteractionLog:
    """Parse ``user<TAB>item<TAB>timestamp`` rows in file order.

    Raw ids are mapped to dense integers by first appearance.  Duplicate rows
    are kept: interactions are events, not a set.
    """
    user_map: dict[str, int] = {}
    item_map: dict[str, int] = {}
    users, items, times = [], [], []
    for lineno, (u, i, t) in _read_rows(path, 3):
        try:
            ts = int(t)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer timestamp {t!r}") from None
        users.append(user_map.setdefault(u, len(user_map)))
        items.append(item_map.setdefault(i, len(item_map)))
        times.append(ts)
    if not users:
        raise ParseError(f"{path}: no interactions")
    return InteractionLog(
        np.asarray(users, dtype=np.int64),
        np.asarray(items, dtype=np.int64),
        np.asarray(times, dtype=np.int64),
        list(user_map),
        list(item_map),
    )


def load_attribute_rows(path, schema: AttributeSchema, side: str, id_map: dict[str, int]):
    """Read one attribute file into ``{type_name: {entity_index: [token, ...]}}``.

    Entities absent from ``id_map`` are appended to it (catalog entries with no
    interactions).  Numerical tokens are converted to float.
    """
    kinds = {t.name: t.kind for t in schema.side(side)}
    raw: dict[str, dict[int, list]] = {name: {} for name in kinds}
    if path is None or not os.path.exists(path):
        return raw
    for lineno, (entity, type_name, token) in _read_rows(path, 3):
        if type_name not in kinds:
            raise ParseError(f"{path}:{lineno}: type {type_name!r} not declared for side {side!r}")
        if kinds[type_name] is AttributeKind.NUMERICAL:
            try:
                value = float(token)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value {token!r}") from None
            if not np.isfinite(value):
                raise ParseError(f"{path}:{lineno}: non-finite value {token!r}")
            token = value
        idx = id_map.setdefault(entity, len(id_map))
        tokens = raw[type_name].setdefault(idx, [])
        if kinds[type_name] is not AttributeKind.MULTI_HOT and tokens:
            raise ParseError(f"{path}:{lineno}: {kinds[type_name].value} type {type_name!r} "
                             f"already has a value for entity {entity!r}")
        tokens.append(token)
    return raw


def build_vocab(raw: dict[str, dict[int, list]], types, n_entities: int, min_count: int = 2,
                seed: int = 0):
    """Code raw tokens of one side against a fresh vocabulary.

    Frequencies are counted over entities.  Tokens seen on fewer than
    ``min_count`` entities are dropped: a dropped categorical token becomes the
    type's ``<unk>``; dropped multi-hot tokens are removed, and ``<unk>`` is
    inserted only when nothing is left.  Numerical values are quantized and
    never pruned.

    Returns ``(vocab, coded, centers)`` where ``coded[e][j]`` is the tuple of
    token indices of entity ``e`` for the ``j``-th type of ``types`` and
    ``centers`` maps numerical type names to their sorted cluster centers.
    """
    types = tuple(types)
    kept: dict[str, list[str]] = {}
    centers: dict[str, np.ndarray] = {}
    labels: dict[str, dict[int, str]] = {}
    for t in types:
        per_entity = raw.get(t.name, {})
        if t.kind is AttributeKind.NUMERICAL:
            ents = sorted(per_entity)
            if ents:
                values = np.array([per_entity[e][0] for e in ents], dtype=np.float64)
                q = quantize_numerical(values, t.k, seed=seed)
                centers[t.name] = q.centers
                labels[t.name] = {e: str(int(c)) for e, c in zip(ents, q.labels)}
                kept[t.name] = [str(c) for c in range(len(q.centers))]
            else:
                centers[t.name] = np.zeros(0)
                labels[t.name] = {}
                kept[t.name] = []
            continue
        counts = Counter()
        for tokens in per_entity.values():
            counts.update(set(tokens))
        kept[t.name] = sorted(tok for tok, c in counts.items() if c >= min_count and tok != UNK)

    entries = []
    for t in sorted(types, key=lambda t: t.name):
        entries.append((t.name, UNK))
        entries.extend((t.name, tok) for tok in kept[t.name])
    vocab = Vocabulary(entries)

    coded = []
    for e in range(n_entities):
        row = []
        for t in types:
            unk = vocab.index(t.name, UNK)
            if t.kind is AttributeKind.NUMERICAL:
                lab = labels[t.name].get(e)
                row.append((unk,) if lab is None else (vocab.index(t.name, lab),))
                continue
            tokens = raw.get(t.name, {}).get(e, [])
            idx = [vocab.get(t.name, tok) for tok in tokens]
            if t.kind is AttributeKind.CATEGORICAL:
                row.append((unk if not idx or idx[0] is None else idx[0],))
            else:
                idx = [i for i in idx if i is not None]
                row.append(tuple(idx) if idx else (unk,))
        coded.append(row)
    return vocab, coded, centers


@dataclass
class Dataset:
    """Timestamped interactions plus coded attributes of both sides.

    ``attrs[side][e][j]`` is the tuple of vocabulary indices of entity ``e``
    for the ``j``-th type of ``schema.side(side)``.  Multi-hot tuples keep
    repeated tokens (they are multisets).
    """

    schema: AttributeSchema
    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    times: np.ndarray
    user_ids: list[str]
    item_ids: list[str]
    vocab: dict[str, Vocabulary]
    attrs: dict[str, list[list[tuple[int, ...]]]]
    centers: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return len(self.users)

    def with_interactions(self, idx) -> "Dataset":
        """Same catalog and attributes, interactions restricted to ``idx``."""
        idx = np.asarray(idx)
        return dataclasses.replace(self, users=self.users[idx], items=self.items[idx], times=self.times[idx])

    def chronological_order(self) -> np.ndarray:
        # stable: equal timestamps keep file order
        return np.argsort(self.times, kind="stable")


def load_dataset(data_dir, schema_path=None, min_count: int = 2, seed: int = 0) -> Dataset:
    schema_path = schema_path or os.path.join(data_dir, "schema.json")
    schema = AttributeSchema.load(schema_path) if os.path.exists(schema_path) else AttributeSchema()
    log = load_interactions(os.path.join(data_dir, "interactions.tsv"))
    user_map = {u: i for i, u in enumerate(log.user_ids)}
    item_map = {u: i for i, u in enumerate(log.item_ids)}
    raw_user = load_attribute_rows(os.path.join(data_dir, "attrs_user.tsv"), schema, "user", user_map)
    raw_item = load_attribute_rows(os.path.join(data_dir, "attrs_item.tsv"), schema, "item", item_map)
    vocab, attrs, centers = {}, {}, {}
    for side, raw, id_map in (("user", raw_user, user_map), ("item", raw_item, item_map)):
        v, coded, c = build_vocab(raw, schema.side(side), len(id_map), min_count=min_count, seed=seed)
        vocab[side], attrs[side] = v, coded
        centers.update(c)
    return Dataset(
        schema=schema,
        n_users=len(user_map),
        n_items=len(item_map),
        users=log.users,
        items=log.items,
        times=log.times,
        user_ids=list(user_map),
        item_ids=list(item_map),
        vocab=vocab,
        attrs=attrs,
        centers=centers,
    )


def write_dataset_artifacts(ds: Dataset, out_dir):
    """Persist id maps, vocabularies and coded interactions as TSV."""
    os.makedirs(out_dir, exist_ok=True)

    def dump(name, text):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    dump("users.tsv", "".join(f"{i}\t{u}\n" for i, u in enumerate(ds.user_ids)))
    dump("items.tsv", "".join(f"{i}\t{u}\n" for i, u in enumerate(ds.item_ids)))
    for side in SIDES:
        dump(f"vocab_{side}.tsv", ds.vocab[side].to_tsv())
        names = [t.name for t in ds.schema.side(side)]
        lines = []
        for e, row in enumerate(ds.attrs[side]):
            for name, toks in zip(names, row):
                lines.append(f"{e}\t{name}\t{','.join(map(str, toks))}\n")
        dump(f"coded_attrs_{side}.tsv", "".join(lines))
    dump("interactions_coded.tsv",
         "".join(f"{u}\t{i}\t{t}\n" for u, i, t in zip(ds.users, ds.items, ds.times)))
    ds.schema.save(os.path.join(out_dir, "schema.json"))
