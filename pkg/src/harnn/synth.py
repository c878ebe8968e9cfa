"""Synthetic interaction data with latent topics.

Every item belongs to one topic and the items of a topic form a cycle (a
"chain").  Every user has a home topic.  At each step, with probability
``stickiness`` the user stays with the home topic: if the previous item is
in that topic the chain is followed with probability ``chain_prob``,
otherwise a popular item of the topic is drawn.  With the remaining
probability the item comes from global popularity.  ``stickiness = 0``
gives i.i.d. popularity draws; ``stickiness = 1`` keeps a user in one topic.

Attributes are noisy functions of the topics: item categorical values encode
the topic at decreasing granularity, multi-hot tags come from per-topic tag
pools, numerical values are drawn around per-topic means.  User attributes
describe the home topic the same way.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from harnn.schema import AttributeKind, AttributeSchema, AttributeType


@dataclass(frozen=True)
class SynthSpec:
    n_users: int = 500
    n_items: int = 300
    n_topics: int = 10
    stickiness: float = 0.9
    chain_prob: float = 0.7
    min_len: int = 8
    max_len: int = 30
    item_categorical: int = 2
    item_multihot: int = 1
    item_numerical: int = 1
    user_categorical: int = 1
    user_multihot: int = 1
    user_numerical: int = 1
    tags_per_topic: int = 6
    attr_noise: float = 0.1
    popularity_exponent: float = 1.0
    numerical_k: int = 8
    mean_gap: int = 3600
    start_spread: float = 0.2  # user start offsets, as a fraction of the mean sequence duration
    start_time: int = 1_500_000_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.stickiness <= 1.0 or not 0.0 <= self.chain_prob <= 1.0:
            raise ValueError("stickiness and chain_prob must lie in [0, 1]")
        if self.n_topics < 1 or self.n_items < self.n_topics:
            raise ValueError("need at least one item per topic")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def synth_schema(spec: SynthSpec) -> AttributeSchema:
    types = []
    for side, prefix, nc, nm, nn in (
        ("user", "u", spec.user_categorical, spec.user_multihot, spec.user_numerical),
        ("item", "i", spec.item_categorical, spec.item_multihot, spec.item_numerical),
    ):
        types += [AttributeType(f"{prefix}cat{j}", AttributeKind.CATEGORICAL, side) for j in range(nc)]
        types += [AttributeType(f"{prefix}tags{j}", AttributeKind.MULTI_HOT, side) for j in range(nm)]
        types += [AttributeType(f"{prefix}num{j}", AttributeKind.NUMERICAL, side, spec.numerical_k)
                  for j in range(nn)]
    return AttributeSchema(tuple(types))


class _World:
    def __init__(self, spec: SynthSpec, rng):
        self.spec = spec
        n, t = spec.n_items, spec.n_topics
        self.topic = rng.permutation(np.arange(n) % t)
        rank = rng.permutation(n)
        w = (rank + 1.0) ** -spec.popularity_exponent
        self.pop = w / w.sum()
        self.members = [np.flatnonzero(self.topic == k) for k in range(t)]
        self.topic_pop = [self.pop[m] / self.pop[m].sum() for m in self.members]
        self.successor = np.empty(n, dtype=np.int64)
        for m in self.members:
            cycle = rng.permutation(m)
            self.successor[cycle] = np.roll(cycle, -1)

    def draw_in_topic(self, rng, k):
        return int(rng.choice(self.members[k], p=self.topic_pop[k]))

    def draw_global(self, rng):
        return int(rng.choice(len(self.pop), p=self.pop))

    def sequence(self, rng, home, length):
        s = self.spec
        cur = self.draw_in_topic(rng, home) if rng.random() < s.stickiness else self.draw_global(rng)
        seq = [cur]
        for _ in range(length - 1):
            if rng.random() < s.stickiness:
                if self.topic[cur] == home and rng.random() < s.chain_prob:
                    cur = int(self.successor[cur])
                else:
                    cur = self.draw_in_topic(rng, home)
            else:
                cur = self.draw_global(rng)
            seq.append(cur)
        return seq


def _noisy(rng, value, n_values, noise):
    return int(rng.integers(n_values)) if rng.random() < noise else value


def _attr_rows(rng, spec, entity, topic, prefix, nc, nm, nn):
    t = spec.n_topics
    rows = []
    for j in range(nc):
        n_values = max(2, t // (j + 1))
        value = _noisy(rng, topic * n_values // t, n_values, spec.attr_noise)
        rows.append((entity, f"{prefix}cat{j}", f"c{j}_{value}"))
    for j in range(nm):
        n_tags = int(rng.integers(1, 4))
        for _ in range(n_tags):
            k = _noisy(rng, topic, t, spec.attr_noise)
            rows.append((entity, f"{prefix}tags{j}", f"m{j}_{k}_{int(rng.integers(spec.tags_per_topic))}"))
    for j in range(nn):
        rows.append((entity, f"{prefix}num{j}", f"{topic + 0.3 * rng.standard_normal() + j:.6f}"))
    return rows


def generate_synthetic(spec: SynthSpec, out_dir) -> str:
    """Write ``interactions.tsv``, ``attrs_user.tsv``, ``attrs_item.tsv``,
    ``schema.json`` and ``synth.json`` into ``out_dir``; returns ``out_dir``."""
    rng = np.random.default_rng(spec.seed)
    world = _World(spec, rng)
    os.makedirs(out_dir, exist_ok=True)

    item_rows = []
    for i in range(spec.n_items):
        item_rows += _attr_rows(rng, spec, f"i{i}", int(world.topic[i]), "i",
                                spec.item_categorical, spec.item_multihot, spec.item_numerical)
    homes = rng.integers(spec.n_topics, size=spec.n_users)
    user_rows = []
    for u in range(spec.n_users):
        user_rows += _attr_rows(rng, spec, f"u{u}", int(homes[u]), "u",
                                spec.user_categorical, spec.user_multihot, spec.user_numerical)

    mean_duration = 0.5 * (spec.min_len + spec.max_len) * spec.mean_gap
    spread = max(1, int(spec.start_spread * mean_duration))
    events = []
    for u in range(spec.n_users):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        seq = world.sequence(rng, int(homes[u]), length)
        t = spec.start_time + int(rng.integers(spread))
        for item in seq:
            t += 1 + int(rng.exponential(spec.mean_gap))
            events.append((t, u, item))
    events.sort()

    def dump(name, rows):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines("\t".join(map(str, r)) + "\n" for r in rows)

    dump("interactions.tsv", [(f"u{u}", f"i{i}", t) for t, u, i in events])
    dump("attrs_user.tsv", user_rows)
    dump("attrs_item.tsv", item_rows)
    synth_schema(spec).save(os.path.join(out_dir, "schema.json"))
    with open(os.path.join(out_dir, "synth.json"), "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir
