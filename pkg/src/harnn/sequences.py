"""Per-user chronological sequences, splits, augmentation and batching.

Item ids ``n_items`` and ``n_items + 1`` are reserved for START and PAD.
Every sequence is fed as ``[START, i_1, ..., i_{L-1}]`` and trained to emit
``[i_1, ..., i_L]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from harnn.schema import Dataset


def start_id(n_items: int) -> int:
    return n_items


def pad_id(n_items: int) -> int:
    return n_items + 1


@dataclass(frozen=True)
class UserSequence:
    """Items of one user in (timestamp, file order) order.

    Positions before ``scored_from`` are context only: they are fed to the
    recurrence but carry no loss.
    """

    user: int
    items: tuple[int, ...]
    scored_from: int = 0

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class SequenceBatch:
    users: np.ndarray  # (B,)
    inputs: np.ndarray  # (B, T) START first, PAD right-padded
    targets: np.ndarray  # (B, T) PAD right-padded
    lengths: np.ndarray  # (B,) number of valid positions
    mask: np.ndarray  # (B, T) 1.0 where the position carries loss

    @property
    def n_scored(self) -> int:
        return int(self.mask.sum())

    def decode(self) -> list[UserSequence]:
        """Recover the (possibly truncated) sequences this batch was built from."""
        out = []
        for b in range(len(self.users)):
            n = int(self.lengths[b])
            scored = np.flatnonzero(self.mask[b, :n])
            first = int(scored[0]) if scored.size else n
            out.append(UserSequence(int(self.users[b]), tuple(int(x) for x in self.targets[b, :n]), first))
        return out


def build_sequences(ds: Dataset) -> list[UserSequence]:
    """One sequence per user that has at least one interaction, ordered by user id."""
    order = ds.chronological_order()
    users = ds.users[order]
    items = ds.items[order]
    # stable again on user keeps chronological order inside each user
    by_user = np.argsort(users, kind="stable")
    users, items = users[by_user], items[by_user]
    cuts = np.flatnonzero(np.diff(users)) + 1
    seqs = []
    for u_chunk, i_chunk in zip(np.split(users, cuts), np.split(items, cuts)):
        if len(u_chunk):
            seqs.append(UserSequence(int(u_chunk[0]), tuple(int(i) for i in i_chunk)))
    return seqs


def _n_tail(fraction: float, n: int) -> int:
    # guard against 0.1 * 30 = 3.0000000000000004
    return math.ceil(fraction * n - 1e-9)


def time_split(ds: Dataset, test_fraction: float) -> tuple[Dataset, Dataset]:
    """Global chronological split; the latest ``ceil(fraction * |S|)`` events form the test side."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    order = ds.chronological_order()
    n_test = _n_tail(test_fraction, len(order))
    if n_test <= 0 or n_test >= len(order):
        raise ValueError(f"split of {len(order)} events at fraction {test_fraction} leaves one side empty")
    return ds.with_interactions(order[:-n_test]), ds.with_interactions(order[-n_test:])


def context_sequences(history: Dataset, future: Dataset) -> list[UserSequence]:
    """Sequences over ``history`` followed by ``future`` with loss only on ``future``.

    Used for dev and test perplexity: the recurrence sees the user's full past
    before being scored on held-out events.  Only users present in ``future``
    are returned.
    """
    past = {s.user: s.items for s in build_sequences(history)}
    out = []
    for s in build_sequences(future):
        ctx = past.get(s.user, ())
        out.append(UserSequence(s.user, ctx + s.items, len(ctx)))
    return out


def subsample_sequences(sequences, drop_prob: float, copies: int, seed: int,
                        keep_original: bool = False) -> list[UserSequence]:
    """Augment by independent item dropping.

    Each of ``copies`` outputs per sequence keeps every item with probability
    ``1 - drop_prob``; empty copies are discarded.  Originals are kept only
    with ``keep_original``.  ``copies == 0`` returns the input unchanged.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError("drop_prob must lie in [0, 1)")
    if copies < 0:
        raise ValueError("copies must be >= 0")
    if copies == 0:
        return list(sequences)
    rng = np.random.default_rng(seed)
    out = []
    for s in sequences:
        items = np.asarray(s.items)
        if keep_original:
            out.append(s)
        for _ in range(copies):
            keep = rng.random(len(items)) >= drop_prob
            if keep.any():
                out.append(UserSequence(s.user, tuple(int(i) for i in items[keep])))
    return out


def subsample_users(sequences, fraction: float, seed: int) -> list[UserSequence]:
    """Seeded subset of ``ceil(fraction * |U|)`` users.

    The subset is a prefix of one seeded permutation, so for a fixed seed
    smaller fractions are nested inside larger ones.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    sequences = list(sequences)
    users = sorted({s.user for s in sequences})
    perm = np.random.default_rng(seed).permutation(len(users))
    chosen = {users[i] for i in perm[: _n_tail(fraction, len(users))]}
    return [s for s in sequences if s.user in chosen]


def make_batches(sequences, n_items: int, batch_size: int = 32, max_len: int = 50,
                 rng: np.random.Generator | None = None) -> list[SequenceBatch]:
    """Pad sequences into batches of similar length.

    Sequences longer than ``max_len`` keep their most recent items.  With an
    ``rng`` the tie order among equal lengths and the batch order are
    shuffled; without one the result is fully deterministic.
    """
    seqs = [s for s in sequences if len(s)]
    if not seqs:
        return []
    trimmed = []
    for s in seqs:
        if len(s) > max_len:
            cut = len(s) - max_len
            s = UserSequence(s.user, s.items[cut:], max(0, s.scored_from - cut))
        trimmed.append(s)
    order = np.arange(len(trimmed)) if rng is None else rng.permutation(len(trimmed))
    lengths = np.array([len(trimmed[i]) for i in order])
    order = order[np.argsort(lengths, kind="stable")]

    start, pad = start_id(n_items), pad_id(n_items)
    batches = []
    for lo in range(0, len(order), batch_size):
        chunk = [trimmed[i] for i in order[lo: lo + batch_size]]
        T = max(len(s) for s in chunk)
        B = len(chunk)
        inputs = np.full((B, T), pad, dtype=np.int64)
        targets = np.full((B, T), pad, dtype=np.int64)
        mask = np.zeros((B, T))
        for b, s in enumerate(chunk):
            n = len(s)
            targets[b, :n] = s.items
            inputs[b, 0] = start
            inputs[b, 1:n] = s.items[:-1]
            mask[b, s.scored_from:n] = 1.0
        batches.append(SequenceBatch(
            users=np.array([s.user for s in chunk], dtype=np.int64),
            inputs=inputs, targets=targets,
            lengths=np.array([len(s) for s in chunk], dtype=np.int64),
            mask=mask,
        ))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches
