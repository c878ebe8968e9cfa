"""The assembled recurrent recommender: parameters + layout + architecture."""
from __future__ import annotations

import numpy as np

from harnn.params import Architecture, Layout, ParamStore, output_scores
from harnn.recurrent import encode, sequence_forward
from harnn.schema import Dataset
from harnn.sequences import context_sequences, make_batches, start_id, pad_id


class HARNN:
    kind = "harnn"

    def __init__(self, store: ParamStore, layout: Layout, arch: Architecture, max_len: int = 50):
        self.store = store
        self.layout = layout
        self.arch = arch
        self.max_len = max_len

    @classmethod
    def create(cls, ds: Dataset, arch: Architecture, d: int, seed: int = 0, init_scale: float = 0.05,
               max_len: int = 50) -> "HARNN":
        store = ParamStore.init(
            n_users=ds.n_users, n_items=ds.n_items,
            n_user_vocab=len(ds.vocab["user"]), n_item_vocab=len(ds.vocab["item"]),
            d=d, cell=arch.cell, separate=arch.separate,
            rng=np.random.default_rng(seed), scale=init_scale,
        )
        return cls(store, Layout.from_dataset(ds, arch), arch, max_len)

    @property
    def n_items(self) -> int:
        return self.layout.n_items

    def user_states(self, users, contexts, chunk: int = 256) -> np.ndarray:
        """Hidden state after reading ``[START] + context`` for each user.

        Contexts longer than ``max_len`` keep their most recent items; an
        empty context (cold user) yields the state after START alone.
        """
        users = np.asarray(users, dtype=np.int64)
        out = np.empty((len(users), self.store.d))
        start, pad = start_id(self.n_items), pad_id(self.n_items)
        for lo in range(0, len(users), chunk):
            ctx = [tuple(c)[-self.max_len:] for c in contexts[lo: lo + chunk]]
            T = 1 + max(len(c) for c in ctx)
            inputs = np.full((len(ctx), T), pad, dtype=np.int64)
            inputs[:, 0] = start
            for b, c in enumerate(ctx):
                inputs[b, 1: 1 + len(c)] = c
            hs, _ = encode(self.store, self.layout, self.arch, users[lo: lo + chunk], inputs)
            lengths = np.array([len(c) for c in ctx])
            out[lo: lo + len(ctx)] = hs[np.arange(len(ctx)), lengths]
        return out

    def scores(self, h) -> np.ndarray:
        return output_scores(self.store, self.layout, self.arch, h)[0]

    def user_scores(self, users, contexts) -> np.ndarray:
        return self.scores(self.user_states(users, contexts))

    def nll(self, sequences, batch_size: int = 64) -> tuple[float, int]:
        """Summed next-item cross-entropy over scored positions, and their count."""
        total, count = 0.0, 0
        for batch in make_batches(sequences, self.n_items, batch_size, self.max_len):
            trace = sequence_forward(batch, self.store, self.layout, self.arch)
            total += trace.total_loss
            count += trace.n_scored
        return total, count

    def perplexity(self, history: Dataset, future: Dataset) -> float:
        total, count = self.nll(context_sequences(history, future))
        if count == 0:
            raise ValueError("no scored positions")
        return float(np.exp(total / count))
