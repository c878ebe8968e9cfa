"""Non-sequential reference models: item popularity and a softmax hybrid factorization."""
from __future__ import annotations

import math

import numpy as np

from harnn import kernels
from harnn.params import Architecture, Layout, ParamStore, combine_all
from harnn.recurrent import AdaGrad, clip_global_norm
from harnn.schema import Dataset
from harnn.sequences import build_sequences


class PopModel:
    """Ranks every user's catalog by training interaction count."""

    kind = "pop"

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.float64)

    @classmethod
    def fit(cls, ds: Dataset) -> "PopModel":
        if len(ds) == 0:
            raise ValueError("cannot fit popularity on an empty training set")
        return cls(np.bincount(ds.items, minlength=ds.n_items))

    @property
    def n_items(self) -> int:
        return len(self.counts)

    def rank(self, k: int) -> list[int]:
        order = np.lexsort((np.arange(self.n_items), -self.counts))
        return [int(i) for i in order[:k]]

    def user_scores(self, users, contexts) -> np.ndarray:
        return np.tile(self.counts, (len(users), 1))

    def probabilities(self) -> np.ndarray:
        # add-one smoothing keeps unseen items at nonzero probability
        return (self.counts + 1.0) / (self.counts.sum() + self.n_items)

    def perplexity(self, history: Dataset, future: Dataset) -> float:
        logp = np.log(self.probabilities())
        return float(np.exp(-logp[future.items].mean()))


def pop_fit(ds: Dataset) -> PopModel:
    return PopModel.fit(ds)


def pop_rank(model: PopModel, k: int) -> list[int]:
    return model.rank(k)


NHMF_ARCH = Architecture(mode="het", pool="mean", reduction="sum", placement="both", share="shared")


class NhmfModel:
    """Bilinear score ``combine_het(u) . combine_het(i)`` trained with a full softmax.

    No recurrence and no notion of order: the loss only depends on the
    multiset of (user, item) training pairs.
    """

    kind = "nhmf"

    def __init__(self, store: ParamStore, layout: Layout):
        self.store = store
        self.layout = layout
        self.arch = NHMF_ARCH

    @classmethod
    def create(cls, ds: Dataset, d: int = 32, seed: int = 0, init_scale: float = 0.05) -> "NhmfModel":
        store = ParamStore.init(
            n_users=ds.n_users, n_items=ds.n_items,
            n_user_vocab=len(ds.vocab["user"]), n_item_vocab=len(ds.vocab["item"]),
            d=d, rng=np.random.default_rng(seed), scale=init_scale, recurrent=False,
        )
        return cls(store, Layout.from_dataset(ds, NHMF_ARCH))

    @property
    def n_items(self) -> int:
        return self.layout.n_items

    def representations(self):
        qu = combine_all(self.store, self.layout, "user")
        qi = combine_all(self.store, self.layout, "item")[: self.n_items]
        return qu, qi

    def forward(self, users, items=None) -> np.ndarray:
        """Scores ``(len(users), n_items)``, or only the given ``items`` columns."""
        qu, qi = self.representations()
        if items is not None:
            qi = qi[np.asarray(items)]
        return qu[np.asarray(users)] @ qi.T

    def user_scores(self, users, contexts=None) -> np.ndarray:
        return self.forward(users)

    def loss_and_grads(self, users, items, dropout: float = 0.0, rng=None, need_grads: bool = True):
        """Summed cross-entropy of each (user, item) pair against the whole catalog."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        qu_all, qi = self.representations()
        qu = qu_all[users]
        mu = mi = None
        if dropout > 0.0:
            mu = (rng.random(qu.shape) >= dropout) / (1.0 - dropout)
            mi = (rng.random(qi.shape) >= dropout) / (1.0 - dropout)
            qu, qi = qu * mu, qi * mi
        s = qu @ qi.T
        m = s.max(axis=1, keepdims=True)
        e = np.exp(s - m)
        z = e.sum(axis=1, keepdims=True)
        rows = np.arange(len(items))
        loss = float(np.sum(np.log(z[:, 0]) + m[:, 0] - s[rows, items]))
        if not need_grads:
            return loss, None
        ds = e / z
        ds[rows, items] -= 1.0
        dqu = ds @ qi
        dqi = ds.T @ qu
        if mu is not None:
            dqu *= mu
            dqi *= mi
        grads = self.store.zeros_like()
        d_users = np.zeros_like(self.store["user_emb"])
        kernels.scatter_add_rows(d_users, users, dqu)
        grads["user_emb"] += d_users
        grads["user_attr"] += self.layout.user_in.T @ d_users
        grads["item_emb"][: self.n_items] += dqi
        grads["item_attr"] += self.layout.item_in[: self.n_items].T @ dqi
        return loss, grads

    def perplexity(self, history: Dataset, future: Dataset) -> float:
        total = 0.0
        for lo in range(0, len(future), 1024):
            loss, _ = self.loss_and_grads(future.users[lo: lo + 1024], future.items[lo: lo + 1024],
                                          need_grads=False)
            total += loss
        return float(np.exp(total / len(future)))


def nhmf_forward(model: NhmfModel, user: int, items) -> np.ndarray:
    return model.forward([user], items)[0]


def train_nhmf(train_ds: Dataset, dev_ds: Dataset | None, config, dropout: float = 0.5):
    """AdaGrad over shuffled (user, item) minibatches with dev early stopping.

    NHMF always uses dropout 0.5 on both representations; ``config.dropout``
    belongs to the recurrent model.
    """
    from harnn.trainer import TrainResult, log_line

    model = NhmfModel.create(train_ds, config.d, seed=config.seed, init_scale=config.init_scale)
    opt = AdaGrad(model.store, lr=config.lr)
    rng = np.random.default_rng([config.seed, 2])
    users, items = train_ds.users, train_ds.items
    batch = max(config.batch_size, 1) * 8  # pairs, not sequences
    result = TrainResult(model)
    best, bad = None, 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(users))
        total = 0.0
        for lo in range(0, len(order), batch):
            idx = order[lo: lo + batch]
            loss, grads = model.loss_and_grads(users[idx], items[idx], dropout, rng)
            for g in grads.values():
                g /= len(idx)
            clip_global_norm(grads, config.clip)
            opt.step(model.store, grads)
            total += loss
        loss = total / len(order)
        result.log_lines.append(log_line(epoch, "train", loss, math.exp(loss)))
        if dev_ds is None or len(dev_ds) == 0:
            continue
        ppl = model.perplexity(train_ds, dev_ds)
        result.log_lines.append(log_line(epoch, "dev", math.log(ppl), ppl))
        if ppl < result.best_dev_perplexity:
            result.best_dev_perplexity, result.best_epoch = ppl, epoch
            best, bad = model.store.copy(), 0
        else:
            bad += 1
            if bad > config.patience:
                break
    if best is not None:
        model.store = best
    return result


def train_pop(train_ds: Dataset, dev_ds: Dataset | None, config):
    from harnn.trainer import TrainResult, log_line

    model = PopModel.fit(train_ds)
    result = TrainResult(model, best_epoch=1)
    if dev_ds is not None and len(dev_ds):
        ppl = model.perplexity(train_ds, dev_ds)
        result.best_dev_perplexity = ppl
        result.log_lines.append(log_line(1, "dev", math.log(ppl), ppl))
    return result


def user_histories(ds: Dataset) -> dict[int, tuple[int, ...]]:
    return {s.user: s.items for s in build_sequences(ds)}
