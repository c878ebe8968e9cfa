"""Training loop with dev-perplexity early stopping."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from harnn.model import HARNN
from harnn.params import Architecture
from harnn.recurrent import AdaGrad, backward, clip_global_norm, sequence_forward
from harnn.schema import Dataset
from harnn.sequences import build_sequences, context_sequences, make_batches, time_split

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    model: str = "harnn"  # harnn | nhmf | pop
    d: int = 32
    cell: str = "gru"
    mode: str = "het"
    placement: str = "both"
    share: str = "shared"
    pool: str = "mean"
    reduction: str = "sum"
    dropout: float = 0.3
    lr: float = 0.1
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    max_len: int = 50
    clip: float = 5.0
    init_scale: float = 0.05
    test_fraction: float = 0.1
    dev_fraction: float = 0.05
    min_count: int = 2

    def __post_init__(self):
        if self.model not in ("harnn", "nhmf", "pop"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.d < 1 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("d, batch_size and max_epochs must be positive, patience >= 0")
        self.arch()  # validates the architecture fields

    def arch(self) -> Architecture:
        return Architecture(mode=self.mode, pool=self.pool, reduction=self.reduction,
                            placement=self.placement, share=self.share, cell=self.cell)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainResult:
    model: object
    log_lines: list[str] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_perplexity: float = math.inf

    def metrics_tsv(self) -> str:
        return "epoch\tsplit\tloss\tperplexity\n" + "".join(line + "\n" for line in self.log_lines)


def log_line(epoch: int, split: str, loss: float, ppl: float) -> str:
    # repr round-trips, so logged values compare exactly with in-memory ones
    return f"{epoch}\t{split}\t{float(loss)!r}\t{float(ppl)!r}"


def split_train_dev(ds: Dataset, config: TrainConfig):
    """``(train, dev, test)`` by global time: test is the latest slice, dev the latest slice of the rest."""
    rest, test = time_split(ds, config.test_fraction)
    train, dev = time_split(rest, config.dev_fraction)
    return train, dev, test


def dev_perplexity(model, history: Dataset, dev: Dataset) -> float:
    """``exp`` of the mean next-item cross-entropy on dev events, dropout off."""
    if len(dev) == 0:
        raise ValueError("empty dev set")
    return model.perplexity(history, dev)


def train_harnn(train_ds: Dataset, dev_ds: Dataset | None, config: TrainConfig,
                train_sequences=None) -> TrainResult:
    """Fit the recurrent model; returns the parameters of the best dev epoch.

    ``train_sequences`` overrides the sequences built from ``train_ds`` (used
    by the subsequence-sampling study); ``train_ds`` still defines the catalog
    and the history that dev events are conditioned on.  Without a dev set
    the model of the last epoch is returned.
    """
    arch = config.arch()
    model = HARNN.create(train_ds, arch, config.d, seed=config.seed, init_scale=config.init_scale,
                         max_len=config.max_len)
    store, layout = model.store, model.layout
    opt = AdaGrad(store, lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])
    seqs = build_sequences(train_ds) if train_sequences is None else list(train_sequences)
    dev_seqs = context_sequences(train_ds, dev_ds) if dev_ds is not None and len(dev_ds) else None

    result = TrainResult(model)
    best = None
    bad = 0
    for epoch in range(1, config.max_epochs + 1):
        total, count = 0.0, 0
        for batch in make_batches(seqs, train_ds.n_items, config.batch_size, config.max_len, rng):
            trace = sequence_forward(batch, store, layout, arch, config.dropout, rng)
            grads = backward(trace, store, layout)
            n = trace.n_scored
            for g in grads.values():
                g /= n
            clip_global_norm(grads, config.clip)
            opt.step(store, grads)
            total += trace.total_loss
            count += n
        if count == 0:
            raise ValueError("no training positions")
        loss = total / count
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        result.log_lines.append(log_line(epoch, "train", loss, math.exp(loss)))
        if dev_seqs is None:
            continue
        dev_total, dev_count = model.nll(dev_seqs)
        dev_loss = dev_total / dev_count
        dev_ppl = math.exp(dev_loss)
        result.log_lines.append(log_line(epoch, "dev", dev_loss, dev_ppl))
        log.info("epoch %d train %.4f dev ppl %.3f", epoch, loss, dev_ppl)
        if dev_ppl < result.best_dev_perplexity:
            result.best_dev_perplexity = dev_ppl
            result.best_epoch = epoch
            best = store.copy()
            bad = 0
        else:
            bad += 1
            if bad > config.patience:
                break
    if best is not None:
        model.store = best
    else:
        result.best_epoch = config.max_epochs
    return result


def train(train_ds: Dataset, dev_ds: Dataset | None, config: TrainConfig, **kwargs) -> TrainResult:
    """Dispatch on ``config.model``."""
    if config.model == "harnn":
        return train_harnn(train_ds, dev_ds, config, **kwargs)
    from harnn import baselines

    if config.model == "nhmf":
        return baselines.train_nhmf(train_ds, dev_ds, config)
    return baselines.train_pop(train_ds, dev_ds, config)
