"""Controlled experiments on a fixed dataset.

* Sequence vs. frequency: retrain on subsequence-sampled copies of the
  training sequences and compare NDCG@30 against training on the originals.
* Data scale: train HA-RNN and NHMF on growing nested user subsets and
  evaluate both on the smallest subset's users.
* Placement ablation: dev perplexity of each attribute placement.

Every run trains with early stopping on the dev slice and evaluates on the
test slice with each user's full pre-test history as context.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from harnn.evaluate import CUTOFFS, evaluate
from harnn.params import PLACEMENTS
from harnn.schema import Dataset
from harnn.sequences import build_sequences, subsample_sequences, subsample_users, time_split
from harnn.trainer import TrainConfig, train

log = logging.getLogger(__name__)

SAMPLING_LEVELS = (0, 1, 2, 4, 8)  # 0 is the original data
FRACTIONS = (0.2, 0.44, 0.76, 1.0)


@dataclass
class Splits:
    train: Dataset
    dev: Dataset
    test: Dataset
    history: Dataset  # train + dev, the context for test users


def make_splits(ds: Dataset, config: TrainConfig) -> Splits:
    history, test = time_split(ds, config.test_fraction)
    train, dev = time_split(history, config.dev_fraction)
    return Splits(train, dev, test, history)


def level_name(level: int) -> str:
    return "original" if level == 0 else f"x{level}"


def level_copies(level: int) -> int:
    return 0 if level == 0 else level + 1


def level_drop_prob(level: int, drop_prob: float | None = None) -> float:
    """Level ``x_N`` draws ``N + 1`` copies at drop rate ``N / (N + 1)``.

    The expected count of every item then equals its original count, while
    each copy keeps ever shorter fragments of the order as ``N`` grows.
    """
    if level == 0:
        return 0.0
    return level / (level + 1.0) if drop_prob is None else drop_prob


# --- sequence vs. frequency ---------------------------------------------------------

@dataclass
class SamplingLevel:
    name: str
    copies: int
    drop_prob: float
    ndcg: list[float] = field(default_factory=list)  # one per seed
    relative: list[float] = field(default_factory=list)
    frequency: list[float] = field(default_factory=list)  # item occurrences relative to the original

    @property
    def mean_relative(self) -> float:
        return float(np.mean(self.relative))


@dataclass
class SamplingStudy:
    levels: list[SamplingLevel]
    seeds: list[int]
    metric: str = "NDCG@30"

    def to_tsv(self) -> str:
        lines = [f"# score: {self.metric} relative to the run on original sequences, same seed\n",
                 f"# seeds: {','.join(map(str, self.seeds))}\n",
                 "level\tcopies\tdrop_prob\trelative_score\tmean_" + self.metric + "\titem_frequency\n"]
        for lv in self.levels:
            lines.append(f"{lv.name}\t{lv.copies}\t{lv.drop_prob:.6g}\t{lv.mean_relative:.6f}\t"
                         f"{np.mean(lv.ndcg):.6f}\t{np.mean(lv.frequency):.6f}\n")
        return "".join(lines)

    def to_dict(self) -> dict:
        return {"metric": self.metric, "seeds": self.seeds,
                "levels": [dict(name=lv.name, copies=lv.copies, drop_prob=lv.drop_prob, ndcg=lv.ndcg,
                                relative=lv.relative, mean_relative=lv.mean_relative,
                                frequency=lv.frequency) for lv in self.levels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def item_frequency(original, sampled) -> float:
    """Item occurrences in ``sampled`` relative to ``original``."""
    return sum(len(s) for s in sampled) / sum(len(s) for s in original)


def sampling_study(ds: Dataset, config: TrainConfig, seeds=(0,), levels=SAMPLING_LEVELS,
                   drop_prob: float | None = None, keep_original: bool = False, cutoffs=CUTOFFS,
                   exclude_history: bool = False) -> SamplingStudy:
    levels = tuple(sorted(set(levels) | {0}))
    config = config.replace(model="harnn")
    sp = make_splits(ds, config)
    base = build_sequences(sp.train)
    metric = f"NDCG@{max(cutoffs)}"
    rows = [SamplingLevel(level_name(n), level_copies(n), level_drop_prob(n, drop_prob)) for n in levels]
    for seed in seeds:
        cfg = config.replace(seed=seed)
        original = None
        for lv in rows:
            # nothing dropped means no new subsequences: exact duplicates are not augmentation
            copies = lv.copies if lv.drop_prob > 0 else 0
            seqs = subsample_sequences(base, lv.drop_prob, copies, seed, keep_original and copies > 0)
            result = train(sp.train, sp.dev, cfg, train_sequences=seqs)
            rep = evaluate(result.model, sp.history, sp.test, exclude_history, cutoffs, with_perplexity=False)
            score = rep.metrics[metric]
            if lv.copies == 0:
                original = score
            lv.ndcg.append(score)
            lv.relative.append(score / original if original else float("nan"))
            lv.frequency.append(item_frequency(base, seqs))
            log.info("seed %d %s %s=%.4f", seed, lv.name, metric, score)
    return SamplingStudy(rows, list(seeds), metric)


# --- data scale --------------------------------------------------------------------

@dataclass
class ScalingStudy:
    fractions: tuple
    seeds: list[int]
    metrics: dict  # model -> fraction -> list of per-seed metric dicts
    n_interactions: dict = field(default_factory=dict)  # fraction -> list of train sizes
    target_users: int = 0

    def mean(self, model: str, fraction: float, name: str = "NDCG@30") -> float:
        return float(np.mean([m[name] for m in self.metrics[model][fraction]]))

    def gain(self, fraction: float, name: str = "NDCG@30") -> float:
        return self.mean("harnn", fraction, name) - self.mean("nhmf", fraction, name)

    def to_tsv(self) -> str:
        names = list(next(iter(self.metrics["harnn"].values()))[0])
        lines = [f"# target users: {self.target_users}; seeds: {','.join(map(str, self.seeds))}\n",
                 "model\tfraction\ttrain_interactions\t" + "\t".join(names) + "\n"]
        for model in self.metrics:
            for f in self.fractions:
                vals = "\t".join(f"{self.mean(model, f, n):.6f}" for n in names)
                lines.append(f"{model}\t{f:g}\t{np.mean(self.n_interactions[f]):.0f}\t{vals}\n")
        return "".join(lines)

    def to_dict(self) -> dict:
        return {"fractions": list(self.fractions), "seeds": self.seeds, "target_users": self.target_users,
                "n_interactions": {str(f): v for f, v in self.n_interactions.items()},
                "metrics": {m: {str(f): v for f, v in per.items()} for m, per in self.metrics.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _restrict_users(ds: Dataset, users) -> Dataset:
    return ds.with_interactions(np.flatnonzero(np.isin(ds.users, list(users))))


def scaling_study(ds: Dataset, config: TrainConfig, seeds=(0,), fractions=FRACTIONS, models=("harnn", "nhmf"),
                  cutoffs=CUTOFFS, exclude_history: bool = False) -> ScalingStudy:
    """Nested user subsets; every model is evaluated on the users of the smallest one."""
    fractions = tuple(sorted(fractions))
    sp = make_splits(ds, config)
    everyone = build_sequences(sp.history)
    metrics = {m: {f: [] for f in fractions} for m in models}
    sizes = {f: [] for f in fractions}
    n_target = 0
    for seed in seeds:
        chosen = {f: {s.user for s in subsample_users(everyone, f, seed)} for f in fractions}
        target = chosen[fractions[0]]
        n_target = len(target)
        for f in fractions:
            train_f, dev_f = _restrict_users(sp.train, chosen[f]), _restrict_users(sp.dev, chosen[f])
            sizes[f].append(len(train_f))
            for m in models:
                result = train(train_f, dev_f, config.replace(model=m, seed=seed))
                rep = evaluate(result.model, sp.history, sp.test, exclude_history, cutoffs, users=sorted(target),
                               with_perplexity=False)
                metrics[m][f].append(rep.metrics)
                log.info("seed %d fraction %g %s NDCG=%.4f", seed, f, m, rep.metrics[f"NDCG@{max(cutoffs)}"])
    return ScalingStudy(fractions, list(seeds), metrics, sizes, n_target)


# --- placement ablation -------------------------------------------------------------

def placement_ablation(ds: Dataset, config: TrainConfig, seeds=(0,), placements=PLACEMENTS) -> dict[str, list[float]]:
    """Best dev perplexity per placement and seed."""
    sp = make_splits(ds, config)
    out = {p: [] for p in placements}
    for seed in seeds:
        for p in placements:
            result = train(sp.train, sp.dev, config.replace(model="harnn", placement=p, seed=seed))
            out[p].append(result.best_dev_perplexity)
    return out
