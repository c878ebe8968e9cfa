"""Top-k ranking metrics and the held-out evaluation protocol.

Relevance is binary.  MAP and NDCG normalize by ``min(|relevant|, k)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from harnn.params import predict_top_k
from harnn.schema import Dataset
from harnn.sequences import build_sequences

CUTOFFS = (2, 10, 30)


def precision_recall_at_k(ranked, relevant, k: int) -> tuple[float, float]:
    if not relevant:
        raise ValueError("empty relevant set")
    hits = sum(1 for i in ranked[:k] if i in relevant)
    return hits / k, hits / len(relevant)


def map_at_k(ranked, relevant, k: int = 30) -> float:
    """Average precision at the hit positions of the top ``k``."""
    if not relevant:
        raise ValueError("empty relevant set")
    hits, total = 0, 0.0
    for pos, item in enumerate(ranked[:k], 1):
        if item in relevant:
            hits += 1
            total += hits / pos
    return total / min(len(relevant), k)


def ndcg_at_k(ranked, relevant, k: int = 30) -> float:
    if not relevant:
        raise ValueError("empty relevant set")
    dcg = sum(1.0 / math.log2(pos + 1) for pos, item in enumerate(ranked[:k], 1) if item in relevant)
    ideal = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(len(relevant), k) + 1))
    return dcg / ideal


def metric_names(cutoffs=CUTOFFS) -> list[str]:
    kmax = max(cutoffs)
    return ([f"P@{k}" for k in cutoffs] + [f"R@{k}" for k in cutoffs]
            + [f"MAP@{kmax}", f"NDCG@{kmax}"])


def user_metrics(ranked, relevant, cutoffs=CUTOFFS) -> dict[str, float]:
    kmax = max(cutoffs)
    pr = {k: precision_recall_at_k(ranked, relevant, k) for k in cutoffs}
    out = {f"P@{k}": pr[k][0] for k in cutoffs}
    out.update({f"R@{k}": pr[k][1] for k in cutoffs})
    out[f"MAP@{kmax}"] = map_at_k(ranked, relevant, kmax)
    out[f"NDCG@{kmax}"] = ndcg_at_k(ranked, relevant, kmax)
    return out


@dataclass
class RankingReport:
    metrics: dict[str, float]
    perplexity: float | None
    n_users: int
    n_skipped: int
    cutoffs: tuple = CUTOFFS
    per_user: dict[int, dict[str, float]] = field(default_factory=dict)

    def to_dict(self, per_user: bool = False) -> dict:
        out = {"metrics": self.metrics, "perplexity": self.perplexity, "n_users": self.n_users,
               "n_skipped": self.n_skipped, "cutoffs": list(self.cutoffs)}
        if per_user:
            out["per_user"] = {str(u): m for u, m in sorted(self.per_user.items())}
        return out

    def to_json(self, per_user: bool = False) -> str:
        return json.dumps(self.to_dict(per_user), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        lines = ["metric\tvalue\n"]
        lines += [f"{name}\t{value:.10f}\n" for name, value in self.metrics.items()]
        if self.perplexity is not None:
            lines.append(f"perplexity\t{self.perplexity:.10f}\n")
        lines.append(f"users\t{self.n_users}\n")
        lines.append(f"skipped\t{self.n_skipped}\n")
        return "".join(lines)


def evaluate(model, history: Dataset, test: Dataset, exclude_history: bool = False,
             cutoffs=CUTOFFS, users=None, with_perplexity: bool = True, chunk: int = 256) -> RankingReport:
    """Score every test user's held-out items against the model's top-k list.

    The model reads each user's history (all pre-test interactions) as
    context; users without history are cold and see only START.  With
    ``exclude_history`` the history items are removed from the ranking.
    ``users`` restricts evaluation to a set of target users.
    """
    cutoffs = tuple(sorted(cutoffs))
    kmax = max(cutoffs)
    past = {s.user: s.items for s in build_sequences(history)}
    relevant: dict[int, set] = {}
    for u, i in zip(test.users, test.items):
        relevant.setdefault(int(u), set()).add(int(i))
    all_users = sorted(relevant) if users is None else sorted(int(u) for u in users)
    skipped = [u for u in all_users if not relevant.get(u)]
    eval_users = [u for u in all_users if relevant.get(u)]

    per_user = {}
    for lo in range(0, len(eval_users), chunk):
        batch = eval_users[lo: lo + chunk]
        contexts = [past.get(u, ()) for u in batch]
        scores = model.user_scores(np.asarray(batch), contexts)
        for row, u, ctx in zip(scores, batch, contexts):
            exclude = set(ctx) if exclude_history else ()
            ranked = predict_top_k(row, kmax, exclude)
            per_user[u] = user_metrics(ranked, relevant[u], cutoffs)

    names = metric_names(cutoffs)
    agg = {n: float(np.mean([m[n] for m in per_user.values()])) if per_user else 0.0 for n in names}
    ppl = None
    if with_perplexity and len(test):
        sub = test if users is None else test.with_interactions(np.isin(test.users, eval_users))
        if len(sub):
            ppl = model.perplexity(history, sub)
    return RankingReport(agg, ppl, len(per_user), len(skipped), cutoffs, per_user)
