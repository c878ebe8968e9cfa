"""Central finite-difference gradient checks.

Error per parameter array is ``||analytic - numeric|| / max(||analytic||, ||numeric||)``.
An elementwise ratio blows up on entries whose true gradient is ~1e-10,
where the finite difference is pure round-off; the per-array norm ratio
does not, yet still catches any wrong formula.
"""
import itertools

import numpy as np

from harnn.params import Architecture
from harnn.recurrent import backward, sequence_forward
from harnn.sequences import make_batches
from toys import make_toy, random_sequences

STEP = 1e-5
AXES = dict(cell=("gru", "lstm"), mode=("mix", "het"), pool=("mean", "max"),
            placement=("none", "input", "output", "both"), share=("shared", "separate"))


def all_archs(reduction_rng=None):
    out = []
    for values in itertools.product(*AXES.values()):
        kw = dict(zip(AXES, values))
        if reduction_rng is not None:
            kw["reduction"] = "average" if reduction_rng.random() < 0.5 else "sum"
        out.append(Architecture(**kw))
    return out


def numeric_grads(loss, arrays, step=STEP):
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + step
            lp = loss()
            a[idx] = old - step
            lm = loss()
            a[idx] = old
            g[idx] = (lp - lm) / (2 * step)
        out[name] = g
    return out


def rel_error(analytic, numeric, floor=1e-12):
    na, nn = np.linalg.norm(analytic), np.linalg.norm(numeric)
    if max(na, nn) < floor:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / max(na, nn))


def check_arch(arch, seed, dropout=0.0, d=4, n_items=6, max_len=5):
    """Worst per-array relative error for one random toy; returns ``(worst, errors)``."""
    rng = np.random.default_rng(seed)
    toy = make_toy(rng, arch, d=d, n_items=n_items)
    seqs = random_sequences(rng, toy, max_len=max_len)
    batch = make_batches(seqs, toy.n_items, batch_size=len(seqs), rng=np.random.default_rng(seed))[0]

    def run():
        return sequence_forward(batch, toy.store, toy.layout, arch, dropout=dropout,
                                rng=np.random.default_rng(seed + 1) if dropout else None)

    analytic = backward(run(), toy.store, toy.layout)
    numeric = numeric_grads(lambda: run().total_loss, toy.store.arrays)
    errors = {name: rel_error(analytic[name], numeric[name]) for name in numeric}
    return max(errors.values()), errors
