"""Gated recurrent cells, the sequence loss and its exact manual gradient.

Gate weights are packed column-wise: for a GRU ``W = [W_z | W_r | W_h]`` (all
``d x d``, applied as ``q @ W``), likewise ``U`` and ``b``; an LSTM packs
``[i | f | o | g]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from harnn.params import (
    Architecture,
    Layout,
    ParamStore,
    input_backward,
    input_vectors,
    output_backward,
    output_scores,
)
from harnn.sequences import SequenceBatch


def sigmoid(x):
    # split on sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_step(x, h, W, U, b):
    d = h.shape[-1]
    a = x @ W + b
    hu = h @ U[:, : 2 * d]
    z = sigmoid(a[..., :d] + hu[..., :d])
    r = sigmoid(a[..., d: 2 * d] + hu[..., d:])
    rh = r * h
    n = np.tanh(a[..., 2 * d:] + rh @ U[:, 2 * d:])
    h_new = (1.0 - z) * h + z * n
    return h_new, (x, h, z, r, rh, n)


def gru_step_backward(dh_new, cache, W, U):
    x, h, z, r, rh, n = cache
    d = h.shape[-1]
    dn = dh_new * z
    dz = dh_new * (n - h)
    dh = dh_new * (1.0 - z)
    dan = dn * (1.0 - n * n)
    drh = dan @ U[:, 2 * d:].T
    dr = drh * h
    dh += drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    da = np.concatenate([daz, dar, dan], axis=-1)
    dW = x.T @ da
    dU = np.concatenate([h.T @ daz, h.T @ dar, rh.T @ dan], axis=1)
    db = da.sum(axis=0)
    dh += daz @ U[:, :d].T + dar @ U[:, d: 2 * d].T
    dx = da @ W.T
    return dx, dh, dW, dU, db


def lstm_step(x, h, c, W, U, b):
    d = h.shape[-1]
    a = x @ W + h @ U + b
    i = sigmoid(a[..., :d])
    f = sigmoid(a[..., d: 2 * d])
    o = sigmoid(a[..., 2 * d: 3 * d])
    g = np.tanh(a[..., 3 * d:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, o, g, tc)


def lstm_step_backward(dh_new, dc_new, cache, W, U):
    x, h, c, i, f, o, g, tc = cache
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c
    dc_prev = dc * f
    da = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=-1)
    dW = x.T @ da
    dU = h.T @ da
    db = da.sum(axis=0)
    return da @ W.T, da @ U.T, dc_prev, dW, dU, db


def cell_forward(kind: str, store: ParamStore, q, h, c=None):
    """One recurrence step ``h' = f(q, h)`` on single vectors or batches.

    Returns ``h'`` for a GRU and ``(h', c')`` for an LSTM.
    """
    W, U, b = store["cell_W"], store["cell_U"], store["cell_b"]
    q, h = np.asarray(q, dtype=np.float64), np.asarray(h, dtype=np.float64)
    if kind == "gru":
        return gru_step(q, h, W, U, b)[0]
    c = np.zeros_like(h) if c is None else c
    h_new, c_new, _ = lstm_step(q, h, c, W, U, b)
    return h_new, c_new


def _dropout_mask(rng, shape, rate):
    if rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def encode(store: ParamStore, layout: Layout, arch: Architecture, users, inputs,
           dropout: float = 0.0, rng=None):
    """Run the recurrence over padded ``inputs`` (B, T); returns hidden states and a trace."""
    B, T = inputs.shape
    d = store.d
    q, in_cache = input_vectors(store, layout, arch, users, inputs)
    mq = _dropout_mask(rng, q.shape, dropout)
    x = q * mq if mq is not None else q
    W, U, b = store["cell_W"], store["cell_U"], store["cell_b"]
    hs = np.empty((B, T, d))
    h = np.zeros((B, d))
    c = np.zeros((B, d))
    steps = []
    for t in range(T):
        if arch.cell == "gru":
            h, cache = gru_step(x[:, t], h, W, U, b)
        else:
            h, c, cache = lstm_step(x[:, t], h, c, W, U, b)
        steps.append(cache)
        hs[:, t] = h
    return hs, {"in_cache": in_cache, "mq": mq, "steps": steps}


def encode_backward(store, layout, arch, trace, dhs, grads):
    W, U = store["cell_W"], store["cell_U"]
    B, T, d = dhs.shape
    dx = np.empty((B, T, d))
    dh_next = np.zeros((B, d))
    dc_next = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        dh = dhs[:, t] + dh_next
        if arch.cell == "gru":
            dx_t, dh_next, dW, dU, db = gru_step_backward(dh, trace["steps"][t], W, U)
        else:
            dx_t, dh_next, dc_next, dW, dU, db = lstm_step_backward(dh, dc_next, trace["steps"][t], W, U)
        dx[:, t] = dx_t
        grads["cell_W"] += dW
        grads["cell_U"] += dU
        grads["cell_b"] += db
    if trace["mq"] is not None:
        dx *= trace["mq"]
    input_backward(store, layout, arch, trace["in_cache"], dx, grads)


@dataclass
class Trace:
    """Everything ``backward`` needs from a ``sequence_forward`` call."""

    batch: SequenceBatch
    arch: Architecture
    hidden: np.ndarray  # (B, T, d) states h_1..h_T
    losses: np.ndarray  # (B, T) cross-entropy, 0 where unscored
    probs: np.ndarray  # (N, n_items) softmax rows of scored positions
    positions: tuple  # (rows, cols) of scored positions in the batch
    weights: np.ndarray  # (N,) loss weight of each scored position
    enc: dict = field(repr=False, default_factory=dict)
    out_cache: dict = field(repr=False, default_factory=dict)
    mh: np.ndarray | None = None

    @property
    def total_loss(self) -> float:
        return float(np.sum(self.losses))

    @property
    def n_scored(self) -> int:
        return len(self.weights)


def sequence_forward(batch: SequenceBatch, store: ParamStore, layout: Layout, arch: Architecture,
                     dropout: float = 0.0, rng=None) -> Trace:
    """Per-position cross-entropy of the next item over the full catalog.

    Dropout (inverted scaling) hits the input vectors and the hidden states
    fed to the output layer; pass ``dropout=0`` for evaluation.
    """
    if dropout > 0.0 and rng is None:
        raise ValueError("dropout needs an rng")
    hs, enc = encode(store, layout, arch, batch.users, batch.inputs, dropout, rng)
    mh = _dropout_mask(rng, hs.shape, dropout)
    h_out = hs * mh if mh is not None else hs
    rows, cols = np.nonzero(batch.mask)
    weights = batch.mask[rows, cols]
    scores, out_cache = output_scores(store, layout, arch, h_out[rows, cols])
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    tgt = batch.targets[rows, cols]
    nll = (np.log(z[:, 0]) + m[:, 0]) - scores[np.arange(len(tgt)), tgt]
    bad = ~np.isfinite(nll)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite loss at batch row {rows[k]}, position {cols[k]}")
    losses = np.zeros(batch.mask.shape)
    losses[rows, cols] = weights * nll
    return Trace(batch, arch, hs, losses, probs, (rows, cols), weights, enc, out_cache, mh)


def backward(trace: Trace, store: ParamStore, layout: Layout) -> dict[str, np.ndarray]:
    """Exact gradient of ``trace.total_loss`` with respect to every array in ``store``."""
    if trace is None or not trace.enc:
        raise ValueError("backward needs the trace of a sequence_forward call")
    arch = trace.arch
    grads = store.zeros_like()
    rows, cols = trace.positions
    tgt = trace.batch.targets[rows, cols]
    dscores = trace.probs.copy()
    dscores[np.arange(len(tgt)), tgt] -= 1.0
    dscores *= trace.weights[:, None]
    dh_rows = output_backward(store, layout, arch, trace.out_cache, dscores, grads)
    dhs = np.zeros_like(trace.hidden)
    np.add.at(dhs, (rows, cols), dh_rows)
    if trace.mh is not None:
        dhs *= trace.mh
    encode_backward(store, layout, arch, trace.enc, dhs, grads)
    grads["item_emb"][store.pad_row] = 0.0
    return grads


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class AdaGrad:
    """``acc += g**2; theta -= lr * g / sqrt(acc + eps)``, one accumulator per array."""

    def __init__(self, store: ParamStore, lr: float = 0.1, eps: float = 1e-8):
        self.lr = lr
        self.eps = eps
        self.acc = store.zeros_like()

    def step(self, store: ParamStore, grads: dict[str, np.ndarray]):
        for name, g in grads.items():
            acc = self.acc[name]
            acc += g * g
            store.arrays[name] -= self.lr * g / np.sqrt(acc + self.eps)
        store.arrays["item_emb"][store.pad_row] = 0.0


def adagrad_step(store: ParamStore, grads, state: AdaGrad):
    state.step(store, grads)
    return store
