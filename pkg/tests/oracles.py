"""Straight-line reference implementations used as test oracles.

Nothing here imports the package's numeric code: every formula is written
out with Python loops over explicit gate matrices and per-token dot products.
"""
import math

import numpy as np

CAT, MULTI, NUM = "categorical", "multihot", "numerical"


def kind_name(kind):
    return getattr(kind, "value", kind)


def ref_combine_mix(e, phi, groups):
    out = np.array(e, dtype=float)
    for toks in groups:
        for k in toks:
            out = out + phi[k]
    return out


def ref_combine_het(e, phi, groups, kinds):
    out = np.array(e, dtype=float)
    for toks, kind in zip(groups, kinds):
        if kind_name(kind) == MULTI:
            acc = np.zeros_like(out)
            for k in toks:
                acc = acc + phi[k]
            out = out + acc / len(toks)
        else:
            for k in toks:
                out = out + phi[k]
    return out


def ref_item_score(h, e, phi, groups, kinds, mode, pool, reduction, with_attrs=True):
    """Score of one item: identity term plus per-type attribute terms."""
    terms = [float(np.dot(h, e))]
    if with_attrs:
        for toks, kind in zip(groups, kinds):
            dots = [float(np.dot(h, phi[k])) for k in toks]
            if mode == "mix":
                terms.append(sum(dots))
            elif kind_name(kind) == MULTI:
                terms.append(max(dots) if pool == "max" else sum(dots) / len(dots))
            else:
                terms.append(sum(dots))
    total = sum(terms)
    if with_attrs and reduction == "average":
        total /= 1 + len(kinds)
    return total


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _matvec(x, M, col0, d):
    # x @ M[:, col0:col0+d] with explicit loops
    return [sum(x[a] * M[a][col0 + j] for a in range(len(x))) for j in range(d)]


def ref_gru(q, h, W, U, b):
    d = len(h)
    W, U, b = W.tolist(), U.tolist(), list(b)
    q, h = list(q), list(h)
    wz, wr, wn = (_matvec(q, W, c * d, d) for c in range(3))
    uz, ur = _matvec(h, U, 0, d), _matvec(h, U, d, d)
    z = [_sig(wz[j] + uz[j] + b[j]) for j in range(d)]
    r = [_sig(wr[j] + ur[j] + b[d + j]) for j in range(d)]
    rh = [r[j] * h[j] for j in range(d)]
    un = _matvec(rh, U, 2 * d, d)
    n = [math.tanh(wn[j] + un[j] + b[2 * d + j]) for j in range(d)]
    return np.array([(1 - z[j]) * h[j] + z[j] * n[j] for j in range(d)])


def ref_lstm(q, h, c, W, U, b):
    d = len(h)
    W, U, b = W.tolist(), U.tolist(), list(b)
    q, h, c = list(q), list(h), list(c)
    pre = [[wq + uh + b[g * d + j] for j, (wq, uh) in
            enumerate(zip(_matvec(q, W, g * d, d), _matvec(h, U, g * d, d)))] for g in range(4)]
    i = [_sig(x) for x in pre[0]]
    f = [_sig(x) for x in pre[1]]
    o = [_sig(x) for x in pre[2]]
    g = [math.tanh(x) for x in pre[3]]
    c_new = [f[j] * c[j] + i[j] * g[j] for j in range(d)]
    h_new = [o[j] * math.tanh(c_new[j]) for j in range(d)]
    return np.array(h_new), np.array(c_new)


def ref_step_losses(toy, user, items):
    """Per-position next-item cross-entropy of one unpadded sequence."""
    a = toy.arch
    st = toy.store.arrays
    n_items = toy.n_items
    start = n_items
    e_out = st["item_emb_out"] if a.share == "separate" else st["item_emb"]
    phi_out = st["item_attr_out"] if a.share == "separate" else st["item_attr"]
    comb = ref_combine_het if a.mode == "het" else (lambda e, phi, g, k: ref_combine_mix(e, phi, g))

    def q_of(item):
        if a.placement in ("input", "both"):
            qi = st["item_emb"][item].copy()
            if item < n_items:
                qi = comb(st["item_emb"][item], st["item_attr"], toy.item_attrs[item], toy.item_kinds)
            qu = comb(st["user_emb"][user], st["user_attr"], toy.user_attrs[user], toy.user_kinds)
            return qu + qi
        return st["item_emb"][item]

    inputs = [start] + list(items[:-1])
    h = np.zeros(toy.d)
    c = np.zeros(toy.d)
    losses = []
    for x, target in zip(inputs, items):
        if a.cell == "gru":
            h = ref_gru(q_of(x), h, st["cell_W"], st["cell_U"], st["cell_b"])
        else:
            h, c = ref_lstm(q_of(x), h, c, st["cell_W"], st["cell_U"], st["cell_b"])
        scores = [ref_item_score(h, e_out[i], phi_out, toy.item_attrs[i], toy.item_kinds, a.mode, a.pool,
                                 a.reduction, with_attrs=a.placement in ("output", "both"))
                  for i in range(n_items)]
        m = max(scores)
        lse = m + math.log(sum(math.exp(s - m) for s in scores))
        losses.append(lse - scores[target])
    return losses


# --- ranking metrics by brute force -------------------------------------------------

def brute_precision(ranked, relevant, k):
    return len(set(ranked[:k]) & set(relevant)) / k


def brute_recall(ranked, relevant, k):
    return len(set(ranked[:k]) & set(relevant)) / len(relevant)


def brute_ap(ranked, relevant, k):
    # precision@i summed over every cut i that ends on a hit
    total = 0.0
    for i in range(1, min(k, len(ranked)) + 1):
        if ranked[i - 1] in relevant:
            total += brute_precision(ranked, relevant, i)
    return total / min(len(relevant), k)


def brute_ndcg(ranked, relevant, k):
    gains = [1.0 if x in relevant else 0.0 for x in ranked[:k]]
    dcg = sum(g / math.log2(i + 2) for i, g in enumerate(gains))
    best = sorted([1.0] * len(relevant) + [0.0] * k, reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(best))
    return dcg / idcg
