"""Learnable embeddings and the attribute-aware input and output layers.

Every entity representation is ``identity row + weighted sum of attribute
rows``.  The weights depend on the combination mode:

* MIX sums every attribute token with weight 1 (repeated tokens count again).
* HET gives categorical and numerical tokens weight 1 and averages the
  tokens inside each multi-hot type, so a multi-hot type contributes like one
  attribute no matter how many values it carries.

These weights are laid out once as sparse ``entity x vocabulary`` matrices,
which turns both layers into matrix products.  Max pooling over multi-hot
types in the output layer is the one nonlinear piece and runs through the
ragged kernels in :mod:`harnn.kernels`.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from harnn import kernels
from harnn.schema import AttributeKind, Dataset

PLACEMENTS = ("none", "input", "output", "both")
CELLS = {"gru": 3, "lstm": 4}  # gate blocks per cell kind


@dataclass(frozen=True)
class Architecture:
    """Which attribute pathways are active and how they are combined."""

    mode: str = "het"  # mix | het
    pool: str = "mean"  # mean | max, multi-hot output pooling
    reduction: str = "sum"  # sum | average, across output summands
    placement: str = "both"  # none | input | output | both
    share: str = "shared"  # shared | separate output parameters
    cell: str = "gru"  # gru | lstm

    def __post_init__(self):
        checks = {
            "mode": ("mix", "het"), "pool": ("mean", "max"), "reduction": ("sum", "average"),
            "placement": PLACEMENTS, "share": ("shared", "separate"), "cell": tuple(CELLS),
        }
        for name, allowed in checks.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @property
    def input_attrs(self) -> bool:
        return self.placement in ("input", "both")

    @property
    def output_attrs(self) -> bool:
        return self.placement in ("output", "both")

    @property
    def separate(self) -> bool:
        return self.share == "separate"


def token_weights(groups, kinds, mode: str) -> dict[int, float]:
    """Attribute weights of one entity, keyed by vocabulary index.

    ``groups[j]`` holds the tokens of the entity's ``j``-th attribute type and
    ``kinds[j]`` that type's kind.  Multi-hot weights are computed as
    ``count / size`` so integer replication of a multiset gives bit-identical
    weights.
    """
    weights: dict[int, float] = {}
    for toks, kind in zip(groups, kinds):
        if not toks:
            if kind is AttributeKind.MULTI_HOT:
                raise ValueError("empty multi-hot attribute set; ingestion should have inserted <unk>")
            continue
        counts = Counter(toks)
        for tok, c in counts.items():
            if mode == "mix":
                w = float(c)
            elif kind is AttributeKind.MULTI_HOT:
                w = c / len(toks)
            else:
                w = float(c)
            weights[tok] = weights.get(tok, 0.0) + w
    return weights


def combine_mix(identity, phi, groups) -> np.ndarray:
    """Identity plus the plain sum of every attribute token row."""
    kinds = [AttributeKind.CATEGORICAL] * len(groups)
    return _combine(identity, phi, token_weights(groups, kinds, "mix"))


def combine_het(identity, phi, groups, kinds) -> np.ndarray:
    """Identity plus categorical/numerical rows plus per-type multi-hot means."""
    return _combine(identity, phi, token_weights(groups, kinds, "het"))


def _combine(identity, phi, weights):
    out = np.array(identity, dtype=np.float64, copy=True)
    for tok in sorted(weights):
        out += weights[tok] * phi[tok]
    return out


def _weight_matrix(rows, kinds, mode, n_rows, n_cols, skip_multi_hot=False) -> sp.csr_matrix:
    indptr, indices, data = [0], [], []
    for groups in rows:
        if skip_multi_hot:
            groups = [g for g, k in zip(groups, kinds) if k is not AttributeKind.MULTI_HOT]
            ks = [k for k in kinds if k is not AttributeKind.MULTI_HOT]
        else:
            ks = kinds
        w = token_weights(groups, ks, mode)
        for tok in sorted(w):
            indices.append(tok)
            data.append(w[tok])
        indptr.append(len(indices))
    indptr += [indptr[-1]] * (n_rows - len(rows))
    return sp.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                          np.asarray(indptr, dtype=np.int64)), shape=(n_rows, n_cols))


@dataclass
class Layout:
    """Sparse combination structure of one catalog under one architecture.

    ``user_in``/``item_in`` produce input representations (item rows include
    START and PAD, which carry no attributes).  The output side splits into
    a linear part ``out_lin`` and, for HET with max pooling, ragged multi-hot
    groups ``(out_ptr, out_tokens)`` attached to items through ``out_groups``.
    ``out_scale`` is 1 under the sum reduction and ``1 / (1 + n_types)``
    under the average reduction.
    """

    n_users: int
    n_items: int
    n_user_vocab: int
    n_item_vocab: int
    user_in: sp.csr_matrix
    item_in: sp.csr_matrix
    out_lin: sp.csr_matrix
    out_ptr: np.ndarray
    out_tokens: np.ndarray
    out_groups: sp.csr_matrix  # (n_items, n_groups) 0/1
    out_scale: np.ndarray
    user_attrs: list = field(repr=False, default_factory=list)
    item_attrs: list = field(repr=False, default_factory=list)
    user_kinds: tuple = ()
    item_kinds: tuple = ()

    @property
    def has_max_groups(self) -> bool:
        return len(self.out_ptr) > 1

    @classmethod
    def build(cls, *, n_users, n_items, n_user_vocab, n_item_vocab, user_attrs, item_attrs,
              user_kinds, item_kinds, arch: Architecture) -> "Layout":
        user_kinds, item_kinds = tuple(user_kinds), tuple(item_kinds)
        if not user_attrs:
            user_attrs = [[() for _ in user_kinds] for _ in range(n_users)]
        if not item_attrs:
            item_attrs = [[() for _ in item_kinds] for _ in range(n_items)]
        user_in = _weight_matrix(user_attrs, user_kinds, arch.mode, n_users, n_user_vocab)
        item_in = _weight_matrix(item_attrs, item_kinds, arch.mode, n_items + 2, n_item_vocab)

        use_max = arch.mode == "het" and arch.pool == "max"
        if not arch.output_attrs:
            out_lin = sp.csr_matrix((n_items, n_item_vocab))
        elif use_max:
            out_lin = _weight_matrix(item_attrs, item_kinds, arch.mode, n_items, n_item_vocab,
                                     skip_multi_hot=True)
        else:
            out_lin = item_in[:n_items]

        ptr, toks, owner = [0], [], []
        if arch.output_attrs and use_max:
            for i, groups in enumerate(item_attrs):
                for g, k in zip(groups, item_kinds):
                    if k is AttributeKind.MULTI_HOT:
                        if not g:
                            raise ValueError(f"item {i}: empty multi-hot attribute set")
                        toks.extend(sorted(set(g)))
                        ptr.append(len(toks))
                        owner.append(i)
        n_groups = len(owner)
        out_groups = sp.csr_matrix((np.ones(n_groups), (np.asarray(owner, dtype=np.int64), np.arange(n_groups))),
                                   shape=(n_items, n_groups))
        if arch.output_attrs and arch.reduction == "average":
            scale = np.full(n_items, 1.0 / (1 + len(item_kinds)))
        else:
            scale = np.ones(n_items)
        return cls(n_users, n_items, n_user_vocab, n_item_vocab, user_in, item_in, out_lin,
                   np.asarray(ptr, dtype=np.int64), np.asarray(toks, dtype=np.int64), out_groups, scale,
                   user_attrs, item_attrs, user_kinds, item_kinds)

    @classmethod
    def from_dataset(cls, ds: Dataset, arch: Architecture) -> "Layout":
        return cls.build(
            n_users=ds.n_users, n_items=ds.n_items,
            n_user_vocab=len(ds.vocab["user"]), n_item_vocab=len(ds.vocab["item"]),
            user_attrs=ds.attrs["user"], item_attrs=ds.attrs["item"],
            user_kinds=[t.kind for t in ds.schema.side("user")],
            item_kinds=[t.kind for t in ds.schema.side("item")],
            arch=arch,
        )


class ParamStore:
    """Every learnable array of a model, by name.

    ``item_emb`` has ``n_items + 2`` rows: the catalog, then START, then PAD
    (PAD stays zero).  In ``separate`` mode the output layer reads its own
    ``item_emb_out``/``item_attr_out`` copies; otherwise it reads the input
    tables directly, so one array serves both layers.
    """

    def __init__(self, arrays: dict[str, np.ndarray], n_items: int):
        self.arrays = arrays
        self.n_items = n_items

    @classmethod
    def init(cls, *, n_users, n_items, n_user_vocab, n_item_vocab, d, cell="gru",
             separate=False, rng=None, scale=0.05, recurrent=True) -> "ParamStore":
        rng = rng if rng is not None else np.random.default_rng(0)

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        arrays = {
            "user_emb": u(n_users, d),
            "user_attr": u(n_user_vocab, d),
            "item_emb": u(n_items + 2, d),
            "item_attr": u(n_item_vocab, d),
        }
        arrays["item_emb"][n_items + 1] = 0.0
        if recurrent:
            g = CELLS[cell]
            arrays["cell_W"] = u(d, g * d)
            arrays["cell_U"] = u(d, g * d)
            arrays["cell_b"] = np.zeros(g * d)
        if separate:
            arrays["item_emb_out"] = arrays["item_emb"][:n_items].copy()
            arrays["item_attr_out"] = arrays["item_attr"].copy()
        return cls(arrays, n_items)

    def __getitem__(self, name):
        return self.arrays[name]

    def __contains__(self, name):
        return name in self.arrays

    @property
    def d(self) -> int:
        return self.arrays["item_emb"].shape[1]

    @property
    def pad_row(self) -> int:
        return self.n_items + 1

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.arrays.items()}, self.n_items)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def output_tables(self, separate: bool):
        if separate:
            return self.arrays["item_emb_out"], self.arrays["item_attr_out"]
        return self.arrays["item_emb"][: self.n_items], self.arrays["item_attr"]


def combine_all(store: ParamStore, layout: Layout, side: str) -> np.ndarray:
    if side == "user":
        return store["user_emb"] + layout.user_in @ store["user_attr"]
    return store["item_emb"] + layout.item_in @ store["item_attr"]


def input_vectors(store: ParamStore, layout: Layout, arch: Architecture, users, items):
    """Input vector per (user, item) pair; returns ``(q, cache)``.

    With input attributes ``q = combine(user) + combine(item)``; otherwise
    ``q`` is the bare item identity row and the user is not used.
    """
    users = np.asarray(users)
    items = np.asarray(items)
    if arch.input_attrs:
        qu = combine_all(store, layout, "user")
        qi = combine_all(store, layout, "item")
        q = qi[items] + qu[users].reshape(users.shape + (1,) * (items.ndim - users.ndim) + (-1,))
    else:
        q = store["item_emb"][items]
    return q, (users, items)


def input_backward(store: ParamStore, layout: Layout, arch: Architecture, cache, dq, grads):
    users, items = cache
    d = dq.shape[-1]
    flat_items = items.reshape(-1)
    dq_flat = np.ascontiguousarray(dq.reshape(-1, d))
    d_items = np.zeros_like(store["item_emb"])
    kernels.scatter_add_rows(d_items, flat_items, dq_flat)
    grads["item_emb"] += d_items
    if arch.input_attrs:
        grads["item_attr"] += layout.item_in.T @ d_items
        du_per_user = dq.reshape(len(users), -1, d).sum(axis=1) if items.ndim > users.ndim else dq
        d_users = np.zeros_like(store["user_emb"])
        kernels.scatter_add_rows(d_users, users.reshape(-1), np.ascontiguousarray(du_per_user.reshape(-1, d)))
        grads["user_emb"] += d_users
        grads["user_attr"] += layout.user_in.T @ d_users
    grads["item_emb"][store.pad_row] = 0.0


def output_matrix(store: ParamStore, layout: Layout, arch: Architecture) -> np.ndarray:
    """Per-item output vectors for the linear part of the score (``n_items x d``)."""
    e_out, phi_out = store.output_tables(arch.separate)
    w = e_out + layout.out_lin @ phi_out if arch.output_attrs else e_out.copy()
    return w * layout.out_scale[:, None]


def output_scores(store: ParamStore, layout: Layout, arch: Architecture, h):
    """Scores of every catalog item for each row of ``h``; returns ``(scores, cache)``.

    ``s(i) = scale_i * (h.e_i + sum_tokens w_k h.phi_k + sum_groups max_k h.phi_k)``
    where the max term only exists for HET with max pooling.
    """
    h = np.atleast_2d(h)
    w = output_matrix(store, layout, arch)
    scores = h @ w.T
    cache = {"h": h, "arg": None}
    if arch.output_attrs and layout.has_max_groups:
        _, phi_out = store.output_tables(arch.separate)
        token_scores = h @ phi_out.T
        pooled, arg = kernels.segment_max(token_scores, layout.out_tokens, layout.out_ptr)
        scores += (layout.out_groups @ pooled.T).T * layout.out_scale
        cache["arg"] = arg
    return scores, cache


def output_backward(store: ParamStore, layout: Layout, arch: Architecture, cache, dscores, grads):
    """Accumulate parameter gradients into ``grads`` and return ``d loss / d h``."""
    h = cache["h"]
    e_out, phi_out = store.output_tables(arch.separate)
    e_name, phi_name = ("item_emb_out", "item_attr_out") if arch.separate else ("item_emb", "item_attr")
    ds = dscores * layout.out_scale
    w = output_matrix(store, layout, arch)
    dh = dscores @ w
    dw = ds.T @ h  # gradient w.r.t. the unscaled item vectors
    grads[e_name][: layout.n_items] += dw
    if arch.output_attrs:
        grads[phi_name] += layout.out_lin.T @ dw
        if cache["arg"] is not None:
            dpooled = np.asarray(ds @ layout.out_groups)
            dtok = kernels.segment_max_backward(dpooled, cache["arg"], phi_out.shape[0])
            dh += dtok @ phi_out
            grads[phi_name] += dtok.T @ h
    return dh


def predict_top_k(scores, k: int, exclude=()) -> list[int]:
    """Item ids by descending score, ties by ascending id, ``exclude`` removed first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(len(scores))
    if len(exclude):
        keep = np.ones(len(scores), dtype=bool)
        keep[np.fromiter(exclude, dtype=np.int64)] = False
        ids = ids[keep]
    order = np.lexsort((ids, -scores[ids]))
    return [int(i) for i in ids[order[:k]]]


def nearest_neighbors(phi, index: int, k: int) -> list[tuple[int, float]]:
    """``k`` rows closest to row ``index`` in cosine distance, the query excluded."""
    phi = np.asarray(phi, dtype=np.float64)
    if not 0 <= index < len(phi):
        raise KeyError(f"attribute index {index} out of range")
    norms = np.linalg.norm(phi, axis=1)
    norms[norms == 0] = 1.0
    unit = phi / norms[:, None]
    dist = 1.0 - unit @ unit[index]
    cand = np.delete(np.arange(len(phi)), index)
    order = cand[np.lexsort((cand, dist[cand]))][:k]
    return [(int(j), float(max(dist[j], 0.0))) for j in order]
