import numpy as np
import pytest

from gradcheck import numeric_grads, rel_error
from harnn.baselines import NHMF_ARCH, NhmfModel, PopModel, nhmf_forward, pop_fit, pop_rank
from harnn.params import Layout, ParamStore
from harnn.schema import AttributeKind as K
from oracles import ref_combine_het
from toys import make_toy, plain_dataset


def counts_dataset(counts):
    events = [(0, item, t) for t, item in enumerate(i for i, c in enumerate(counts) for _ in range(c))]
    return plain_dataset(events, n_items=len(counts))


def test_pop_examples():
    assert pop_rank(pop_fit(counts_dataset([5, 9])), 2) == [1, 0]
    assert pop_rank(pop_fit(counts_dataset([3, 3, 3])), 3) == [0, 1, 2]
    assert pop_rank(pop_fit(counts_dataset([10, 9])), 2) == [0, 1]


def test_pop_is_the_same_for_every_user():
    model = PopModel([1.0, 4.0, 2.0])
    scores = model.user_scores([0, 5, 9], [(), (1,), (2, 2)])
    assert (scores == scores[0]).all()


def test_pop_refuses_empty_training():
    with pytest.raises(ValueError):
        PopModel.fit(plain_dataset([(0, 0, 1)]).with_interactions(np.array([], dtype=np.int64)))


def hand_nhmf(user_emb, item_emb, user_attr=None, item_attr=None, user_attrs=None, item_attrs=None,
              user_kinds=(), item_kinds=()):
    user_emb, item_emb = np.asarray(user_emb, float), np.asarray(item_emb, float)
    d = user_emb.shape[1]
    nu, ni = len(user_emb), len(item_emb)
    user_attr = np.zeros((0, d)) if user_attr is None else np.asarray(user_attr, float)
    item_attr = np.zeros((0, d)) if item_attr is None else np.asarray(item_attr, float)
    store = ParamStore({"user_emb": user_emb, "user_attr": user_attr,
                        "item_emb": np.vstack([item_emb, np.zeros((2, d))]), "item_attr": item_attr}, ni)
    layout = Layout.build(n_users=nu, n_items=ni, n_user_vocab=len(user_attr), n_item_vocab=len(item_attr),
                          user_attrs=user_attrs or [[]] * nu, item_attrs=item_attrs or [[]] * ni,
                          user_kinds=user_kinds, item_kinds=item_kinds, arch=NHMF_ARCH)
    return NhmfModel(store, layout)


def test_orthogonal_representations_score_zero():
    assert nhmf_forward(hand_nhmf([[1.0, 0.0]], [[0.0, 3.0]]), 0, [0]).tolist() == [0.0]


def test_identical_representations_score_squared_norm():
    assert nhmf_forward(hand_nhmf([[1.0, 1.0]], [[1.0, 1.0]]), 0, [0])[0] == pytest.approx(2.0, abs=1e-15)


def test_hand_set_toy_matches_direct_combination():
    ua, ia = np.array([[0.5, -1.0], [2.0, 0.0]]), np.array([[1.0, 1.0], [0.0, -2.0], [3.0, 0.5]])
    model = hand_nhmf([[0.1, 0.2]], [[1.0, 0.0], [0.0, 1.0]], ua, ia,
                      user_attrs=[[(0,), (0, 1)]], item_attrs=[[(2,), (0, 1)], [(0,), (1, 1, 2)]],
                      user_kinds=(K.CATEGORICAL, K.MULTI_HOT), item_kinds=(K.NUMERICAL, K.MULTI_HOT))
    qu = ref_combine_het([0.1, 0.2], ua, [(0,), (0, 1)], [K.CATEGORICAL, K.MULTI_HOT])
    q0 = ref_combine_het([1.0, 0.0], ia, [(2,), (0, 1)], [K.NUMERICAL, K.MULTI_HOT])
    q1 = ref_combine_het([0.0, 1.0], ia, [(0,), (1, 1, 2)], [K.NUMERICAL, K.MULTI_HOT])
    got = nhmf_forward(model, 0, [0, 1])
    assert np.abs(got - [qu @ q0, qu @ q1]).max() <= 1e-12


def toy_nhmf(seed):
    toy = make_toy(np.random.default_rng(seed), NHMF_ARCH)
    arrays = {k: v for k, v in toy.store.arrays.items() if not k.startswith("cell_")}
    return NhmfModel(ParamStore(arrays, toy.n_items), toy.layout), toy


def test_nhmf_loss_depends_only_on_the_pair_multiset():
    model, toy = toy_nhmf(1)
    rng = np.random.default_rng(2)
    users = rng.integers(0, toy.n_users, 20)
    items = rng.integers(0, toy.n_items, 20)
    base, _ = model.loss_and_grads(users, items, need_grads=False)
    for _ in range(5):
        p = rng.permutation(20)
        loss, _ = model.loss_and_grads(users[p], items[p], need_grads=False)
        assert loss == pytest.approx(base, abs=1e-12)


@pytest.mark.parametrize("dropout", [0.0, 0.5])
def test_nhmf_gradients_match_finite_differences(dropout):
    model, toy = toy_nhmf(3)
    users, items = np.array([0, 1, 2, 0]), np.array([1, 5, 0, 3])

    def loss():
        return model.loss_and_grads(users, items, dropout, np.random.default_rng(9), need_grads=False)[0]

    _, analytic = model.loss_and_grads(users, items, dropout, np.random.default_rng(9))
    numeric = numeric_grads(loss, model.store.arrays)
    for name in numeric:
        assert rel_error(analytic[name], numeric[name]) <= 1e-4, name


def test_nhmf_has_no_recurrent_parameters():
    ds = plain_dataset([(0, 0, 1), (1, 1, 2)])
    model = NhmfModel.create(ds, d=4)
    assert not any(k.startswith("cell_") for k in model.store.arrays)


