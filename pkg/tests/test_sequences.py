import filecmp
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnn.schema import load_dataset
from harnn.sequences import (
    UserSequence,
    build_sequences,
    context_sequences,
    make_batches,
    pad_id,
    start_id,
    subsample_sequences,
    subsample_users,
    time_split,
)
from harnn.synth import SynthSpec, generate_synthetic
from toys import plain_dataset


# --- build_sequences -------------------------------------------------------------

def test_sorted_by_time():
    ds = plain_dataset([(0, 2, 9), (0, 1, 5)])
    assert build_sequences(ds) == [UserSequence(0, (1, 2))]


def test_single_event_user():
    ds = plain_dataset([(0, 3, 1)], n_items=4)
    (batch,) = make_batches(build_sequences(ds), 4)
    assert batch.inputs.tolist() == [[start_id(4)]]
    assert batch.targets.tolist() == [[3]]


def test_equal_timestamps_keep_file_order():
    ds = plain_dataset([(0, 4, 7), (0, 1, 7), (0, 3, 7)])
    assert build_sequences(ds)[0].items == (4, 1, 3)


def test_users_without_events_are_skipped():
    ds = plain_dataset([(2, 0, 1), (0, 1, 2)], n_users=4)
    assert [s.user for s in build_sequences(ds)] == [0, 2]


# --- time_split ----------------------------------------------------------------

def test_split_ten_events():
    ds = plain_dataset([(k % 3, k, 100 - k) for k in range(10)])
    train, test = time_split(ds, 0.1)
    assert len(train) == 9 and len(test) == 1
    assert test.times.tolist() == [100]


def test_split_half():
    ds = plain_dataset([(0, 0, 4), (0, 1, 1), (0, 2, 3), (0, 3, 2)])
    train, test = time_split(ds, 0.5)
    assert sorted(train.times.tolist()) == [1, 2] and sorted(test.times.tolist()) == [3, 4]


def test_split_with_equal_times_uses_stable_order():
    ds = plain_dataset([(0, k, 5) for k in range(4)])
    train, test = time_split(ds, 0.25)
    assert train.items.tolist() == [0, 1, 2] and test.items.tolist() == [3]


def test_degenerate_split_is_an_error():
    ds = plain_dataset([(0, 0, 1)])
    with pytest.raises(ValueError):
        time_split(ds, 0.5)
    with pytest.raises(ValueError):
        time_split(plain_dataset([(0, 0, 1), (0, 1, 2)]), 1.0)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 6), st.integers(0, 20)), min_size=2, max_size=40),
       st.floats(0.01, 0.99))
@settings(max_examples=100, deadline=None)
def test_split_partitions_the_multiset(events, fraction):
    ds = plain_dataset(events, n_users=5, n_items=7)
    try:
        train, test = time_split(ds, fraction)
    except ValueError:
        return
    whole = Counter(zip(ds.users.tolist(), ds.items.tolist(), ds.times.tolist()))
    parts = Counter(zip(train.users.tolist(), train.items.tolist(), train.times.tolist()))
    parts.update(zip(test.users.tolist(), test.items.tolist(), test.times.tolist()))
    assert parts == whole
    assert train.times.max() <= test.times.min()


def test_context_sequences_score_only_the_future():
    ds = plain_dataset([(0, 1, 1), (0, 2, 2), (1, 3, 3), (0, 4, 4), (2, 0, 5)])
    hist, fut = time_split(ds, 0.4)
    ctx = context_sequences(hist, fut)
    assert ctx == [UserSequence(0, (1, 2, 4), 2), UserSequence(2, (0,), 0)]


# --- batching --------------------------------------------------------------------

@given(st.lists(st.lists(st.integers(0, 9), min_size=1, max_size=12), min_size=1, max_size=20),
       st.integers(1, 8), st.integers(0, 100))
@settings(max_examples=100, deadline=None)
def test_batches_decode_to_the_original_sequences(item_lists, batch_size, seed):
    seqs = [UserSequence(u, tuple(items)) for u, items in enumerate(item_lists)]
    batches = make_batches(seqs, 10, batch_size=batch_size, rng=np.random.default_rng(seed))
    decoded = sorted((s for b in batches for s in b.decode()), key=lambda s: s.user)
    assert decoded == seqs
    for b in batches:
        assert np.all(b.inputs[:, 0] == start_id(10))
        for row, n in enumerate(b.lengths):
            assert b.inputs[row, 1:n].tolist() == b.targets[row, : n - 1].tolist()
            assert np.all(b.targets[row, n:] == pad_id(10)) and not b.mask[row, n:].any()


def test_truncation_keeps_recent_items():
    (b,) = make_batches([UserSequence(0, tuple(range(8)), scored_from=5)], 10, max_len=4)
    assert b.targets.tolist() == [[4, 5, 6, 7]]
    assert b.inputs.tolist() == [[start_id(10), 4, 5, 6]]
    assert b.mask.tolist() == [[0.0, 1.0, 1.0, 1.0]]


def test_batches_group_similar_lengths():
    seqs = [UserSequence(u, (0,) * n) for u, n in enumerate([1, 9, 2, 8, 3, 7])]
    batches = make_batches(seqs, 1, batch_size=2)
    assert [sorted(b.lengths.tolist()) for b in batches] == [[1, 2], [3, 7], [8, 9]]


def test_batches_are_deterministic_per_seed():
    seqs = [UserSequence(u, (u % 3,) * (1 + u % 4)) for u in range(30)]

    def run(seed):
        return [(b.users.tolist(), b.inputs.tolist()) for b in make_batches(seqs, 3, 4, rng=np.random.default_rng(seed))]

    assert run(1) == run(1)
    assert run(1) != run(2)


# --- subsample_sequences -------------------------------------------------------------

def test_drop_zero_copies_the_original():
    s = UserSequence(3, (1, 2, 3))
    assert subsample_sequences([s], 0.0, 4, seed=0) == [s] * 4


def test_copies_zero_passes_through():
    s = [UserSequence(0, (1, 2)), UserSequence(1, (3,))]
    assert subsample_sequences(s, 0.7, 0, seed=0) == s


def test_three_copies_of_five_items():
    s = UserSequence(0, (1, 2, 3, 4, 5))
    out = subsample_sequences([s], 0.4, 3, seed=0)
    assert 1 <= len(out) <= 3
    for c in out:
        assert set(c.items) <= set(s.items)
        assert list(c.items) == sorted(c.items)  # order preserved


def test_retention_rate_monte_carlo():
    s = UserSequence(0, (0, 1, 2, 3, 4))
    out = subsample_sequences([s], 0.5, 10_000, seed=1)
    counts = Counter(i for c in out for i in c.items)
    for item in s.items:
        assert abs(counts[item] / 10_000 - 0.5) <= 0.02


def test_subsample_validates_arguments():
    with pytest.raises(ValueError):
        subsample_sequences([], 1.0, 1, 0)
    with pytest.raises(ValueError):
        subsample_sequences([], 0.5, -1, 0)


# --- subsample_users ----------------------------------------------------------------

def test_user_fractions_are_nested_and_sized():
    seqs = [UserSequence(u, (0,)) for u in range(50)]
    assert subsample_users(seqs, 1.0, 7) == seqs
    assert subsample_users(seqs, 0.2, 7) == subsample_users(seqs, 0.2, 7)
    prev = set()
    for f in (0.2, 0.44, 0.76, 1.0):
        users = {s.user for s in subsample_users(seqs, f, 7)}
        assert len(users) == int(np.ceil(f * 50 - 1e-9))
        assert prev <= users
        prev = users


# --- synthetic data ---------------------------------------------------------------

SMALL = dict(n_users=40, n_items=30, n_topics=3, min_len=4, max_len=8)


def test_synthetic_is_byte_identical(tmp_path):
    spec = SynthSpec(**SMALL, seed=3)
    generate_synthetic(spec, tmp_path / "a")
    generate_synthetic(spec, tmp_path / "b")
    names = ["interactions.tsv", "attrs_user.tsv", "attrs_item.tsv", "schema.json", "synth.json"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert match == names


def test_synthetic_loads(tmp_path):
    generate_synthetic(SynthSpec(**SMALL), tmp_path)
    ds = load_dataset(tmp_path)
    assert ds.n_users == 40 and ds.n_items == 30
    assert all(4 <= len(s) <= 8 for s in build_sequences(ds))


def topic_of_items(spec):
    from harnn.synth import _World

    return _World(spec, np.random.default_rng(spec.seed)).topic


def test_full_stickiness_keeps_one_topic(tmp_path):
    spec = SynthSpec(**SMALL, stickiness=1.0)
    generate_synthetic(spec, tmp_path)
    ds = load_dataset(tmp_path)
    topic = topic_of_items(spec)
    for s in build_sequences(ds):
        ids = [int(ds.item_ids[i][1:]) for i in s.items]
        assert len({topic[i] for i in ids}) == 1


def test_zero_stickiness_mixes_topics(tmp_path):
    spec = SynthSpec(**SMALL, stickiness=0.0)
    generate_synthetic(spec, tmp_path)
    ds = load_dataset(tmp_path)
    topic = topic_of_items(spec)
    seqs = build_sequences(ds)
    same = np.mean([topic[int(ds.item_ids[a][1:])] == topic[int(ds.item_ids[b][1:])]
                    for s in seqs for a, b in zip(s.items, s.items[1:])])
    assert same < 0.6
