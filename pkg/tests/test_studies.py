import numpy as np
import pytest

from harnn.sequences import UserSequence, subsample_sequences
from harnn.studies import (item_frequency, level_copies, level_drop_prob, level_name, make_splits,
                           placement_ablation, sampling_study, scaling_study)
from harnn.trainer import TrainConfig

FAST = TrainConfig(d=6, max_epochs=2, batch_size=8)


def test_level_schedule():
    assert [level_name(n) for n in (0, 1, 8)] == ["original", "x1", "x8"]
    assert [level_copies(n) for n in (0, 1, 2, 4, 8)] == [0, 2, 3, 5, 9]
    assert [level_drop_prob(c) for c in (0, 1, 2, 4, 8)] == [0.0, 0.5, 2 / 3, 0.8, 8 / 9]
    assert level_drop_prob(4, 0.25) == 0.25 and level_drop_prob(0, 0.25) == 0.0


def test_keep_original_prepends_the_full_sequence():
    seqs = [UserSequence(0, (1, 2, 3, 4)), UserSequence(1, (5, 6))]
    out = subsample_sequences(seqs, 0.5, 3, seed=0, keep_original=True)
    assert [s for s in out if len(s.items) == 4][0] == seqs[0] and out[0] == seqs[0]
    without = subsample_sequences(seqs, 0.5, 3, seed=0)
    assert out[1:] == [s for s in without if s.user == 0] + [seqs[1]] + [s for s in without if s.user == 1]


def test_every_level_keeps_the_item_frequency():
    rng = np.random.default_rng(0)
    seqs = [UserSequence(u, tuple(rng.integers(0, 50, 40))) for u in range(300)]
    for n in (1, 2, 4, 8):
        sampled = subsample_sequences(seqs, level_drop_prob(n), level_copies(n), seed=n)
        assert abs(item_frequency(seqs, sampled) - 1.0) <= 0.02


def test_splits_partition_the_events(small_ds):
    sp = make_splits(small_ds, FAST)
    assert len(sp.train) + len(sp.dev) + len(sp.test) == len(small_ds)
    assert len(sp.history) == len(sp.train) + len(sp.dev)
    assert sp.history.times.max() <= sp.test.times.min()


def test_sampling_study_shape_and_determinism(small_ds):
    a = sampling_study(small_ds, FAST, seeds=(0, 1), levels=(1, 2))
    b = sampling_study(small_ds, FAST, seeds=(0, 1), levels=(1, 2))
    assert a.to_json() == b.to_json()
    assert [lv.name for lv in a.levels] == ["original", "x1", "x2"]
    assert a.levels[0].relative == [1.0, 1.0]
    assert all(len(lv.ndcg) == 2 for lv in a.levels)
    assert a.to_tsv().splitlines()[2].split("\t")[:4] == ["level", "copies", "drop_prob", "relative_score"]


def test_scaling_study_nests_users_and_evaluates_the_same_targets(small_ds):
    study = scaling_study(small_ds, FAST, seeds=(0,), fractions=(0.5, 0.25, 1.0))
    assert study.fractions == (0.25, 0.5, 1.0)
    sizes = [study.n_interactions[f][0] for f in study.fractions]
    assert sizes == sorted(sizes) and sizes[-1] == len(make_splits(small_ds, FAST).train)
    assert study.target_users == 10
    assert study.gain(1.0) == pytest.approx(study.mean("harnn", 1.0) - study.mean("nhmf", 1.0))


def test_placement_ablation_reports_every_placement(small_ds):
    out = placement_ablation(small_ds, FAST, seeds=(0,), placements=("none", "both"))
    assert set(out) == {"none", "both"} and all(len(v) == 1 and v[0] > 1.0 for v in out.values())
