import numpy as np
import pytest

from acorl.data import (
    ComplementaryCueSpec,
    CueGroup,
    Dataset,
    TrialList,
    format_dataset,
    gen_complementary_classes,
    gen_trial_list,
    parse_dataset,
    parse_trials,
    read_dataset,
    read_trials,
    split_indices,
    write_dataset,
    write_trials,
)
from acorl.errors import ConfigurationError, ContractViolation, ParseError


def small_spec(**kw):
    base = dict(num_classes=4, samples_per_class=50, groups=(CueGroup(3, 6.0), CueGroup(3, 4.0)), noise_dims=2, seed=1)
    base.update(kw)
    return ComplementaryCueSpec(**base)


def test_shapes_and_class_balance():
    data, report = gen_complementary_classes(small_spec())
    assert data.features.shape == (200, 8)
    assert np.bincount(data.labels).tolist() == [50] * 4
    assert report.input_dim == 8 and len(report.group_oracle_accuracy) == 2


def test_uninformative_group_is_at_chance():
    spec = ComplementaryCueSpec(num_classes=4, samples_per_class=1000, groups=(CueGroup(4, 0.0),), noise_dims=0, seed=3)
    _, report = gen_complementary_classes(spec)
    assert abs(report.group_oracle_accuracy[0] - 0.25) <= 0.03


def test_strong_two_class_group_is_separable():
    spec = ComplementaryCueSpec(num_classes=2, samples_per_class=500, groups=(CueGroup(4, 8.0),), noise_dims=0, seed=0)
    _, report = gen_complementary_classes(spec)
    assert report.group_oracle_accuracy[0] >= 0.99


def test_centroid_separation_floor():
    _, report = gen_complementary_classes(ComplementaryCueSpec(seed=5))
    assert report.min_centroid_distance[0] >= 0.8 * 7.0
    assert report.min_centroid_distance[1] >= 0.8 * 5.0


def test_canonical_group_asymmetry():
    _, report = gen_complementary_classes(ComplementaryCueSpec(seed=0))
    strong, weak = report.group_oracle_accuracy
    assert strong > weak > 0.8


def test_infeasible_spec_is_configuration_error():
    with pytest.raises(ConfigurationError):
        gen_complementary_classes(ComplementaryCueSpec(num_classes=40, groups=(CueGroup(1, 5.0),), noise_dims=0))


def test_generation_is_deterministic(tmp_path):
    a, _ = gen_complementary_classes(small_spec())
    b, _ = gen_complementary_classes(small_spec())
    write_dataset(tmp_path / "a.csv", a)
    write_dataset(tmp_path / "b.csv", b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c, _ = gen_complementary_classes(small_spec(seed=2))
    assert not np.array_equal(a.features, c.features)


def test_cue_groups_independent_within_class():
    spec = ComplementaryCueSpec(num_classes=3, samples_per_class=600, groups=(CueGroup(4, 6.0), CueGroup(4, 5.0)), noise_dims=0, seed=9)
    data, _ = gen_complementary_classes(spec)
    for c in range(3):
        x = data.features[data.labels == c]
        corr = np.abs(np.corrcoef(x.T)[:4, 4:])
        # independent draws: the block averages near 0, each entry within sampling noise
        assert corr.mean() < 0.1
        assert corr.max() < 4.5 / np.sqrt(len(x))


def test_noise_sigma_scales_noise_dims():
    data, _ = gen_complementary_classes(small_spec(noise_dims=3, noise_sigma=3.0, samples_per_class=500))
    assert abs(data.features[:, -3:].std() - 3.0) < 0.1


def test_split_fractions_and_disjointness():
    s = split_indices(1000, 4)
    assert [len(s[k]) for k in ("train", "eval", "calib")] == [700, 200, 100]
    allidx = np.concatenate(list(s.values()))
    assert sorted(allidx.tolist()) == list(range(1000))
    assert split_indices(1000, 4)["eval"].tolist() == s["eval"].tolist()


def test_trial_counts_and_constraints():
    labels = np.repeat(np.arange(5), 20)
    t = gen_trial_list(labels, 30, 200, seed=0)
    assert int(t.genuine.sum()) == 5 * 30 and int((t.genuine == 0).sum()) == 200
    assert (t.enroll != t.test).all()
    pairs = {(min(a, b), max(a, b)) for a, b in zip(t.enroll, t.test)}
    assert len(pairs) == len(t)
    same = labels[t.enroll] == labels[t.test]
    assert (same == (t.genuine == 1)).all()


def test_trial_seed_changes_pairs_not_counts():
    labels = np.repeat(np.arange(4), 30)
    a, b = gen_trial_list(labels, 10, 50, seed=0), gen_trial_list(labels, 10, 50, seed=1)
    assert len(a) == len(b)
    assert set(zip(a.enroll, a.test)) != set(zip(b.enroll, b.test))
    c = gen_trial_list(labels, 10, 50, seed=0)
    assert a.enroll.tolist() == c.enroll.tolist() and a.test.tolist() == c.test.tolist()


def test_trial_enumeration_path_for_dense_requests():
    labels = np.repeat(np.arange(2), 4)
    t = gen_trial_list(labels, 6, 16, seed=0)
    assert int((t.genuine == 0).sum()) == 16


def test_trial_subset_stays_inside_subset():
    labels = np.repeat(np.arange(4), 30)
    subset = np.arange(0, 120, 2)
    t = gen_trial_list(labels, 5, 40, seed=3, subset=subset)
    assert set(t.enroll.tolist()) | set(t.test.tolist()) <= set(subset.tolist())


def test_trial_count_errors():
    labels = np.repeat(np.arange(2), 3)
    with pytest.raises(ConfigurationError):
        gen_trial_list(labels, 4, 1, seed=0)
    with pytest.raises(ConfigurationError):
        gen_trial_list(labels, 1, 10, seed=0)
    with pytest.raises(ContractViolation):
        gen_trial_list(np.array([0, 1, 1]), 1, 1, seed=0)


def test_dataset_roundtrip_is_exact(tmp_path):
    data, _ = gen_complementary_classes(small_spec())
    data = Dataset(data.features * np.pi / 7, data.labels)
    write_dataset(tmp_path / "d.csv", data)
    back = read_dataset(tmp_path / "d.csv")
    assert back.features.tobytes() == data.features.tobytes()
    assert back.labels.tolist() == data.labels.tolist()
    assert format_dataset(data).splitlines()[0] == "label," + ",".join(f"f_{i}" for i in range(8))


def test_ragged_row_names_line():
    lines = ["label,f_0,f_1"] + [f"{i % 2},0.5,1.5" for i in range(5)] + ["1,0.5"] + ["0,1,1"]
    with pytest.raises(ParseError, match="line 7"):
        parse_dataset("\n".join(lines) + "\n")


def test_non_numeric_and_empty():
    with pytest.raises(ParseError, match="line 3"):
        parse_dataset("label,f_0\n0,1.0\n1,abc\n")
    with pytest.raises(ParseError, match="no header"):
        parse_dataset("")


def test_trials_roundtrip(tmp_path):
    t = gen_trial_list(np.repeat(np.arange(3), 10), 4, 12, seed=2)
    write_trials(tmp_path / "t.txt", t)
    back = read_trials(tmp_path / "t.txt")
    for col in ("genuine", "enroll", "test"):
        assert getattr(back, col).tolist() == getattr(t, col).tolist()
    assert (tmp_path / "t.txt").read_text().splitlines()[0].count(" ") == 2


def test_trial_parse_errors():
    with pytest.raises(ParseError, match="line 2"):
        parse_trials("1 0 1\n2 0 1\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_trials("1 0\n")


def test_trial_check():
    TrialList([0, 1], [0, 1], [1, 2]).check(3)
    with pytest.raises(ContractViolation):
        TrialList([1, 1], [0, 1], [1, 2]).check(3)
    with pytest.raises(ContractViolation):
        TrialList([0, 1], [0, 1], [1, 5]).check(3)
