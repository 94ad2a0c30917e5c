import json

import numpy as np
import pytest

from liftpolicy.autodiff import DimensionError, UsageError
from liftpolicy.data import (
    Dataset,
    Episode,
    Normalizer,
    fork_path,
    generate_dataset,
    generate_fork_dataset,
    generate_tracking_dataset,
    load_jsonl,
    save_jsonl,
    tracking_signal,
)


def test_tracking_episode_targets_are_clean_next_values():
    ds = generate_tracking_dataset(3, 20, seed=1)
    e = ds.episodes[0]
    clean = tracking_signal(e.meta["params"], np.arange(21))
    np.testing.assert_allclose(e.actions, clean[1:])
    assert np.std(e.observations - clean[:20]) < 0.1


def test_generation_is_order_independent():
    a = generate_tracking_dataset(5, 16, seed=3)
    b = generate_tracking_dataset(2, 16, seed=3)
    np.testing.assert_array_equal(a.episodes[1].observations, b.episodes[1].observations)


def test_fork_episodes_reach_goal_and_split_modes():
    ds = generate_fork_dataset(200, 32, seed=0)
    modes = [e.meta["mode"] for e in ds.episodes]
    assert 0.4 < modes.count("left") / 200 < 0.6
    for e in ds.episodes[:10]:
        end = e.observations[0, :2] + e.actions.sum(axis=0)
        np.testing.assert_allclose(end, e.meta["goal"], atol=1e-12)
        mid = e.observations[16, :2]
        assert np.linalg.norm(mid - np.asarray(e.meta["goal"]) / 2) > 0.1


def test_fork_path_sides_mirror():
    s = np.linspace(0, 1, 5)
    left = fork_path([1.0, 0.0], 0.25, 1, s)
    right = fork_path([1.0, 0.0], 0.25, -1, s)
    np.testing.assert_allclose(left[:, 1], -right[:, 1])
    np.testing.assert_allclose(left[2], [0.5, 0.25])


def test_short_or_unknown_task_rejected():
    with pytest.raises(UsageError):
        generate_dataset("tracking", 2, 8, 0)
    with pytest.raises(UsageError):
        generate_dataset("pushT", 2, 32, 0)


def test_episode_validation():
    with pytest.raises(DimensionError):
        Episode(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        Episode(np.array([[np.nan]]), np.zeros((1, 1)))
    with pytest.raises(DimensionError):
        Dataset([Episode(np.zeros((2, 2)), np.zeros((2, 1))), Episode(np.zeros((2, 3)), np.zeros((2, 1)))])


def test_normalizer_roundtrip():
    x = np.random.default_rng(0).standard_normal((50, 3)) * [1, 5, 0.1] + 2
    n = Normalizer.fit(x)
    z = n.normalize(x)
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(n.denormalize(z), x)
    m = Normalizer.from_dict(n.to_dict())
    np.testing.assert_array_equal(m.mean, n.mean)


def test_split_is_seeded_and_disjoint():
    ds = generate_tracking_dataset(20, 16, seed=0)
    tr, va = ds.split(0.1, seed=4)
    tr2, va2 = ds.split(0.1, seed=4)
    assert len(va) == 2 and len(tr) == 18
    assert [id(e) for e in va.episodes] == [id(e) for e in va2.episodes]
    assert not {id(e) for e in tr.episodes} & {id(e) for e in va.episodes}
    np.testing.assert_array_equal(va.obs_norm.mean, tr.obs_norm.mean)


def test_jsonl_roundtrip(tmp_path):
    ds = generate_fork_dataset(4, 16, seed=2)
    path = tmp_path / "d.jsonl"
    save_jsonl(ds, path)
    back = load_jsonl(path)
    assert len(back) == 4 and back.task == "fork"
    np.testing.assert_array_equal(back.episodes[3].actions, ds.episodes[3].actions)


def test_jsonl_bad_line_reports_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    good = json.dumps({"obs": [[0.0]], "act": [[1.0]]})
    path.write_text(good + "\n" + "{not json\n")
    with pytest.raises(ValueError, match=":2:"):
        load_jsonl(path)
