import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skelzsl.errors import InfeasibleSplitError, UsageError
from skelzsl.splits import (ClassSplit, furthest_split, isolation_scores, load_split,
                            nearest_split, random_split, save_split)


def random_dist(seed, c=8):
    p = np.random.default_rng(seed).standard_normal((c, 3))
    return np.linalg.norm(p[:, None] - p[None], axis=-1)


def nn_score(d, i):
    return min(d[i, j] for j in range(len(d)) if j != i)


def test_tight_pair_is_picked():
    pts = np.array([[0.0], [5.0], [5.1], [11.0]])
    d = np.abs(pts - pts.T)
    s = nearest_split(d, 1)
    assert s.unseen == (1,) and s.seen == (0, 2, 3)


@pytest.mark.parametrize("seed", range(10))
def test_k1_is_argmin_of_nn_distance(seed):
    d = random_dist(seed)
    assert nearest_split(d, 1).unseen == (int(np.argmin([nn_score(d, i) for i in range(8)])),)


@pytest.mark.parametrize("seed", range(10))
def test_nearest_matches_exhaustive_oracle(seed):
    d = random_dist(seed)
    scores = [nn_score(d, i) for i in range(8)]
    # the greedy pick with no floor is the k-subset with the smallest sorted (score, index) keys
    best = min(itertools.combinations(range(8), 3),
               key=lambda sub: sorted((scores[i], i) for i in sub))
    assert sorted(nearest_split(d, 3).unseen) == sorted(best)


@pytest.mark.parametrize("seed", range(10))
def test_nearest_with_floor_matches_definition(seed):
    d = random_dist(seed)
    floor = float(np.median(d))
    scores = [nn_score(d, i) for i in range(8)]
    picked = []
    for i in sorted(range(8), key=lambda i: (scores[i], i)):
        if all(d[i, j] >= floor for j in picked):
            picked.append(i)
    k = min(len(picked), 3)
    assert list(nearest_split(d, k, floor).unseen) == picked[:k]


def test_infeasible_floor_reports_count():
    d = np.full((4, 4), 0.1)
    np.fill_diagonal(d, 0.0)
    with pytest.raises(InfeasibleSplitError) as info:
        nearest_split(d, 2, diversity_floor=0.5)
    assert info.value.found == 1


def test_outlier_is_furthest():
    pts = np.array([[0.0], [0.1], [0.2], [9.0]])
    assert furthest_split(np.abs(pts - pts.T), 1).unseen == (3,)


def test_equal_distances_take_first_indices():
    d = np.ones((6, 6)) - np.eye(6)
    assert furthest_split(d, 2).unseen == (0, 1)
    assert nearest_split(d, 2).unseen == (0, 1)


@pytest.mark.parametrize("seed", range(10))
def test_furthest_matches_sort_oracle(seed):
    d = random_dist(seed)
    order = sorted(range(8), key=lambda i: (-nn_score(d, i), i))
    assert list(furthest_split(d, 3).unseen) == order[:3]


def test_mean_scoring():
    d = random_dist(0)
    np.testing.assert_allclose(isolation_scores(d, "mean"), d.sum(axis=1) / 7)
    order = sorted(range(8), key=lambda i: (d[i].sum(), i))
    assert list(nearest_split(d, 2, scoring="mean").unseen) == order[:2]


def test_random_split_seeded():
    labels = list("abcdefg")
    assert random_split(labels, 3, 4) == random_split(labels, 3, 4)
    assert random_split(labels, 6, 0).seen.__len__() == 1


def test_random_split_is_uniform():
    counts = np.zeros(6)
    for seed in range(10000):
        counts[list(random_split(range(6), 2, seed).unseen)] += 1
    np.testing.assert_allclose(counts / 10000, 1 / 3, atol=0.02)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 9), st.data())
def test_partition_and_complementarity(c, data):
    k = data.draw(st.integers(1, c - 1))
    seed = data.draw(st.integers(0, 10**6))
    d = random_dist(seed, c)
    splits = [nearest_split(d, k), furthest_split(d, k), random_split(range(c), k, seed)]
    for s in splits:
        assert set(s.seen) | set(s.unseen) == set(range(c))
        assert not set(s.seen) & set(s.unseen)
        assert len(s.unseen) == k and len(s.seen) == c - k
    scores = isolation_scores(d)
    assert scores[splits[0].unseen[0]] <= scores[splits[1].unseen[0]]
    assert nearest_split(d, k) == splits[0] and furthest_split(d, k) == splits[1]


def test_bad_k():
    with pytest.raises(UsageError):
        nearest_split(random_dist(0), 8)
    with pytest.raises(UsageError):
        random_split(range(4), 0, 1)


def test_json_round_trip(tmp_path):
    labels = [f"c{i}" for i in range(8)]
    s = nearest_split(random_dist(1), 3, 0.2, metric="euclidean")
    save_split(s, labels, tmp_path / "s.json")
    assert load_split(tmp_path / "s.json", labels) == s
