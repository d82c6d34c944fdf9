from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skelzsl.embeddings import (LabelEmbeddingTable, load_embeddings, pairwise_distances,
                                random_embeddings, save_embeddings)
from skelzsl.errors import DegenerateInputError, ParseError

FIXTURE = Path(__file__).parent / "fixtures" / "phrases.csv"


def write(tmp_path, text):
    p = tmp_path / "e.csv"
    p.write_text(text)
    return p


def test_three_row_file(tmp_path):
    p = write(tmp_path, "label,d0,d1,d2,d3\na,1,0,0,0\nb,0,1,0,0\nc,0,0,1,0\n")
    t = load_embeddings(p)
    assert t.embeddings.shape == (3, 4) and t.labels == ("a", "b", "c")
    assert t.normalized is False


def test_quoted_labels_and_reordering():
    t = load_embeddings(FIXTURE)
    assert 'say "stop"' in t.labels and "put on a hat, cap" in t.labels
    wanted = ["clapping", "drink water", "eat meal", "brush teeth", 'say "stop"',
              "put on a hat, cap"]
    r = load_embeddings(FIXTURE, wanted)
    assert list(r.labels) == wanted
    np.testing.assert_array_equal(r.embeddings[0], t.embeddings[t.index("clapping")])


def test_missing_label_is_named():
    with pytest.raises(ParseError, match="jump up"):
        load_embeddings(FIXTURE, ["drink water", "jump up"])


@pytest.mark.parametrize("body,line,needle", [
    ("label,d0,d1\na,1,2\nb,1\n", 3, "ragged"),
    ("label,d0\na,1\na,2\n", 3, "duplicate"),
    ("label,d0\na,xyz\n", 2, "non-numeric"),
    ("name,d0\na,1\n", 1, "header"),
])
def test_parse_errors_carry_line(tmp_path, body, line, needle):
    with pytest.raises(ParseError, match=needle) as info:
        load_embeddings(write(tmp_path, body))
    assert info.value.line == line


def test_round_trip_is_value_identical(tmp_path):
    t = load_embeddings(FIXTURE)
    save_embeddings(t, tmp_path / "a.csv")
    back = load_embeddings(tmp_path / "a.csv")
    assert back.labels == t.labels
    assert np.array_equal(back.embeddings, t.embeddings)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_random_float32(tmp_path_factory, seed):
    t = LabelEmbeddingTable(["x", "y,z", 'w"'], np.random.default_rng(seed).standard_normal((3, 7)) * 10)
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    save_embeddings(t, p)
    once = load_embeddings(p)
    np.testing.assert_array_equal(once.embeddings, t.embeddings.astype(np.float32))
    save_embeddings(once, p)
    assert np.array_equal(load_embeddings(p).embeddings, once.embeddings)


def test_random_embeddings_seeded():
    labels = [f"l{i}" for i in range(5)]
    a, b, c = (random_embeddings(labels, 8, s) for s in (1, 1, 2))
    assert np.array_equal(a.embeddings, b.embeddings)
    assert not np.array_equal(a.embeddings, c.embeddings)
    assert a.source == "random(1)" and a.normalized
    np.testing.assert_allclose(np.linalg.norm(a.embeddings, axis=1), 1.0, atol=1e-12)


def test_random_embeddings_mean_cosine_near_zero():
    labels = [f"l{i}" for i in range(60)]
    means = []
    for seed in range(20):
        e = random_embeddings(labels, 700, seed).embeddings
        g = e @ e.T
        means.append(g[~np.eye(60, dtype=bool)].mean())
    assert abs(np.mean(means)) < 0.05


def test_normalized_flag_is_truthful():
    t = load_embeddings(FIXTURE)
    assert not np.allclose(np.linalg.norm(t.embeddings, axis=1), 1.0)
    n = t.normalize()
    assert n.normalized
    np.testing.assert_allclose(np.linalg.norm(n.embeddings, axis=1), 1.0, atol=1e-12)


def test_distance_basics():
    e = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    d = pairwise_distances(e, "cosine")
    assert d[0, 1] == 0.0 and d[0, 2] == pytest.approx(1.0, abs=1e-15)
    assert pairwise_distances(e, "euclidean")[0, 1] == 0.0
    with pytest.raises(DegenerateInputError):
        pairwise_distances(np.array([[0.0, 0.0], [1.0, 0.0]]), "cosine")


@pytest.mark.parametrize("seed", range(3))
def test_distances_match_double_loop(seed):
    e = np.random.default_rng(seed).standard_normal((5, 4))
    cos = np.zeros((5, 5))
    euc = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            if i != j:
                cos[i, j] = 1 - e[i] @ e[j] / (np.linalg.norm(e[i]) * np.linalg.norm(e[j]))
                euc[i, j] = np.sqrt(((e[i] - e[j]) ** 2).sum())
    np.testing.assert_allclose(pairwise_distances(e, "cosine"), cos, atol=1e-12)
    np.testing.assert_allclose(pairwise_distances(e, "euclidean"), euc, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_euclidean_triangle_inequality(seed):
    e = np.random.default_rng(seed).standard_normal((6, 3))
    d = pairwise_distances(e, "euclidean")
    # d[i,k] <= d[i,j] + d[j,k] for all i, j, k
    for i in range(6):
        for j in range(6):
            for k in range(6):
                assert d[i, k] <= d[i, j] + d[j, k] + 1e-12
