import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skelzsl.devise import (DeviseHyper, DeviseProjection, batch_hinge_loss, full_loss,
                            hinge_rank_loss, init_projection, load_devise, predict_devise,
                            save_devise, train_devise, _negative_mask)
from skelzsl.embeddings import LabelEmbeddingTable
from skelzsl.errors import ContaminationError
from skelzsl.numerics import finite_difference_check, make_rng

from conftest import features, unit_table


def test_slack_hinges_give_zero():
    table = LabelEmbeddingTable(["a", "b"], np.eye(2))
    m = np.eye(2) * 5
    loss, grad = hinge_rank_loss(m, np.array([1.0, 0.0]), 0, table, DeviseHyper())
    assert loss == 0.0 and not grad.any()


def test_substitution_example():
    table = LabelEmbeddingTable(["a", "b"], np.eye(2))
    m = np.array([[0.0, 0.0], [1.0, 0.0]])  # M v = t1 for v = e0
    loss, _ = hinge_rank_loss(m, np.array([1.0, 0.0]), 0, table, DeviseHyper(margin=0.1))
    assert loss == pytest.approx(1.1, abs=1e-15)


def test_boundary_counts_as_inactive():
    table = LabelEmbeddingTable(["a", "b"], np.eye(2))
    m = np.array([[0.5, 0.0], [0.25, 0.0]])  # t0.Mv - t1.Mv == 0.25 == margin
    loss, grad = hinge_rank_loss(m, np.array([1.0, 0.0]), 0, table, DeviseHyper(margin=0.25))
    assert loss == 0.0 and not grad.any()


@pytest.mark.parametrize("c,d,f", [(2, 3, 4), (5, 6, 3), (12, 32, 32)])
def test_zero_matrix_closed_form(c, d, f):
    table = unit_table(c, d)
    v = np.random.default_rng(c).standard_normal(f)
    hyper = DeviseHyper(margin=0.1)
    loss, _ = hinge_rank_loss(np.zeros((d, f)), v, 1, table, hyper)
    assert abs(loss - 0.1 * (c - 1)) <= 1e-9
    seen = [0, 1]
    loss, _ = hinge_rank_loss(np.zeros((d, f)), v, 1, table,
                              DeviseHyper(margin=0.1, negative_set="seen_only"), seen)
    assert abs(loss - 0.1) <= 1e-9


def _instance(seed):
    r = np.random.default_rng(seed)
    return r.standard_normal((6, 4)) * 0.5, r.standard_normal(4), int(r.integers(5)), unit_table(5, 6, seed)


def _kink_free(seed):
    for k in range(100):
        m, v, y, table = _instance(seed * 100 + k)
        s = table.embeddings @ m @ v
        viol = 0.1 - s[y] + np.delete(s, y)
        if np.abs(viol).min() > 1e-3:
            return m, v, y, table
    raise RuntimeError


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    m, v, y, table = _kink_free(seed)
    hyper = DeviseHyper(margin=0.1)
    err = finite_difference_check(lambda p: hinge_rank_loss(p, v, y, table, hyper), m)
    assert err < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 2.0))
def test_loss_nonnegative_and_zero_iff_satisfied(seed, margin):
    m, v, y, table = _instance(seed)
    loss, _ = hinge_rank_loss(m, v, y, table, DeviseHyper(margin=margin))
    s = table.embeddings @ m @ v
    satisfied = all(s[y] - s[j] >= margin for j in range(5) if j != y)
    assert loss >= 0.0
    assert (loss == 0.0) == satisfied


def test_batch_loss_is_mean_of_sample_losses():
    table = unit_table(4, 5, 1)
    r = np.random.default_rng(0)
    m, x, y = r.standard_normal((5, 3)), r.standard_normal((7, 3)), r.integers(0, 4, 7)
    hyper = DeviseHyper()
    per = [hinge_rank_loss(m, x[i], int(y[i]), table, hyper) for i in range(7)]
    loss, grad = batch_hinge_loss(m, x, y, table.embeddings, 0.1, _negative_mask(y, 4, "all_classes", None))
    assert loss == pytest.approx(np.mean([p[0] for p in per]), abs=1e-12)
    np.testing.assert_allclose(grad, np.mean([p[1] for p in per], axis=0), atol=1e-12)


def realizable(seed, n_per=20, c=5, d=6, f=8):
    r = np.random.default_rng(seed)
    table = unit_table(c, d, seed)
    a = r.standard_normal((f, d))
    y = np.repeat(np.arange(c), n_per)
    x = table.embeddings[y] @ a.T + 0.01 * r.standard_normal((len(y), f))
    return features(x, y), table


def test_training_reduces_loss_on_realizable_instance():
    feats, table = realizable(0)
    hyper = DeviseHyper(learning_rate=0.01, batch_size=16, epochs=60)
    hist = []
    proj = train_devise(feats, table, hyper, 0, range(5), hist)
    initial = full_loss(init_projection(8, 6, hyper, 0), feats, table, hyper)
    assert hist[-1] < 0.05 * initial


def test_zero_epochs_returns_initialization():
    feats, table = realizable(1)
    hyper = DeviseHyper(epochs=0, init="gaussian")
    proj = train_devise(feats, table, hyper, 3, range(5))
    ref = init_projection(8, 6, hyper, int(make_rng(3).integers(2**63)))
    np.testing.assert_array_equal(proj.matrix, ref.matrix)


@pytest.mark.parametrize("seed", range(3))
def test_full_batch_small_lr_is_monotone(seed):
    feats, table = realizable(seed, n_per=4, c=3, d=4, f=5)
    hyper = DeviseHyper(learning_rate=1e-4, momentum=0.0, batch_size=len(feats), epochs=50)
    hist = []
    train_devise(feats, table, hyper, seed, range(3), hist)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_unseen_features_abort():
    feats, table = realizable(0)
    with pytest.raises(ContaminationError):
        train_devise(feats, table, DeviseHyper(epochs=1), 0, [0, 1, 2, 3])


def test_seen_only_equals_dropping_unseen_rows():
    feats, table = realizable(2)
    seen = [0, 1, 2]
    mask = np.isin(feats.label_indices, seen)
    sub = features(feats.features[mask], feats.label_indices[mask])
    hyper = DeviseHyper(epochs=5, negative_set="seen_only", learning_rate=0.01)
    a = train_devise(sub, table, hyper, 0, seen)
    small = LabelEmbeddingTable(table.labels[:3], table.embeddings[:3])
    b = train_devise(sub, small, DeviseHyper(epochs=5, learning_rate=0.01), 0, seen)
    np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)
    c = train_devise(sub, table, DeviseHyper(epochs=5, learning_rate=0.01), 0, seen)
    assert not np.allclose(a.matrix, c.matrix)


def test_prediction_examples():
    table = LabelEmbeddingTable(["a", "b", "c"], np.eye(3))
    proj = DeviseProjection(np.eye(3))
    assert predict_devise(proj, [0.0, 1.0, 0.0], [2], table)[0][0] == 2
    ranked = predict_devise(proj, [0.0, 1.0, 0.0], [0, 1, 2], table)
    assert ranked[0] == (1, 1.0)
    assert [c for c, _ in ranked] == [1, 0, 2]  # tie between 0 and 2 goes to the lower index


@pytest.mark.parametrize("seed", range(5))
def test_prediction_matches_dot_product_oracle(seed):
    r = np.random.default_rng(seed)
    table = unit_table(7, 4, seed)
    proj = DeviseProjection(r.standard_normal((4, 6)))
    v = r.standard_normal(6)
    cands = [6, 1, 3, 0]
    scores = {c: float(table.embeddings[c] @ proj.matrix @ v) for c in cands}
    oracle = sorted(cands, key=lambda c: (-scores[c], c))
    got = predict_devise(proj, v, cands, table)
    assert [c for c, _ in got] == oracle
    scaled = predict_devise(DeviseProjection(3.7 * proj.matrix), v, cands, table)
    assert [c for c, _ in scaled] == oracle


def test_checkpoint_round_trip(tmp_path):
    proj = DeviseProjection(np.random.default_rng(0).standard_normal((3, 4)), DeviseHyper(margin=0.2))
    save_devise(proj, tmp_path / "h.zdvs")
    back = load_devise(tmp_path / "h.zdvs")
    np.testing.assert_array_equal(back.matrix, proj.matrix.astype(np.float32))
    assert back.hyper == proj.hyper
