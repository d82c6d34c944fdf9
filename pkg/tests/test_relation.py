import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skelzsl.embeddings import LabelEmbeddingTable
from skelzsl.errors import ContaminationError
from skelzsl.relation import (PARAM_NAMES, Episode, RelationHyper, RelationHead, _forward,
                              episode_loss, init_relation, load_relation, predict_relation,
                              relation_score, sample_episode, save_relation, train_relation)

from conftest import features, unit_table
from gradcheck import check_dict, resample


def zero_head(d=4, f=3):
    head = init_relation(d, f, RelationHyper(), 0)
    return RelationHead({k: np.zeros_like(v) for k, v in head.params.items()})


def random_head(seed, d=4, f=3, std=0.7):
    head = init_relation(d, f, RelationHyper(init_std=std), seed)
    r = np.random.default_rng(seed + 1)
    for k in ("attr.b1", "attr.b2", "rel.b1", "rel.b2"):
        head.params[k] = r.normal(0, std, head.params[k].shape)
    return head


def oracle_score(p, e, v):
    hidden = np.maximum(e @ p["attr.w1"] + p["attr.b1"], 0)
    proj = hidden @ p["attr.w2"] + p["attr.b2"]
    pair = np.concatenate([proj, v])
    r = np.maximum(pair @ p["rel.w1"] + p["rel.b1"], 0)
    return 1 / (1 + np.exp(-(r @ p["rel.w2"][:, 0] + p["rel.b2"][0])))


def test_zero_weights_score_half():
    assert relation_score(zero_head(), np.ones(4), np.ones(3)) == 0.5


def test_layer_widths_default():
    head = init_relation(5, 7, RelationHyper(), 0)
    assert head.params["attr.w1"].shape == (5, 10)
    assert head.params["attr.w2"].shape == (10, 7)
    assert head.params["rel.w1"].shape == (14, 7)
    assert head.params["rel.w2"].shape == (7, 1)


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_layer_oracle(seed):
    head = random_head(seed)
    r = np.random.default_rng(seed)
    e, v = r.standard_normal((5, 4)), r.standard_normal((6, 3))
    got = head.scores(v, e)
    want = np.array([[oracle_score(head.params, e[c], v[b]) for c in range(5)] for b in range(6)])
    np.testing.assert_allclose(got, want, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(-5, 5))
def test_score_in_open_unit_interval(seed, scale):
    # float64 sigmoid rounds to exactly 1.0 once the logit passes ~37, so inputs stay moderate
    head = random_head(seed % 1000)
    r = np.random.default_rng(seed)
    s = relation_score(head, scale * r.standard_normal(4), r.standard_normal(3))
    assert 0.0 < s < 1.0


def _features(n_per=10, c=4, f=3, seed=0):
    y = np.repeat(np.arange(c), n_per)
    return features(np.random.default_rng(seed).standard_normal((len(y), f)), y)


def test_episode_targets_are_one_hot():
    feats = _features(c=2)
    ep = sample_episode(feats, unit_table(2, 4), RelationHyper(batch_size=1), 0)
    assert ep.targets.shape == (1, 2)
    assert ep.targets.sum() == 1 and ep.targets[0, ep.labels[0]] == 1


def test_episode_is_seeded():
    feats, table, hyper = _features(), unit_table(6, 4), RelationHyper(batch_size=8)
    a, b = sample_episode(feats, table, hyper, 5), sample_episode(feats, table, hyper, 5)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.features, b.features)
    assert a.candidates.tolist() == list(range(6))
    seen_only = sample_episode(feats, table, RelationHyper(candidate_set="seen_only"), 5, range(4))
    assert seen_only.candidates.tolist() == [0, 1, 2, 3]


def test_episode_sampling_is_uniform_over_classes():
    feats = _features(n_per=25)
    ep = sample_episode(feats, unit_table(4, 4), RelationHyper(batch_size=10000), 1)
    np.testing.assert_allclose(np.bincount(ep.labels, minlength=4) / 10000, 0.25, atol=0.02)


@pytest.mark.parametrize("c", [2, 5, 12])
def test_zero_net_loss_is_quarter(c):
    feats = _features(c=c, f=3)
    ep = sample_episode(feats, unit_table(c, 4), RelationHyper(batch_size=7), 0)
    loss, _ = episode_loss(zero_head(), ep)
    assert abs(loss - 0.25) <= 1e-9


def test_targets_equal_scores_gives_zero():
    head = random_head(3)
    feats = _features()
    table = unit_table(4, 4)
    ep = sample_episode(feats, table, RelationHyper(batch_size=5), 2)
    ep.targets = head.scores(ep.features, ep.embeddings)
    loss, grads = episode_loss(head, ep)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def _instance(seed):
    head = random_head(seed)
    r = np.random.default_rng(seed + 7)
    feats = features(r.standard_normal((12, 3)), r.integers(0, 5, 12))
    ep = sample_episode(feats, unit_table(5, 4, seed), RelationHyper(batch_size=4), seed)
    return head, ep


def _near_kink(inst, margin):
    head, ep = inst
    _, (a_pre, _, _, r_pre, _) = _forward(head.params, ep.features, ep.embeddings)
    return min(np.abs(a_pre).min(), np.abs(r_pre).min()) < margin


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    head, ep = resample(_instance, seed, 1e-3, _near_kink)
    err = check_dict(lambda p: episode_loss(p, ep), head.params, PARAM_NAMES)
    assert err < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_episode_loss_in_unit_interval(seed):
    head, ep = _instance(seed % 5000)
    assert 0.0 <= episode_loss(head, ep)[0] <= 1.0


def realizable(seed, c=4, n_per=15):
    table = unit_table(c, 6, seed)
    r = np.random.default_rng(seed)
    a = r.standard_normal((6, 5))
    y = np.repeat(np.arange(c), n_per)
    return features(table.embeddings[y] @ a + 0.01 * r.standard_normal((len(y), 5)), y), table


def test_training_fits_realizable_instance():
    feats, table = realizable(0)
    hyper = RelationHyper(episodes=3000, learning_rate=1e-3, lr_step_size=1500, init_std=0.3)
    hist = []
    train_relation(feats, table, hyper, 0, range(4), hist)
    assert np.mean(hist[-100:]) < 0.05


def test_zero_episodes_returns_initialization():
    feats, table = realizable(1)
    hyper = RelationHyper(episodes=0)
    head = train_relation(feats, table, hyper, 9, range(4))
    from skelzsl.numerics import make_rng
    ref = init_relation(6, 5, hyper, int(make_rng(9).integers(2**63)))
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(head.params[k], ref.params[k])


def test_training_is_deterministic():
    feats, table = realizable(2)
    hyper = RelationHyper(episodes=50, learning_rate=1e-3, init_std=0.3)
    a = train_relation(feats, table, hyper, 4, range(4))
    b = train_relation(feats, table, hyper, 4, range(4))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in PARAM_NAMES)


def test_unseen_features_abort():
    feats, table = realizable(0)
    with pytest.raises(ContaminationError):
        train_relation(feats, table, RelationHyper(episodes=1), 0, [0, 1])


def test_prediction_examples():
    head = random_head(0)
    table = LabelEmbeddingTable(["a", "b", "c"], np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [1.0, 0, 0, 0]]))
    v = np.ones(3)
    assert predict_relation(head, v, [1], table)[0][0] == 1
    ranked = predict_relation(head, v, [2, 1, 0], table)
    pos = [c for c, _ in ranked]
    assert dict(ranked)[0] == dict(ranked)[2]
    assert pos.index(0) < pos.index(2)


@pytest.mark.parametrize("seed", range(5))
def test_prediction_matches_oracle_and_is_pure(seed):
    head = random_head(seed)
    table = unit_table(6, 4, seed)
    v = np.random.default_rng(seed).standard_normal(3)
    cands = [5, 0, 2, 3]
    scores = {c: oracle_score(head.params, table.embeddings[c], v) for c in cands}
    oracle = sorted(cands, key=lambda c: (-scores[c], c))
    assert [c for c, _ in predict_relation(head, v, cands, table)] == oracle
    assert predict_relation(head, v, cands, table) == predict_relation(head, v, cands, table)


def test_checkpoint_round_trip(tmp_path):
    head = random_head(1)
    head.hyper = RelationHyper(episodes=7)
    save_relation(head, tmp_path / "r.zrel")
    back = load_relation(tmp_path / "r.zrel")
    assert back.hyper == head.hyper
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(back.params[k], head.params[k].astype(np.float32))
