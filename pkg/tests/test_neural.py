import math

import numpy as np
import pytest

from prunex.features import BipartiteSubgraph
from prunex.neural import (
    Adam,
    COGClassifier,
    CogNetwork,
    EnsembleMLPClassifier,
    GraphStore,
    TrainConfig,
    TrainingDivergedError,
    focal_grad,
    focal_loss,
    load_checkpoint,
    multihead_train,
    predict_score,
    routed_loss_grad,
    save_checkpoint,
    sigmoid,
    step_decay,
)
from prunex.neural.checkpoint import CheckpointError

from conftest import separable_graphs

SMALL = dict(embed_dim=8, trunk=(16, 16))


def rand_graph(rng, c=6, m=None):
    m = int(rng.integers(0, 5)) if m is None else m
    return BipartiteSubgraph(rng.normal(size=c), rng.normal(size=(m, c)))


def batch_of(graphs, c):
    return GraphStore(graphs, c).take(np.arange(len(graphs)))


def embed_one(net, g):
    return net.encoder.embed(batch_of([g], g.T.shape[0]))[0]


# focal loss ----------------------------------------------------------------

def test_focal_reduces_to_half_ce():
    assert math.isclose(float(focal_loss(0.5, 1, 0.5, 0.0)), 0.5 * math.log(2), rel_tol=1e-12)


def test_focal_confident_correct_vanishes():
    for g in (0.5, 1.0, 2.0):
        assert float(focal_loss(1 - 1e-9, 1, 0.7, g)) < 1e-6
        assert float(focal_loss(1e-9, 0, 0.7, g)) < 1e-6


def test_focal_matches_direct_formula():
    p, a, g = 0.3, 0.95, 2.0
    direct = -a * (1 - p) ** g * math.log(p)
    assert math.isclose(float(focal_loss(p, 1, a, g)), direct, rel_tol=1e-12)
    direct_neg = -(1 - a) * p ** g * math.log(1 - p)
    assert math.isclose(float(focal_loss(p, 0, a, g)), direct_neg, rel_tol=1e-12)


def test_focal_nonnegative_and_clamped():
    p = np.array([0.0, 1e-12, 0.5, 1.0])
    for y in (0, 1):
        v = focal_loss(p, np.full(4, y), 0.25, 2.0)
        assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_focal_grad_finite_differences(rng):
    z = rng.normal(scale=3.0, size=200)
    y = rng.integers(0, 2, size=200)
    h = 1e-6
    for a, g in ((0.25, 2.0), (0.9, 0.0), (0.5, 1.5)):
        num = (focal_loss(sigmoid(z + h), y, a, g) - focal_loss(sigmoid(z - h), y, a, g)) / (2 * h)
        ana = focal_grad(sigmoid(z), y, a, g)
        np.testing.assert_allclose(ana, num, rtol=1e-4, atol=1e-9)


def test_sigmoid_is_stable():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]


def test_step_decay():
    assert step_decay(1e-4, 0) == 1e-4
    assert step_decay(1e-4, 99) == 1e-4
    assert math.isclose(step_decay(1e-4, 250), 1e-4 * 0.96 ** 2)


# GCNN encoder ---------------------------------------------------------------

def test_zero_weights_give_zero_embedding(rng):
    net = CogNetwork(2, 6, embed_dim=5, trunk=(7,))
    for p in net.encoder.params:
        p.fill(0.0)
    for _ in range(5):
        assert np.all(embed_one(net, rand_graph(rng)) == 0.0)


def test_permutation_and_duplication_invariance(rng):
    net = CogNetwork(1, 6, embed_dim=8, trunk=(8,), seed=3)
    for _ in range(20):
        g = rand_graph(rng, m=int(rng.integers(1, 9)))
        base = embed_one(net, g)
        perm = BipartiteSubgraph(g.T, g.C[rng.permutation(g.m)])
        dup = BipartiteSubgraph(g.T, np.vstack([g.C, g.C]))
        np.testing.assert_allclose(embed_one(net, perm), base, rtol=0, atol=1e-9)
        np.testing.assert_allclose(embed_one(net, dup), base, rtol=0, atol=1e-9)


def test_empty_window_uses_zero_aggregate(rng):
    net = CogNetwork(1, 6, embed_dim=5, trunk=(), seed=1)
    g = rand_graph(rng, m=0)
    h = embed_one(net, g)
    expect, _ = net.encoder.f_T.forward(np.hstack([g.T, np.zeros(5)])[None, :])
    np.testing.assert_array_equal(h, expect[0])


def test_batched_matches_single(rng):
    net = CogNetwork(3, 6, embed_dim=8, trunk=(8,), seed=2)
    graphs = [rand_graph(rng) for _ in range(12)]
    together = net.encoder.embed(batch_of(graphs, 6))
    for i, g in enumerate(graphs):
        np.testing.assert_allclose(together[i], embed_one(net, g), rtol=0, atol=1e-12)


def test_feature_width_mismatch(rng):
    net = CogNetwork(1, 6, embed_dim=4, trunk=())
    with pytest.raises(ValueError):
        net.forward(batch_of([rand_graph(rng, c=7)], 7))


# gradients ----------------------------------------------------------------

def _loss(net, batch, y, dom, alpha=0.7, gamma=2.0):
    logits, cache = net.forward(batch)
    return routed_loss_grad(logits, y, dom, net.n_heads, alpha, gamma), cache


def test_network_gradient_finite_differences(rng):
    net = CogNetwork(2, 6, embed_dim=6, trunk=(8, 8), seed=4)
    batch = batch_of([rand_graph(rng, m=m) for m in (0, 2, 4)], 6)
    y, dom = np.array([1.0, 0.0, 1.0]), np.array([0, 1, 1])
    net.zero_grad()
    (loss, g), cache = _loss(net, batch, y, dom)
    net.backward(cache, g)
    named = net.named_params()
    # 1e-6 loses ~4 digits to cancellation on gradients near 1e-8
    h = 1e-5
    checked = 0
    worst = 0.0
    for _ in range(50):
        _, p, grad = named[int(rng.integers(len(named)))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        old = p[idx]
        p[idx] = old + h
        up = _loss(net, batch, y, dom)[0][0]
        p[idx] = old - h
        down = _loss(net, batch, y, dom)[0][0]
        p[idx] = old
        num = (up - down) / (2 * h)
        ana = grad[idx]
        scale = max(abs(num), abs(ana))
        if scale < 1e-8:
            continue
        worst = max(worst, abs(num - ana) / scale)
        checked += 1
    assert checked >= 30
    assert worst < 1e-4


def test_single_head_objective_is_pooled_focal_risk(rng):
    net = CogNetwork(1, 6, embed_dim=4, trunk=(4,))
    batch = batch_of([rand_graph(rng) for _ in range(9)], 6)
    y = rng.integers(0, 2, size=9).astype(float)
    logits, _ = net.forward(batch)
    loss, _ = routed_loss_grad(logits, y, np.zeros(9, int), 1, 0.3, 2.0)
    assert math.isclose(loss, float(focal_loss(sigmoid(logits[:, 0]), y, 0.3, 2.0).mean()), rel_tol=1e-12)


def test_routed_loss_only_touches_own_head(rng):
    logits = rng.normal(size=(6, 3))
    dom = np.array([0, 0, 1, 2, 2, 2])
    _, g = routed_loss_grad(logits, rng.integers(0, 2, 6).astype(float), dom, 3, 0.5, 2.0)
    mask = np.zeros_like(g, bool)
    mask[np.arange(6), dom] = True
    assert np.all(g[~mask] == 0.0)


# prediction ---------------------------------------------------------------

def test_predict_single_head_equals_head(rng):
    net = CogNetwork(1, 6, embed_dim=4, trunk=(4,))
    b = batch_of([rand_graph(rng) for _ in range(5)], 6)
    np.testing.assert_array_equal(net.predict_score(b), net.head_probs(b)[:, 0])


def test_predict_mean_of_forced_heads(rng):
    net = CogNetwork(3, 6, embed_dim=4, trunk=(4,))
    net.heads.W.fill(0.0)
    net.heads.b[:] = [math.log(p / (1 - p)) for p in (0.2, 0.4, 0.6)]
    s = net.predict_score(batch_of([rand_graph(rng) for _ in range(4)], 6))
    np.testing.assert_allclose(s, 0.4, atol=1e-12)


def test_predict_two_paths_agree(rng):
    net = CogNetwork(4, 6, embed_dim=6, trunk=(8,), seed=9)
    graphs = [rand_graph(rng) for _ in range(10)]
    batched = predict_score(net, graphs)
    looped = []
    for g in graphs:
        b = batch_of([g], 6)
        h = net.encoder.embed(b)
        z = net.trunk.forward(h)[0]
        heads = [sigmoid(z @ net.heads.W[:, k] + net.heads.b[k])[0] for k in range(4)]
        looped.append(sum(heads) / 4)
    np.testing.assert_allclose(batched, looped, rtol=0, atol=1e-7)
    assert np.all((batched >= 0) & (batched <= 1))


# training -----------------------------------------------------------------

def _toy(seed=0, n=200):
    rng = np.random.default_rng(seed)
    g0, y0 = separable_graphs(rng, n, shift=0.0)
    g1, y1 = separable_graphs(rng, n, shift=0.3)
    return g0 + g1, np.concatenate([y0, y1]), np.repeat([0, 1], n)


def test_separable_two_domain_toy_trains():
    graphs, y, dom = _toy()
    clf = COGClassifier(**SMALL, lr=3e-3, batch_size=128, epochs=300, random_state=0)
    clf.fit(graphs, y, domains=dom)
    assert clf.network_.n_heads == 2
    assert min(clf.loss_curve_) < 0.05
    assert (clf.predict(graphs) == y).mean() > 0.95


def test_training_is_deterministic():
    graphs, y, dom = _toy(1, 60)
    a = COGClassifier(**SMALL, lr=1e-3, batch_size=32, epochs=5).fit(graphs, y, domains=dom)
    b = COGClassifier(**SMALL, lr=1e-3, batch_size=32, epochs=5).fit(graphs, y, domains=dom)
    assert a.loss_curve_ == b.loss_curve_
    np.testing.assert_array_equal(a.predict_score(graphs), b.predict_score(graphs))


def test_nan_loss_raises():
    rng = np.random.default_rng(0)
    graphs = [rand_graph(rng) for _ in range(6)]
    graphs[2].T[0] = np.nan
    net = CogNetwork(1, 6, embed_dim=4, trunk=(4,))
    cfg = TrainConfig(epochs=2, batch_size=6, alpha=0.5)
    with pytest.raises(TrainingDivergedError, match="epoch 0"):
        multihead_train(net, GraphStore(graphs, 6), np.array([0, 1] * 3), np.zeros(6, int), cfg)


def test_head_count_must_cover_domains(rng):
    net = CogNetwork(1, 6, embed_dim=4, trunk=())
    with pytest.raises(ValueError):
        multihead_train(net, GraphStore([rand_graph(rng)] * 2, 6), np.array([0, 1]), np.array([0, 1]), TrainConfig(epochs=1))


def test_adam_rejects_duplicate_registration():
    p, g = np.zeros(3), np.zeros(3)
    with pytest.raises(ValueError):
        Adam([p, p], [g, g])


def test_network_registers_each_parameter_once():
    net = CogNetwork(3, 6, embed_dim=4, trunk=(5, 5))
    ids = [id(p) for p in net.params]
    assert len(ids) == len(set(ids))
    Adam(net.params, net.grads)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(alpha=1.0)


# checkpoints --------------------------------------------------------------

def test_cog_checkpoint_round_trip(tmp_path):
    graphs, y, dom = _toy(2, 40)
    clf = COGClassifier(**SMALL, lr=1e-3, batch_size=32, epochs=3).fit(graphs, y, domains=dom)
    path = tmp_path / "model.json"
    save_checkpoint(clf, path)
    back = load_checkpoint(path)
    np.testing.assert_array_equal(back.predict_score(graphs), clf.predict_score(graphs))
    assert back.get_params() == clf.get_params()
    save_checkpoint(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    bad.write_text('{"schema": "other/9"}')
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


# EnsembleMLP -------------------------------------------------------------

def _flat(seed=0, n=120):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 20))
    return X, (X[:, 3] > 0.5).astype(int)


ENS = dict(hidden=(16,), lr=3e-3, batch_size=64, epochs=15)


def test_ensemble_single_member_is_plain_mlp():
    X, y = _flat()
    one = EnsembleMLPClassifier(n_estimators=1, member_seeds=[5], **ENS).fit(X, y)
    three = EnsembleMLPClassifier(n_estimators=3, member_seeds=[5, 5, 5], **ENS).fit(X, y)
    np.testing.assert_allclose(three.predict_score(X), one.predict_score(X), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(one.predict_score(X), one.member_probs(X)[:, 0])


def test_ensemble_variance_shrinks_with_size():
    X, y = _flat()
    Xe = np.random.default_rng(99).random((200, 20))

    def spread(E):
        preds = [EnsembleMLPClassifier(n_estimators=E, random_state=s, **ENS).fit(X, y).predict_score(Xe) for s in range(6)]
        return float(np.var(preds, axis=0).mean())

    assert spread(4) < spread(1)


def test_ensemble_checkpoint_round_trip(tmp_path):
    X, y = _flat(3)
    m = EnsembleMLPClassifier(n_estimators=2, **ENS).fit(X, y)
    save_checkpoint(m, tmp_path / "e.json")
    back = load_checkpoint(tmp_path / "e.json")
    np.testing.assert_array_equal(back.predict_score(X), m.predict_score(X))
    with pytest.raises(ValueError):
        back.predict_score(X[:, :5])
