import json

import numpy as np
import pytest

from gaussembed.encoder import embed, init_xavier
from gaussembed.energy import GaussianEmbedding
from gaussembed.graph import build_hop_index, generate_sbm, split_edges
from gaussembed.metrics import auc, score_link_pairs
from gaussembed.ranking import enumerate_triplets, full_loss
from gaussembed.trainer import (
    AdamState,
    TrainConfig,
    TrainingTrace,
    adam_step,
    record_variance_trace,
    train,
)


def small_params(seed=0):
    return init_xavier(3, (4,), 2, seed=seed)


class TestAdam:
    def test_zero_gradient(self):
        p = small_params()
        before = [a.copy() for a in p.arrays()]
        zeros = [np.zeros_like(a) for a in p.arrays()]
        adam_step(p, zeros, AdamState.zeros_like(p))
        for a, b in zip(p.arrays(), before):
            np.testing.assert_array_equal(a, b)
        state = AdamState.zeros_like(p)
        for m, v in zip(state.m, state.v):
            m[...], v[...] = 1.0, 1.0
        adam_step(p, zeros, state)
        for m, v in zip(state.m, state.v):
            np.testing.assert_allclose(m, 0.9)
            np.testing.assert_allclose(v, 0.999)

    def test_first_step_is_sign_times_lr(self):
        p = small_params()
        before = [a.copy() for a in p.arrays()]
        rng = np.random.default_rng(0)
        grads = [rng.normal(size=a.shape) for a in p.arrays()]
        adam_step(p, grads, AdamState.zeros_like(p), lr=1e-3)
        for a, b, g in zip(p.arrays(), before, grads):
            np.testing.assert_allclose(b - a, 1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_matches_scalar_reference(self):
        p = small_params()
        x0 = p.arrays()[0][0, 0]
        state = AdamState.zeros_like(p)
        m = v = 0.0
        x = x0
        for t, g in enumerate([0.5, -1.0, 2.0, 0.1], start=1):
            grads = [np.zeros_like(a) for a in p.arrays()]
            grads[0][0, 0] = g
            adam_step(p, grads, state, lr=0.01)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            x -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            assert p.arrays()[0][0, 0] == pytest.approx(x, rel=1e-14)
        assert state.step == 4

    def test_shape_mismatch(self):
        p = small_params()
        with pytest.raises(ValueError):
            adam_step(p, [np.zeros(1)] * len(p.arrays()), AdamState.zeros_like(p))


class TestVarianceTrace:
    def test_rows(self):
        ones = GaussianEmbedding(np.zeros((3, 2)), np.ones((3, 2)))
        mixed = GaussianEmbedding(np.zeros((2, 2)), np.array([[1.0, 3.0], [3.0, 1.0]]))
        tr = record_variance_trace([ones, mixed])
        assert tr.var_mean == [[1.0, 1.0], [2.0, 2.0]]

    def test_monotone_series(self):
        embs = [GaussianEmbedding(np.zeros((2, 1)), np.full((2, 1), 1.0 + t)) for t in range(5)]
        series = np.array(record_variance_trace(embs).var_mean)[:, 0]
        assert np.all(np.diff(series) > 0)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(sampler="uniform")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(K=0)
    assert TrainConfig(hidden_sizes=[8]).to_dict()["hidden_sizes"] == [8]


def test_zero_epochs_returns_initial(triangle_pendant):
    init = init_xavier(4, (5,), 2, seed=3)
    cfg = TrainConfig(max_epochs=0, half_dim=2, hidden_sizes=(5,), one_hot=True, early_stopping=False)
    params, trace, _ = train(triangle_pendant, cfg, init=init)
    for a, b in zip(params.arrays(), init.arrays()):
        np.testing.assert_array_equal(a, b)
    assert trace.epochs == 0


def test_full_mode_descends_and_records_exact_loss(triangle_pendant):
    init = init_xavier(4, (8,), 2, seed=1)
    cfg = TrainConfig(max_epochs=200, half_dim=2, hidden_sizes=(8,), sampler="full", one_hot=True,
                      early_stopping=False, learning_rate=1e-2)
    params, trace, emb = train(triangle_pendant, cfg, init=init)
    attrs = triangle_pendant.feature_matrix(True)
    trip = enumerate_triplets(build_hop_index(triangle_pendant, 2))
    start = full_loss(embed(init, attrs), trip)
    end = full_loss(emb, trip)
    assert trace.loss[0] == pytest.approx(start, rel=1e-12)
    assert end < start
    assert trace.triplets_seen[-1] == 200 * 6


def test_full_mode_loss_equals_oracle_each_epoch(triangle_pendant):
    # replaying epoch by epoch: the trace loss at epoch e is the oracle at the params entering epoch e
    attrs = triangle_pendant.feature_matrix(True)
    trip = enumerate_triplets(build_hop_index(triangle_pendant, 2))
    base = dict(half_dim=2, hidden_sizes=(8,), sampler="full", one_hot=True, early_stopping=False, learning_rate=1e-2)
    _, trace, _ = train(triangle_pendant, TrainConfig(max_epochs=10, **base), init=init_xavier(4, (8,), 2, seed=1))
    for e in range(10):
        p, _, _ = train(triangle_pendant, TrainConfig(max_epochs=e, **base), init=init_xavier(4, (8,), 2, seed=1))
        assert trace.loss[e] == pytest.approx(full_loss(embed(p, attrs), trip), rel=1e-12)


@pytest.fixture(scope="module")
def sbm_run():
    g = generate_sbm(90, 3, 0.2, 0.02, 8, 0.1, seed=0)
    split = split_edges(g, 0.1, 0.1, seed=0)
    cfg = TrainConfig(half_dim=4, hidden_sizes=(16,), max_epochs=300, patience=3, seed=1, learning_rate=1e-2)
    return g, split, cfg, train(g, cfg, split)


def test_best_snapshot_returned(sbm_run):
    g, split, cfg, (params, trace, emb) = sbm_run
    val = auc(score_link_pairs(embed(params, g.attributes), split.val_edges, split.val_non_edges, False))
    assert val == trace.best_val_auc == max(a for a in trace.val_auc if a is not None)
    np.testing.assert_array_equal(emb.mu, embed(params, g.attributes).mu)
    assert len(trace.loss) == len(trace.val_auc) == len(trace.var_mean) == len(trace.triplets_seen)
    assert all(np.isfinite(trace.loss))
    if trace.stopped_epoch is not None:
        assert trace.stopped_epoch - trace.best_epoch == cfg.patience * cfg.eval_every


def test_deterministic(sbm_run):
    g, split, cfg, (params, trace, _) = sbm_run
    p2, t2, _ = train(g, cfg, split)
    assert t2.to_dict() == trace.to_dict()
    for a, b in zip(params.arrays(), p2.arrays()):
        np.testing.assert_array_equal(a, b)


def test_trace_json_round_trip(sbm_run):
    trace = sbm_run[3][1]
    assert TrainingTrace.from_dict(json.loads(json.dumps(trace.to_dict()))) == trace


def test_overfit_epochs_extend_trace(sbm_run):
    g, split, cfg, (_, trace, _) = sbm_run
    if trace.stopped_epoch is None:
        pytest.skip("run did not stop early")
    cfg2 = TrainConfig(**{**cfg.to_dict(), "overfit_epochs": 100})
    p2, t2, _ = train(g, cfg2, split)
    assert t2.best_epoch == trace.best_epoch
    assert t2.epochs >= trace.best_epoch + 100
    assert t2.loss[: trace.epochs] == trace.loss


@pytest.mark.parametrize("sampler", ["naive", "node_anchored"])
def test_samplers_run(sampler):
    g = generate_sbm(40, 2, 0.3, 0.05, 4, 0.1, seed=2)
    cfg = TrainConfig(half_dim=2, hidden_sizes=(8,), max_epochs=5, sampler=sampler, early_stopping=False, anchor_batch=16)
    _, trace, _ = train(g, cfg)
    assert trace.epochs == 5 and all(np.isfinite(trace.loss))
    assert trace.triplets_seen == sorted(trace.triplets_seen)


def test_no_validation_edges_error(triangle_pendant):
    split = split_edges(triangle_pendant, 0.0, 0.25, seed=0)
    with pytest.raises(ValueError, match="validation"):
        train(triangle_pendant, TrainConfig(one_hot=True, max_epochs=1), split)


def test_verbose_progress(capsys, triangle_pendant):
    split = split_edges(triangle_pendant, 0.25, 0.0, seed=0)
    train(triangle_pendant, TrainConfig(one_hot=True, max_epochs=5, half_dim=2, hidden_sizes=(4,), verbose=True), split)
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 5
    assert all(len(l.split("\t")) == 3 for l in lines)
    assert lines[-1].split("\t")[2] != ""
