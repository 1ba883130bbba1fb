import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gazeaffect import net
from gazeaffect.dataset import ClassBin
from gazeaffect.errors import ValidationError
from gazeaffect.features import apply_scalers, fit_scalers
from gazeaffect.net import (FEATURE_SETS, AdamW, Batch, Checkpoint, FusionNet, ModelConfig,
                            TrainConfig, backward, branch_parameter_count, dense_backward,
                            dense_forward, fused_forward, grid_search, init_params,
                            loss_weighted_ce, lstm_backward, lstm_forward, parameter_count,
                            predict, predict_batch, softmax, train)

from conftest import make_record, separable_records
from oracles import numeric_gradient


def rel_err(a, n, floor=1e-6):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def central_diff(f, x, eps=1e-3):
    """Fourth-order central stencil; truncation and roundoff both near 1e-12 here."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        vals = []
        for k in (2, 1, -1, -2):
            x[i] = old + k * eps
            vals.append(f())
        x[i] = old
        g[i] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * eps)
    return g


# -- primitives ----------------------------------------------------------------

def test_lstm_zero_fixed_point():
    h, _ = lstm_forward(np.zeros((15, 12)), np.zeros((12, 16)), np.zeros((4, 16)), np.zeros(16))
    assert (h == 0).all()


def test_lstm_hidden_bounded(rng):
    Wx, Wh, b = rng.normal(0, 3, (12, 32)), rng.normal(0, 3, (8, 32)), rng.normal(0, 3, 32)
    h, _ = lstm_forward(rng.normal(0, 5, (4, 15, 12)), Wx, Wh, b)
    assert (np.abs(h) < 1).all()


def test_lstm_input_gradient(rng):
    seq = rng.normal(size=(15, 12))
    Wx, Wh, b = rng.normal(0, 0.5, (12, 20)), rng.normal(0, 0.5, (5, 20)), rng.normal(0, 0.5, 20)
    r = rng.normal(size=5)
    h, cache = lstm_forward(seq, Wx, Wh, b)
    dseq, dWx, dWh, db = lstm_backward(r, cache, Wx, Wh)

    def f():
        return float(lstm_forward(seq, Wx, Wh, b)[0] @ r)

    assert rel_err(dseq, central_diff(f, seq)) < 1e-6
    assert rel_err(dWh, central_diff(f, Wh)) < 1e-6


def test_dense_identity_and_constant():
    x = np.array([[1.0, -2.0, 3.0]])
    assert np.array_equal(dense_forward(x, np.eye(3), np.zeros(3), "identity")[0], x)
    b = np.array([-1.0, 0.5])
    out, _ = dense_forward(x, np.zeros((3, 2)), b, "relu")
    assert out.tolist() == [[0.0, 0.5]]


def test_dense_gradient(rng):
    x, W, b = rng.normal(size=(4, 6)), rng.normal(size=(6, 5)), rng.normal(size=5)
    r = rng.normal(size=(4, 5))
    out, cache = dense_forward(x, W, b)
    dx, dW, db = dense_backward(r, cache, W)

    def f():
        return float((dense_forward(x, W, b)[0] * r).sum())

    assert rel_err(dx, central_diff(f, x)) < 1e-6
    assert rel_err(dW, central_diff(f, W)) < 1e-6
    assert rel_err(db, central_diff(f, b)) < 1e-6


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-100, 100))
def test_softmax_properties(z, c):
    z = np.array(z)
    p = softmax(z)
    assert (p >= 0).all() and abs(p.sum() - 1) < 1e-12
    assert np.abs(softmax(z + c) - p).max() < 1e-9


def test_loss_examples():
    assert loss_weighted_ce([[0, 1, 0]], [1], [1, 1, 1]) == 0.0
    assert loss_weighted_ce([[1 / math.e, 0.5, 0.5 - 1 / math.e]], [0], [1, 1, 1]) == pytest.approx(1.0)
    assert loss_weighted_ce([[0.5, 0.25, 0.25]], [0], [2, 1, 1]) == pytest.approx(2 * math.log(2))
    assert loss_weighted_ce([[0.0, 1.0, 0.0]], [0], [1, 1, 1]) == pytest.approx(-math.log(1e-12))


# -- fused model ------------------------------------------------------------------

def random_model(cfg, rng):
    params = init_params(cfg, rng)
    for k in params:
        if k.endswith("_b"):
            params[k] = params[k] + rng.normal(0, 0.1, params[k].shape)
    return FusionNet(cfg, params)


def test_zero_logits_uniform(rng):
    cfg = ModelConfig()
    m = random_model(cfg, rng)
    m.params["out_W"][:] = 0
    m.params["out_b"][:] = 0
    assert fused_forward(make_record(rng), m).tolist() == pytest.approx([1 / 3] * 3, abs=1e-15)


def test_eval_deterministic_and_degenerate_train(rng):
    m = random_model(ModelConfig(dropout_rate=0.0), rng)
    rec = make_record(rng)
    a = fused_forward(rec, m)
    assert np.array_equal(a, fused_forward(rec, m))
    t = fused_forward(rec, m, mode="train", rng=np.random.default_rng(1), noise_sigma=0.0)
    assert np.array_equal(a, t)


@pytest.mark.parametrize("fs", sorted(FEATURE_SETS))
def test_backward_matches_finite_differences(fs):
    rng = np.random.default_rng(5)
    cfg = ModelConfig.for_feature_set(fs, lstm_hidden=6, fusion_width=7, dropout_rate=0.25)
    m = random_model(cfg, rng)
    rec = make_record(rng, environment=rng.normal(size=2))
    draws = m.draw_stochastic(1, rng, 0.05)
    w = np.array([0.7, 1.3, 1.1])
    label = 2
    grads = backward(rec, label, m, w, draws=draws)
    num = numeric_gradient(m.params, vars(rec), label, w[label], {k: v[0] for k, v in draws.items()},
                           net._active_branches(cfg))
    for k in grads:
        assert rel_err(grads[k], num[k]) < 1e-4, k


def test_doubling_weight_doubles_gradient(rng):
    m = random_model(ModelConfig(), rng)
    rec = make_record(rng)
    g1 = backward(rec, 1, m, np.array([1.0, 1.0, 1.0]))
    g2 = backward(rec, 1, m, np.array([2.0, 2.0, 2.0]))
    for k in g1:
        assert np.array_equal(g2[k], 2 * g1[k])


def test_gradient_vanishes_at_single_example_optimum(rng):
    m = random_model(ModelConfig(dropout_rate=0.0), rng)
    batch = Batch.from_records([make_record(rng, label=1, environment=np.array([0.1, -0.2]))], "felt_arousal")
    opt = AdamW(m.params, 0.05, 0.0)
    for _ in range(3000):
        _, cache = m.forward(batch)
        g = m.backward(cache, batch.labels, np.ones(3))
        opt.step(m.params, g)
    assert math.sqrt(sum(float((v ** 2).sum()) for v in g.values())) < 1e-6


@pytest.mark.parametrize("branch", ["personality", "stimulus", "environment"])
def test_ablation_drops_exact_branch_count(branch):
    full = ModelConfig()
    cut = replace(full, **{f"include_{branch}": False})
    assert parameter_count(full) - parameter_count(cut) == branch_parameter_count(full, branch)


def test_feature_set_validation():
    with pytest.raises(ValidationError):
        ModelConfig.for_feature_set("eye+vibes")
    with pytest.raises(ValidationError):
        TrainConfig(target_label="joy")
    with pytest.raises(ValidationError):
        ModelConfig(dropout_rate=1.0)


@pytest.mark.parametrize("seed", range(5))
def test_first_epoch_loss_non_increasing(seed):
    recs = separable_records(120, seed)
    sc = fit_scalers(recs)
    batch = Batch.from_records([apply_scalers(r, sc) for r in recs], "perceived_valence")
    cfg = ModelConfig(dropout_rate=0.0)
    m = FusionNet(cfg, init_params(cfg, np.random.default_rng(seed)))
    opt = AdamW(m.params, 1e-4, 0.0)
    w = np.ones(3)
    losses = [m.loss(batch, w)]
    order = np.random.default_rng(seed).permutation(len(batch))
    for start in range(0, len(batch), 32):
        mb = batch.subset(order[start:start + 32])
        _, cache = m.forward(mb)
        opt.step(m.params, m.backward(cache, mb.labels, w))
        losses.append(m.loss(batch, w))
    assert np.all(np.diff(losses) <= 0)


# -- training ------------------------------------------------------------------------

SMALL = ModelConfig(lstm_hidden=8, fusion_width=8)


def test_train_is_bitwise_deterministic():
    recs = separable_records(60)
    cfg = TrainConfig(max_epochs=5, seed=4)
    a = train(recs[:45], recs[45:], SMALL, cfg)
    b = train(recs[:45], recs[45:], SMALL, cfg)
    assert a.to_json() == b.to_json()
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_early_stop_never_returns_worse_epoch():
    recs = separable_records(90, seed=2)
    ck = train(recs[:60], recs[60:], SMALL, TrainConfig(max_epochs=40, patience=5, seed=1))
    best = max(h["val_macro_f1"] for h in ck.history)
    assert ck.history[ck.best_epoch - 1]["val_macro_f1"] == best
    pred, _ = predict_batch(ck, recs[60:])
    from gazeaffect.evaluation import confusion, macro_f1
    assert macro_f1(confusion([int(r.labels["perceived_valence"]) for r in recs[60:]], pred)) == best


def test_checkpoint_round_trip():
    recs = separable_records(30)
    ck = train(recs[:20], recs[20:], SMALL, TrainConfig(max_epochs=2))
    ck.meta = {"feature_set": "eye"}
    back = Checkpoint.from_json(ck.to_json())
    assert back.to_json() == ck.to_json() and back.sha256() == ck.sha256()
    assert all(np.array_equal(back.params[k], ck.params[k]) for k in ck.params)


def constant_output_checkpoint(probs):
    cfg = ModelConfig()
    params = init_params(cfg, np.random.default_rng(0))
    params["out_W"][:] = 0
    params["out_b"][:] = np.log(probs)
    recs = separable_records(6)
    return Checkpoint(params, cfg, TrainConfig(), fit_scalers(recs)), recs[0]


def test_predict_argmax_and_tie():
    ck, rec = constant_output_checkpoint([0.2, 0.5, 0.3])
    label, probs = predict(ck, rec)
    assert label == ClassBin.Medium and probs.tolist() == pytest.approx([0.2, 0.5, 0.3])
    ck, rec = constant_output_checkpoint([1 / 3] * 3)
    assert predict(ck, rec)[0] == ClassBin.Low


def test_predict_dimension_mismatch():
    ck, rec = constant_output_checkpoint([0.2, 0.5, 0.3])
    ck.scalers.seq_loc = ck.scalers.seq_loc[:10]
    with pytest.raises(ValidationError, match="expects 15x12"):
        predict(ck, rec)


def test_predict_recovers_separable_training_labels():
    recs = separable_records(90, seed=3)
    ck = train(recs, recs, SMALL, TrainConfig(max_epochs=60, seed=0))
    pred, _ = predict_batch(ck, recs)
    truth = np.array([int(r.labels["perceived_valence"]) for r in recs])
    assert (pred == truth).mean() >= 0.95


# -- grid search ---------------------------------------------------------------------

def test_singleton_grid():
    recs = separable_records(45)
    best, results, failures = grid_search(recs[:30], recs[30:], SMALL, TrainConfig(max_epochs=3),
                                          [3e-4], [0.2], [0.0])
    assert len(results) == 1 and not failures
    assert (best.learning_rate, best.dropout, best.weight_decay) == (3e-4, 0.2, 0.0)


def test_planted_learning_rate_wins():
    recs = separable_records(90, seed=1)
    best, results, _ = grid_search(recs[:60], recs[60:], SMALL, TrainConfig(max_epochs=15, patience=15),
                                   [1e-9, 1e-2, 1e-8], [0.0], [0.0])
    assert best.learning_rate == 1e-2
    assert best.macro_f1 > max(r.macro_f1 for r in results if r is not best)


def test_failed_cells_are_accounted(monkeypatch):
    real_train = net.train

    def flaky(train_set, val_set, mcfg, tcfg, scalers=None):
        if tcfg.learning_rate == 1e-3:
            raise net.TrainingDivergedError("planted failure")
        return real_train(train_set, val_set, mcfg, tcfg, scalers)

    monkeypatch.setattr(net, "train", flaky)
    recs = separable_records(45)
    _, results, failures = grid_search(recs[:30], recs[30:], SMALL, TrainConfig(max_epochs=2),
                                       [1e-3, 1e-4], [0.2, 0.3], [0.0])
    assert len(results) == 4 - 2 and len(failures) == 2


def test_empty_grid():
    recs = separable_records(30)
    with pytest.raises(ValidationError):
        grid_search(recs[:20], recs[20:], SMALL, TrainConfig(), [], [0.2], [0.0])


def test_default_learning_rates_cover_both_sets():
    assert set(net.SEARCH_LEARNING_RATES) <= set(net.DEFAULT_LEARNING_RATES)
    assert set(net.SELECTED_LEARNING_RATES) <= set(net.DEFAULT_LEARNING_RATES)
