"""Optimizer math, batch scheduling, and the training loop mechanics."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from enercast.arch import build_single_net
from enercast.errors import BatchLargerThanDatasetError, NonFiniteLossError
from enercast.network import Network
from enercast.optim import (
    HISTORY_COLUMNS,
    AdamState,
    TrainConfig,
    TrainLoop,
    adam_step,
    capture_input_mean,
    clip_gradients,
    evaluate_loss,
    minibatch_schedule,
    predict_batched,
    train,
)
from enercast.tensor import Tensor4


TINY = build_single_net(filters=3, kernel_h=5, blocks=2)


def toy_data(n=16, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(48, 1, 1, n))
    y = x.mean(axis=(0, 1, 2))
    return SimpleNamespace(inputs=Tensor4(x), targets=y.reshape(-1, 1))


# --- Adam ----------------------------------------------------------------


def test_adam_first_step_oracle():
    # With a constant gradient g the bias-corrected moments give exactly
    # m_hat = g, v_hat = g**2, so step 1 moves by lr*g/(|g| + eps).
    p = np.array([0.0])
    state = AdamState.for_params([p])
    adam_step([p], [np.array([2.0])], state)
    np.testing.assert_allclose(p, [-0.01 * 2.0 / (2.0 + 1e-8)], rtol=1e-15)
    assert state.t == 1


def test_adam_second_step_same_gradient_doubles_the_move():
    p = np.array([0.0])
    state = AdamState.for_params([p])
    adam_step([p], [np.array([2.0])], state)
    adam_step([p], [np.array([2.0])], state)
    np.testing.assert_allclose(p, [-2 * 0.01 * 2.0 / (2.0 + 1e-8)], rtol=1e-14)


def test_adam_epsilon_sits_outside_the_sqrt():
    # For a small gradient the two placements differ by ~40%: outside gives
    # lr*g/(|g|+eps); inside would give lr*g/sqrt(g^2+eps).
    p = np.array([0.0])
    adam_step([p], [np.array([1e-4])], AdamState.for_params([p]))
    outside = 0.01 * 1e-4 / (1e-4 + 1e-8)
    inside = 0.01 * 1e-4 / math.sqrt(1e-8 + 1e-8)
    np.testing.assert_allclose(p, [-outside], rtol=1e-12)
    assert abs(p[0] + inside) > 1e-4 * inside


def test_adam_updates_in_place_over_multiple_params():
    a, b = np.ones((2, 2)), np.zeros(3)
    state = AdamState.for_params([a, b], learning_rate=0.5)
    ga, gb = np.full((2, 2), 1.0), np.array([0.0, 1.0, -1.0])
    adam_step([a, b], [ga, gb], state)
    np.testing.assert_allclose(a, 1.0 - 0.5 * 1.0 / (1.0 + 1e-8), rtol=1e-14)
    assert b[0] == 0.0 and b[1] < 0 < b[2]


# --- gradient clipping ------------------------------------------------------


def test_clip_scales_by_global_norm():
    g = [np.array([3.0]), np.array([4.0])]      # global L2 norm 5
    clip_gradients(g, 2.5)
    np.testing.assert_allclose(g[0], [1.5], rtol=1e-15)
    np.testing.assert_allclose(g[1], [2.0], rtol=1e-15)


def test_clip_below_threshold_is_identity():
    g = [np.array([3.0]), np.array([4.0])]
    clip_gradients(g, 5.001)
    np.testing.assert_array_equal(g[0], [3.0])
    np.testing.assert_array_equal(g[1], [4.0])


def test_clip_infinite_threshold_is_identity():
    g = [np.array([1e300])]
    clip_gradients(g, math.inf)
    np.testing.assert_array_equal(g[0], [1e300])


def test_clip_rejects_nonpositive_threshold():
    with pytest.raises(ValueError):
        clip_gradients([np.array([1.0])], 0.0)


# --- batch scheduling ---------------------------------------------------------


def test_schedule_drops_incomplete_tail():
    batches = minibatch_schedule(2928, 700, seed=0, epoch=1)
    assert len(batches) == 4
    assert all(len(b) == 700 for b in batches)
    flat = np.concatenate(batches)
    assert len(set(flat.tolist())) == 2800          # no index twice


def test_schedule_exact_division():
    batches = minibatch_schedule(10, 5, seed=0, epoch=1)
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


def test_schedule_is_seeded_per_epoch():
    a = minibatch_schedule(50, 10, seed=3, epoch=2)
    b = minibatch_schedule(50, 10, seed=3, epoch=2)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    c = minibatch_schedule(50, 10, seed=3, epoch=3)
    assert any((x != y).any() for x, y in zip(a, c))
    d = minibatch_schedule(50, 10, seed=4, epoch=2)
    assert any((x != y).any() for x, y in zip(a, d))


def test_schedule_rejects_oversized_batch():
    with pytest.raises(BatchLargerThanDatasetError):
        minibatch_schedule(10, 11, seed=0, epoch=1)
    with pytest.raises(ValueError):
        minibatch_schedule(10, 0, seed=0, epoch=1)


# --- train loop ------------------------------------------------------------------


def test_loop_rejects_oversized_batch():
    data = toy_data(n=8)
    with pytest.raises(BatchLargerThanDatasetError):
        TrainLoop(Network(TINY, 0), data.inputs, data.targets,
                  TrainConfig(batch_size=9))


def test_loop_counts_iterations_and_refuses_overrun():
    data = toy_data(n=10)
    cfg = TrainConfig(max_epochs=2, batch_size=5)
    loop = TrainLoop(Network(TINY, 0), data.inputs, data.targets, cfg)
    assert loop.iters_per_epoch == 2
    assert loop.total_iterations == 4
    for _ in range(4):
        loop.step()
    assert loop.finished() and loop.epoch == 2
    with pytest.raises(RuntimeError):
        loop.step()


def test_nonfinite_loss_rolls_back_to_last_finite_parameters():
    data = toy_data(n=8)
    bad_targets = np.full((8, 1), np.inf)
    net = Network(TINY, seed=5)
    init = net.flat_weights().copy()
    loop = TrainLoop(net, data.inputs, bad_targets, TrainConfig(batch_size=4))
    with pytest.raises(NonFiniteLossError) as info:
        loop.step()
    assert info.value.epoch == 1 and info.value.iteration == 1
    np.testing.assert_array_equal(net.flat_weights(), init)


def test_exploding_rate_rolls_back_and_names_the_iteration():
    data = toy_data(n=8)
    net = Network(TINY, seed=5)
    init = net.flat_weights().copy()
    cfg = TrainConfig(batch_size=4, learning_rate=1e200)
    loop = TrainLoop(net, data.inputs, data.targets, cfg)
    with np.errstate(over="ignore", invalid="ignore"):
        loop.step()                       # finite loss, then a huge update
        with pytest.raises(NonFiniteLossError) as info:
            for _ in range(8):
                loop.step()
    assert info.value.iteration >= 2
    # Rollback restores the weights that produced the last finite loss.
    np.testing.assert_array_equal(net.flat_weights(), init)


# --- train() wrapper ---------------------------------------------------------------


def test_train_is_bitwise_reproducible():
    data = toy_data(n=12, seed=3)
    cfg = TrainConfig(max_epochs=3, batch_size=4, shuffle_seed=7, log_every=1)

    def run():
        net = Network(TINY, seed=2)
        _, history = train(net, data, cfg)
        return net.flat_state(), history

    state_a, hist_a = run()
    state_b, hist_b = run()
    np.testing.assert_array_equal(state_a, state_b)
    assert len(hist_a.records) == 3
    for ra, rb in zip(hist_a.records, hist_b.records):
        assert (ra.epoch, ra.iteration, ra.minibatch_loss) == \
               (rb.epoch, rb.iteration, rb.minibatch_loss)


def test_train_reduces_loss_on_a_learnable_toy():
    data = toy_data(n=32, seed=1)
    net = Network(TINY, seed=0)
    cfg = TrainConfig(max_epochs=30, batch_size=8, log_every=1)
    train(net, data, cfg)
    final = evaluate_loss(net, data.inputs, data.targets)
    base = float((data.targets ** 2).mean())    # predict-zero baseline
    assert final < base / 2


def test_train_history_cadence_and_csv(tmp_path):
    data = toy_data(n=12)
    net = Network(TINY, seed=0)
    _, history = train(net, data, TrainConfig(max_epochs=7, batch_size=4,
                                              log_every=3))
    # Rows at epoch 1, every 3rd epoch, and the final epoch.
    assert [r.epoch for r in history.records] == [1, 3, 6, 7]
    assert [r.iteration for r in history.records] == [3, 9, 18, 21]
    path = tmp_path / "history.csv"
    history.to_csv(path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(HISTORY_COLUMNS)


def test_train_tracks_best_validation_snapshot():
    data = toy_data(n=32, seed=1)
    val = toy_data(n=16, seed=2)
    net = Network(TINY, seed=0)
    _, history = train(net, data, TrainConfig(max_epochs=10, batch_size=8,
                                              log_every=1), val_data=val)
    logged = [r.validation_loss for r in history.records]
    assert all(v is not None for v in logged)
    assert history.best_validation_loss == min(logged)
    assert history.best_epoch == [r.epoch for r in history.records][
        logged.index(min(logged))]
    best = history.best_network
    assert best is not None and best is not net
    np.testing.assert_allclose(
        evaluate_loss(best, val.inputs, val.targets),
        history.best_validation_loss, rtol=1e-12)


def test_capture_input_mean_and_batched_predict():
    data = toy_data(n=20, seed=4)
    net = Network(TINY, seed=1)
    capture_input_mean(net, data.inputs)
    np.testing.assert_allclose(
        net.input_mean, data.inputs.data.mean(axis=3, keepdims=True), rtol=1e-15)
    whole = net.predict(data.inputs)
    chunked = predict_batched(net, data.inputs, chunk=7)
    # Different chunkings may differ in the last ulp (BLAS re-association);
    # the determinism contract is: the same chunking is bit-identical.
    np.testing.assert_allclose(chunked, whole, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(predict_batched(net, data.inputs, chunk=7),
                                  chunked)
