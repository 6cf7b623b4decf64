"""Adam optimizer, gradient clipping, batch scheduling and the train loop.

Everything here is deterministic by construction: mini-batch order is drawn
from a generator seeded by (shuffle_seed, epoch), Adam carries explicit
state, and the only wall-clock that exists anywhere is the ElapsedSeconds
history column. Two runs with the same seeds, data and config produce
bit-identical parameters.

The resumable `TrainLoop` is the single iteration engine; `train` wraps it
with logging and validation, and the federated trainer drives one loop per
node so a one-node federation replays centralized training exactly.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BatchLargerThanDatasetError, NonFiniteLossError
from .network import Network, predictions
from .ops import mse_loss, mse_loss_grad
from .tensor import Tensor4


# --- optimizer ------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 0.01,
                   beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter arrays.

    theta <- theta − lr * m_hat / (sqrt(v_hat) + eps); note eps sits outside
    the square root.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    b1c = 1.0 - b1 ** state.t
    b2c = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + state.epsilon)
    return state


def clip_gradients(grads: list[np.ndarray], threshold: float) -> list[np.ndarray]:
    """Scale all gradients by threshold/norm when the global L2 norm exceeds
    the threshold; an infinite threshold is the identity."""
    if math.isinf(threshold):
        return grads
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    sq = sum(float((g * g).sum()) for g in grads)
    norm = math.sqrt(sq)
    if norm > threshold:
        scale = threshold / norm
        for g in grads:
            g *= scale
    return grads


def minibatch_schedule(n_samples: int, batch_size: int, seed: int,
                       epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the incomplete tail is dropped.

    The shuffle is seeded by (seed, epoch) so a given epoch's order is
    reproducible without replaying earlier epochs.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if batch_size > n_samples:
        raise BatchLargerThanDatasetError(
            f"batch_size {batch_size} exceeds dataset size {n_samples}")
    perm = np.random.default_rng([seed, epoch]).permutation(n_samples)
    count = n_samples // batch_size
    return [perm[i * batch_size:(i + 1) * batch_size] for i in range(count)]


# --- training -------------------------------------------------------------


@dataclass
class TrainConfig:
    max_epochs: int = 400
    batch_size: int = 700
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    gradient_threshold: float = math.inf
    shuffle_seed: int = 0
    log_every: int = 50  # epochs between history rows / validation passes


@dataclass
class HistoryRecord:
    epoch: int
    iteration: int
    elapsed_seconds: float
    minibatch_rmse: float
    validation_rmse: float | None
    minibatch_loss: float
    validation_loss: float | None


HISTORY_COLUMNS = ("Epoch", "Iteration", "ElapsedSeconds", "MinibatchRMSE",
                   "ValidationRMSE", "MinibatchLoss", "ValidationLoss")


@dataclass
class TrainHistory:
    """Logged training progress, plus the best-validation snapshot if any."""

    records: list[HistoryRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_validation_loss: float | None = None
    best_network: Network | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for r in self.records:
                w.writerow([
                    r.epoch, r.iteration, repr(r.elapsed_seconds),
                    repr(r.minibatch_rmse),
                    "" if r.validation_rmse is None else repr(r.validation_rmse),
                    repr(r.minibatch_loss),
                    "" if r.validation_loss is None else repr(r.validation_loss),
                ])


class TrainLoop:
    """Resumable mini-batch engine over one network and one training set.

    step() runs exactly one mini-batch iteration: forward, loss, backward,
    clip, Adam. A non-finite loss rolls the network back to the parameters
    of the last finite iteration and raises NonFiniteLossError.
    """

    def __init__(self, net: Network, inputs: Tensor4, targets: np.ndarray,
                 cfg: TrainConfig):
        n = inputs.batch
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets.reshape(-1, 1)
        if targets.shape[0] != n:
            raise ValueError(
                f"targets have {targets.shape[0]} rows, inputs have {n} samples")
        if cfg.batch_size > n:
            raise BatchLargerThanDatasetError(
                f"batch_size {cfg.batch_size} exceeds dataset size {n}")
        self.net = net
        self.inputs = inputs
        self.targets = targets
        self.cfg = cfg
        self.n = n
        self.iters_per_epoch = n // cfg.batch_size
        self.params = net.trainable_arrays()
        self.adam = AdamState.for_params(
            self.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
        self.epoch = 0          # epoch currently in progress (1-based once started)
        self.iteration = 0      # completed iterations
        self.queue: list[np.ndarray] = []
        self.last_loss = math.nan
        self._last_good = net.snapshot_state()

    @property
    def total_iterations(self) -> int:
        return self.cfg.max_epochs * self.iters_per_epoch

    def finished(self) -> bool:
        return self.iteration >= self.total_iterations

    def step(self) -> float:
        """One mini-batch update; returns the batch loss."""
        if self.finished():
            raise RuntimeError("training already finished")
        if not self.queue:
            self.epoch += 1
            self.queue = minibatch_schedule(
                self.n, self.cfg.batch_size, self.cfg.shuffle_seed, self.epoch)
        idx = self.queue.pop(0)
        batch = Tensor4(self.inputs.data[:, :, :, idx])
        out, cache = self.net.forward(batch, training=True)
        pred = predictions(out)
        target = self.targets[idx]
        loss = mse_loss(pred.ravel(), target.ravel())
        if not math.isfinite(loss):
            self.net.restore_state(self._last_good)
            raise NonFiniteLossError(self.epoch, self.iteration + 1)
        self._last_good = self.net.snapshot_state()
        grad = mse_loss_grad(pred.ravel(), target.ravel())
        grads = self.net.grad_list(self.net.backward(cache, grad))
        clip_gradients(grads, self.cfg.gradient_threshold)
        adam_step(self.params, grads, self.adam)
        self.iteration += 1
        self.last_loss = loss
        return loss


def capture_input_mean(net: Network, inputs: Tensor4) -> None:
    """Store the per-element mean of the training windows on the network."""
    if net.spec.input.normalization == "zerocenter":
        net.set_input_mean(inputs.data.mean(axis=3, keepdims=True))


def evaluate_loss(net: Network, inputs: Tensor4, targets: np.ndarray,
                  chunk: int = 512) -> float:
    """Inference-mode MSE over a whole set, predicted in chunks."""
    pred = predict_batched(net, inputs, chunk)
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t.reshape(-1, 1)
    return mse_loss(pred.ravel(), t.ravel())


def predict_batched(net: Network, inputs: Tensor4, chunk: int = 512) -> np.ndarray:
    """Inference over a large batch in fixed-size chunks -> (N, outputs)."""
    n = inputs.batch
    outs = []
    for start in range(0, n, chunk):
        piece = Tensor4(inputs.data[:, :, :, start:start + chunk])
        outs.append(net.predict(piece))
    return np.concatenate(outs, axis=0)


def train(net: Network, train_data, cfg: TrainConfig,
          val_data=None) -> tuple[Network, TrainHistory]:
    """Train a network in place; returns (net, history).

    `train_data` (and optional `val_data`) need `.inputs` (Tensor4) and
    `.targets` ((N, K) array) attributes. Before the first epoch the input
    mean is captured from the training windows for zero-centering. History
    rows land at epoch 1, every `log_every` epochs, and the final epoch;
    when validation data is present it is scored at the same cadence and
    the best-validation snapshot rides along on the history.
    """
    capture_input_mean(net, train_data.inputs)
    loop = TrainLoop(net, train_data.inputs, train_data.targets, cfg)
    history = TrainHistory()
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        for _ in range(loop.iters_per_epoch):
            loop.step()
        if epoch == 1 or epoch % cfg.log_every == 0 or epoch == cfg.max_epochs:
            val_loss = val_rmse = None
            if val_data is not None:
                val_loss = evaluate_loss(net, val_data.inputs, val_data.targets)
                val_rmse = math.sqrt(val_loss)
                if (history.best_validation_loss is None
                        or val_loss < history.best_validation_loss):
                    history.best_validation_loss = val_loss
                    history.best_epoch = epoch
                    history.best_network = net.clone()
            history.records.append(HistoryRecord(
                epoch=epoch,
                iteration=loop.iteration,
                elapsed_seconds=time.perf_counter() - t0,
                minibatch_rmse=math.sqrt(loop.last_loss),
                validation_rmse=val_rmse,
                minibatch_loss=loop.last_loss,
                validation_loss=val_loss,
            ))
    return net, history
