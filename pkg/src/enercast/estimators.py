"""Scikit-learn style estimator wrappers around the training stack.

`CNNForecaster` is a standard fit/predict regressor: X holds demand
windows as (n_samples, window) — or (n_samples, window, width) /
(n_samples, window, width, channels) for the wider architectures — and y
holds the next-step value(s). `FederatedCNNForecaster` takes an extra
`groups` vector in fit() assigning each window to an aggregation node.

Both estimators keep their constructor arguments verbatim (so get_params /
set_params / clone behave), validate inputs on entry, and expose fitted
state through trailing-underscore attributes.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .arch import (
    FrameworkId,
    NetworkSpec,
    build_all_joint_net,
    build_local_net,
    build_multi_channel_net,
    build_per_vector_net,
    build_single_net,
)
from .fed import FedNode, federated_train
from .network import Network
from .optim import TrainConfig, predict_batched, train
from .tensor import Tensor4
from .windows import WindowSet


def check_window_array(X) -> np.ndarray:
    """Validate and canonicalise window input to (n_samples, h, w, c)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None, None]
    elif X.ndim == 3:
        X = X[:, :, :, None]
    elif X.ndim != 4:
        raise ValueError(
            f"X must have 2 to 4 dimensions (n_samples, window[, width[, channels]]); "
            f"got shape {X.shape}")
    if X.shape[0] < 1:
        raise ValueError("X has no samples")
    if min(X.shape[1:]) < 1:
        raise ValueError(f"X has an empty window axis: shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    return X


def check_target_array(y, n_samples: int) -> tuple[np.ndarray, int]:
    """Validate targets; returns ((n_samples, k) array, original ndim)."""
    y = np.asarray(y, dtype=np.float64)
    ndim = y.ndim
    if ndim == 1:
        y = y.reshape(-1, 1)
    elif ndim != 2:
        raise ValueError(f"y must be 1-D or 2-D, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ValueError(f"X has {n_samples} samples but y has {y.shape[0]}")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")
    return y, ndim


def windows_to_tensor(X: np.ndarray) -> Tensor4:
    """(n, h, w, c) sample-major array -> batch-last rank-4 tensor."""
    return Tensor4(np.ascontiguousarray(X.transpose(1, 2, 3, 0)))


_BUILDERS = {
    FrameworkId.SINGLE: "single",
    FrameworkId.MULTI_CHANNEL: "multi_channel",
    FrameworkId.SINGLE_VALIDATED: "single",
    FrameworkId.ALL_JOINT: "all_joint",
    FrameworkId.PER_VECTOR: "per_vector",
    FrameworkId.FED_LOCAL: "local",
}


def spec_for_architecture(architecture, window_shape: tuple[int, int, int],
                          n_outputs: int, filters: int | None = None,
                          kernel_height: int | None = None,
                          blocks: int | None = None) -> NetworkSpec:
    """Resolve an architecture name (or pass through a NetworkSpec) against
    the observed window shape (h, w, c) and output count."""
    if isinstance(architecture, NetworkSpec):
        return architecture
    name = architecture.value if isinstance(architecture, FrameworkId) else str(architecture)
    try:
        name = _BUILDERS[FrameworkId(name)]
    except ValueError:
        pass  # already a builder name, or unknown (rejected below)
    h, w, c = window_shape
    if name == "single":
        if (w, c) != (1, 1):
            raise ValueError(
                f"'single' expects one series (width=channels=1), got width={w}, channels={c}")
        return build_single_net(filters=filters or 136, kernel_h=kernel_height or 146,
                                blocks=blocks or 3, window=h)
    if name == "multi_channel":
        if c != 1:
            raise ValueError(f"'multi_channel' carries inputs on the width axis; channels={c}")
        return build_multi_channel_net(channel_count=w, filters=filters or 30,
                                       kernel_h=kernel_height or 100, window=h)
    if name == "all_joint":
        if n_outputs % w:
            raise ValueError(
                f"'all_joint' outputs must be a multiple of the building count "
                f"{w}, got {n_outputs}")
        vectors = n_outputs // w
        if vectors > c:
            raise ValueError(
                f"'all_joint' needs {vectors} demand channels for {n_outputs} "
                f"outputs but the windows carry only {c}")
        return build_all_joint_net(num_buildings=w, num_vectors=vectors,
                                   filters=filters or 136,
                                   kernel_h=kernel_height or 146, window=h,
                                   extra_channels=c - vectors)
    if name == "per_vector":
        if n_outputs != w:
            raise ValueError(
                f"'per_vector' predicts one value per building (width {w}), "
                f"got {n_outputs} outputs")
        return build_per_vector_net(num_buildings=w, filters=filters or 136,
                                    kernel_h=kernel_height or 146, window=h,
                                    extra_channels=c - 1)
    if name == "local":
        if (w, c) != (1, 1):
            raise ValueError(
                f"'local' expects one series (width=channels=1), got width={w}, channels={c}")
        return build_local_net(filters=filters or 136, kernel_h=kernel_height or 146,
                               window=h)
    raise ValueError(f"unknown architecture {architecture!r}")


class CNNForecaster(RegressorMixin, BaseEstimator):
    """Convolutional short-term demand forecaster with a fit/predict API.

    Parameters mirror the training configuration; `architecture` is one of
    'single', 'multi_channel', 'all_joint', 'per_vector', 'local' (widths
    and output counts are inferred from the data) or an explicit
    NetworkSpec. With validation_fraction > 0 the last fraction of the
    (time-ordered) rows is held out and the best-validation snapshot
    becomes the fitted model.
    """

    def __init__(self, architecture="single", *, filters=None, kernel_height=None,
                 blocks=None, max_epochs=400, batch_size=700, learning_rate=0.01,
                 beta1=0.9, beta2=0.999, epsilon=1e-8,
                 gradient_threshold=math.inf, validation_fraction=0.0,
                 log_every=50, random_state=0):
        self.architecture = architecture
        self.filters = filters
        self.kernel_height = kernel_height
        self.blocks = blocks
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.gradient_threshold = gradient_threshold
        self.validation_fraction = validation_fraction
        self.log_every = log_every
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(max_epochs=self.max_epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, beta1=self.beta1,
                           beta2=self.beta2, epsilon=self.epsilon,
                           gradient_threshold=self.gradient_threshold,
                           shuffle_seed=self.random_state, log_every=self.log_every)

    def fit(self, X, y):
        X = check_window_array(X)
        y, y_ndim = check_target_array(y, X.shape[0])
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}")
        spec = spec_for_architecture(self.architecture, X.shape[1:], y.shape[1],
                                     self.filters, self.kernel_height, self.blocks)
        if spec.output_units != y.shape[1]:
            raise ValueError(
                f"architecture produces {spec.output_units} outputs but y has "
                f"{y.shape[1]} columns")
        net = Network(spec, seed=self.random_state)
        tensor = windows_to_tensor(X)
        n = X.shape[0]
        n_val = round(n * self.validation_fraction) if self.validation_fraction else 0
        val_data = None
        if n_val:
            idx = np.arange(n)
            train_ws = WindowSet(Tensor4(tensor.data[:, :, :, :n - n_val]),
                                 y[:n - n_val], idx[:n - n_val])
            val_data = WindowSet(Tensor4(tensor.data[:, :, :, n - n_val:]),
                                 y[n - n_val:], idx[n - n_val:])
        else:
            train_ws = WindowSet(tensor, y, np.arange(n))
        net, history = train(net, train_ws, self._train_config(), val_data)
        self.network_ = history.best_network if history.best_network is not None else net
        self.history_ = history
        self.window_shape_ = X.shape[1:]
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        self.n_outputs_ = y.shape[1]
        self.y_ndim_ = y_ndim
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_window_array(X)
        if X.shape[1:] != self.window_shape_:
            raise ValueError(
                f"X windows have shape {X.shape[1:]}, fitted on {self.window_shape_}")
        pred = predict_batched(self.network_, windows_to_tensor(X))
        return pred.ravel() if self.y_ndim_ == 1 else pred


class FederatedCNNForecaster(RegressorMixin, BaseEstimator):
    """Federated variant: fit(X, y, groups) trains one model per group of
    windows with periodic averaging, and predicts with the global model."""

    def __init__(self, architecture="local", *, filters=None, kernel_height=None,
                 blocks=None, max_epochs=400, batch_size=700, learning_rate=0.01,
                 beta1=0.9, beta2=0.999, epsilon=1e-8,
                 gradient_threshold=math.inf, sync_period=1, log_every=50,
                 random_state=0):
        self.architecture = architecture
        self.filters = filters
        self.kernel_height = kernel_height
        self.blocks = blocks
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.gradient_threshold = gradient_threshold
        self.sync_period = sync_period
        self.log_every = log_every
        self.random_state = random_state

    def fit(self, X, y, groups=None):
        X = check_window_array(X)
        y, y_ndim = check_target_array(y, X.shape[0])
        n = X.shape[0]
        if groups is None:
            groups = np.zeros(n, dtype=np.int64)
        groups = np.asarray(groups)
        if groups.shape != (n,):
            raise ValueError(f"groups must have shape ({n},), got {groups.shape}")
        spec = spec_for_architecture(self.architecture, X.shape[1:], y.shape[1],
                                     self.filters, self.kernel_height, self.blocks)
        tensor = windows_to_tensor(X)
        nodes = []
        for node_id in np.unique(groups):
            mask = groups == node_id
            idx = np.flatnonzero(mask)
            ws = WindowSet(Tensor4(np.ascontiguousarray(tensor.data[:, :, :, idx])),
                           y[idx], idx)
            nodes.append(FedNode(node_id=int(node_id), buildings=(), train=ws))
        cfg = TrainConfig(max_epochs=self.max_epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, beta1=self.beta1,
                          beta2=self.beta2, epsilon=self.epsilon,
                          gradient_threshold=self.gradient_threshold,
                          shuffle_seed=self.random_state, log_every=self.log_every)
        result = federated_train(spec, nodes, cfg, sync_period=self.sync_period,
                                 seed=self.random_state)
        self.network_ = result.global_net
        self.rounds_ = result.rounds
        self.node_ids_ = result.node_ids
        self.excluded_node_ids_ = result.excluded_node_ids
        self.window_shape_ = X.shape[1:]
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        self.n_outputs_ = y.shape[1]
        self.y_ndim_ = y_ndim
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_window_array(X)
        if X.shape[1:] != self.window_shape_:
            raise ValueError(
                f"X windows have shape {X.shape[1:]}, fitted on {self.window_shape_}")
        pred = predict_batched(self.network_, windows_to_tensor(X))
        return pred.ravel() if self.y_ndim_ == 1 else pred


__all__ = [
    "CNNForecaster",
    "FederatedCNNForecaster",
    "check_target_array",
    "check_window_array",
    "spec_for_architecture",
    "windows_to_tensor",
]
