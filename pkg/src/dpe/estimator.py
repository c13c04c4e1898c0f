"""Scikit-learn compatible classifier wrapping the jointly trained ensemble.

The estimator follows the standard fit/predict/predict_proba contract with
``get_params``/``set_params`` from BaseEstimator, so it clones, pipelines
and cross-validates like any other sklearn classifier while training the
KL-regularized ensemble underneath.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import layers
from .ensemble import Ensemble, TrainConfig, predict_mean, train
from .errors import ConfigError


def mlp_specs(n_features: int, hidden_layers, n_classes: int, batch_norm: bool = False):
    """Dense/ReLU (optionally batch-normalized) stack ending in logits."""
    specs = []
    n_prev = n_features
    for width in hidden_layers:
        specs.append(layers.Dense(n_prev, width))
        if batch_norm:
            specs.append(layers.BatchNorm(width))
        specs.append(layers.ReLU())
        n_prev = width
    specs.append(layers.Dense(n_prev, n_classes))
    return specs


class DeepProbabilisticEnsembleClassifier(BaseEstimator, ClassifierMixin):
    """Ensemble classifier trained jointly under a cross-member KL penalty.

    Parameters
    ----------
    hidden_layers : tuple of int
        Widths of the hidden dense layers (ignored when ``architecture``
        is given).
    n_members : int
        Ensemble size E.
    beta : float or "auto"
        Weight of the KL penalty. ``"auto"`` uses beta_scale /
        n_training_samples, resolved at fit time; 0 disables the penalty
        (members train independently).
    beta_scale : float
        Multiplier applied to the "auto" beta; ignored for explicit betas.
    weight_decay : float
        Plain L2 coefficient on dense/conv weights (the classic-ensemble
        baseline regularizer).
    learning_rate, momentum, batch_size, epochs : optimizer settings.
    grad_clip : float or None
        Per-member, per-step gradient norm clip. The default keeps the
        stiff KL-penalty gradients from destabilizing small ensembles;
        None disables clipping.
    batch_norm : bool
        Insert a BatchNorm layer after every hidden dense layer.
    architecture : list of layer specs, optional
        Explicit architecture overriding the MLP template. Requires
        ``input_shape`` when the first layer is not Dense.
    input_shape : tuple, optional
        Per-sample shape the (flat) feature rows are reshaped to.
    random_state : int
        Seed for member initialization and batch order.

    Attributes
    ----------
    classes_ : ndarray of the original class labels.
    ensemble_ : the trained low-level ensemble.
    history_ : list of per-epoch training reports.
    """

    def __init__(
        self,
        hidden_layers=(32, 32),
        n_members=8,
        beta="auto",
        beta_scale=1.0,
        weight_decay=0.0,
        learning_rate=0.05,
        momentum=0.9,
        batch_size=32,
        epochs=30,
        grad_clip=10.0,
        batch_norm=False,
        architecture=None,
        input_shape=None,
        random_state=0,
    ):
        self.hidden_layers = hidden_layers
        self.n_members = n_members
        self.beta = beta
        self.beta_scale = beta_scale
        self.weight_decay = weight_decay
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.grad_clip = grad_clip
        self.batch_norm = batch_norm
        self.architecture = architecture
        self.input_shape = input_shape
        self.random_state = random_state

    def _resolved_beta(self, n_samples: int) -> float:
        if self.beta == "auto":
            return self.beta_scale / n_samples
        beta = float(self.beta)
        if beta < 0:
            raise ConfigError(f"beta must be >= 0 or 'auto', got {self.beta}")
        return beta

    def fit(self, X, y, validation_data=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigError("need at least 2 classes to fit a classifier")
        self.n_features_in_ = X.shape[1]

        input_shape = tuple(self.input_shape) if self.input_shape else (X.shape[1],)
        if int(np.prod(input_shape)) != X.shape[1]:
            raise ConfigError(
                f"input_shape {input_shape} does not match {X.shape[1]} features"
            )
        if self.architecture is not None:
            specs = list(self.architecture)
        else:
            specs = mlp_specs(
                int(np.prod(input_shape)),
                self.hidden_layers,
                len(self.classes_),
                batch_norm=self.batch_norm,
            )

        beta = self._resolved_beta(len(X))
        self.ensemble_ = Ensemble(
            specs,
            input_shape,
            n_members=self.n_members,
            beta=beta,
            seed=self.random_state,
        )
        config = TrainConfig(
            lr=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
            weight_decay=self.weight_decay,
            grad_clip=self.grad_clip,
        )
        X_val = y_val = None
        if validation_data is not None:
            X_val = check_array(validation_data[0], dtype=np.float64)
            y_val = np.searchsorted(self.classes_, validation_data[1])
        self.history_ = train(
            self.ensemble_, X.reshape((len(X),) + input_shape), y_enc, config, X_val, y_val
        )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}"
            )
        return predict_mean(self.ensemble_, X.reshape((len(X),) + self.ensemble_.input_shape))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
