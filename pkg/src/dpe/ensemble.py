"""Jointly trained ensembles of structurally identical networks.

The joint objective on a batch is the sum of the members' cross-entropy
losses plus ``beta`` times the cross-member KL penalty; with beta = 0 the
members decouple exactly into independently trained networks. All members
consume one shared batch stream, so the batch order depends only on the
training seed, never on the member count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import layers, nn, priors, regularizer, seeding
from .errors import ConfigError


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    beta: float | None = None  # None keeps the ensemble's beta
    weight_decay: float = 0.0  # plain L2 on dense/conv weights
    # Max L2 norm of one member's per-step gradient; None disables. The
    # KL penalty gradient is stiff (1/variance) when member values nearly
    # coincide, and a clip keeps those transients from derailing SGD.
    grad_clip: float | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be > 0, got {self.grad_clip}")


@dataclass
class EpochReport:
    epoch: int
    sum_ce: float  # member cross-entropies summed, averaged over batches
    penalty: float  # KL penalty at epoch end (measured even when beta = 0)
    weighted_penalty: float
    train_accuracy: float
    val_accuracy: float  # NaN when no validation data was given


class Ensemble:
    """E networks with one architecture, independent parameters and a
    shared prior map."""

    def __init__(self, specs, input_shape, n_members: int, beta: float = 0.0, seed: int = 0):
        if n_members < 1:
            raise ConfigError(f"ensemble needs >= 1 member, got {n_members}")
        if beta < 0:
            raise ConfigError(f"beta must be >= 0, got {beta}")
        if beta > 0 and n_members < 2:
            raise ConfigError("beta > 0 requires >= 2 members (cross-member variance)")
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.beta = float(beta)
        self.seed = seed
        self.members = [
            nn.init_network(self.specs, self.input_shape, seeding.member_seed(seed, e))
            for e in range(n_members)
        ]
        self.prior_map = priors.assign_priors(self.specs, self.input_shape)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def n_classes(self) -> int:
        return self.members[0].output_shape[0]

    def parameter_groups(self) -> list[regularizer.ParameterGroup]:
        """Stack every parameter block across members, in canonical order
        (layer index ascending, parameter names per layer kind)."""
        groups = []
        for i, spec in enumerate(self.specs):
            for name in layers.PARAM_NAMES[type(spec)]:
                if name not in self.members[0].params[i]:
                    continue  # bias disabled for this layer
                gid = priors.group_id(i, name)
                values = np.stack(
                    [m.params[i][name].ravel() for m in self.members], axis=0
                )
                groups.append(
                    regularizer.ParameterGroup(values, self.prior_map[gid], name=gid)
                )
        return groups

    def penalty(self) -> float:
        """Current KL penalty over all parameter groups."""
        return regularizer.total_penalty(self.parameter_groups())


def joint_loss(model: Ensemble, batch, labels):
    """Joint objective and its per-member gradients on one batch.

    Returns ``(loss, grads)`` where loss is the summed member
    cross-entropies plus ``beta`` times the KL penalty, and ``grads[e]``
    has the same block structure as member e's parameters.
    """
    ce, penalty, grads = _joint_loss_parts(model, batch, labels)
    return ce + model.beta * penalty, grads


def _joint_loss_parts(model, batch, labels):
    total_ce = 0.0
    grads = []
    for member in model.members:
        logits, cache = nn.forward(member, batch, train_mode=True)
        total_ce += nn.cross_entropy(logits, labels)
        grads.append(nn.backward(member, cache, nn.cross_entropy_grad(logits, labels)))
    penalty = 0.0
    if model.beta > 0.0:
        groups = model.parameter_groups()
        penalty = regularizer.total_penalty(groups)
        pgrads = regularizer.penalty_gradient(groups)
        for group, pg in zip(groups, pgrads):
            i, name = group.name.split(".")
            i = int(i)
            shape = model.members[0].params[i][name].shape
            for e in range(model.n_members):
                grads[e][i][name] += model.beta * pg[e].reshape(shape)
    return total_ce, penalty, grads


def train(model: Ensemble, X, y, config: TrainConfig, X_val=None, y_val=None):
    """Train the ensemble in place; returns one EpochReport per epoch.

    Deterministic given ``config.seed``: the batch order stream is derived
    from the seed alone (tag ``seeding.BATCH_ORDER``), one shuffled
    permutation per epoch, shared by all members.
    """
    X = np.asarray(X, dtype=nn.DTYPE)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ConfigError("training data is empty")
    if config.beta is not None:
        if config.beta > 0 and model.n_members < 2:
            raise ConfigError("beta > 0 requires >= 2 members")
        model.beta = float(config.beta)
    order_rng = np.random.default_rng(seeding.derive_seed(config.seed, seeding.BATCH_ORDER))
    optimizers = [nn.SGD(config.lr, config.momentum) for _ in model.members]
    decayed = _decayed_param_names(model.specs) if config.weight_decay > 0 else []
    reports = []
    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(X))
        ce_sum = 0.0
        n_batches = 0
        for start in range(0, len(X), config.batch_size):
            idx = perm[start : start + config.batch_size]
            ce, _, grads = _joint_loss_parts(model, X[idx], y[idx])
            ce_sum += ce
            n_batches += 1
            for e, (member, opt) in enumerate(zip(model.members, optimizers)):
                for i, name in decayed:
                    grads[e][i][name] += config.weight_decay * member.params[i][name]
                if config.grad_clip is not None:
                    _clip_gradient(grads[e], config.grad_clip)
                opt.step(member, grads[e])
        penalty = model.penalty() if model.n_members >= 2 else float("nan")
        reports.append(
            EpochReport(
                epoch=epoch,
                sum_ce=ce_sum / n_batches,
                penalty=penalty,
                weighted_penalty=model.beta * penalty,
                train_accuracy=nn.accuracy(predict_mean(model, X), y),
                val_accuracy=(
                    nn.accuracy(predict_mean(model, X_val), y_val)
                    if X_val is not None
                    else float("nan")
                ),
            )
        )
    return reports


def _clip_gradient(member_grads, max_norm):
    """Scale one member's gradient blocks so their global L2 norm is at
    most ``max_norm``."""
    total = math.fsum(float(np.sum(g * g)) for blocks in member_grads for g in blocks.values())
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for blocks in member_grads:
            for name in blocks:
                blocks[name] = blocks[name] * factor


def _decayed_param_names(specs):
    """(layer_index, name) of blocks subject to weight decay: dense/conv W."""
    return [
        (i, "W")
        for i, spec in enumerate(specs)
        if isinstance(spec, (layers.Dense, layers.Conv2D))
    ]


def predict_mean(model: Ensemble, batch) -> np.ndarray:
    """Ensemble-averaged class probabilities (mean of member softmaxes),
    in evaluation mode."""
    probs = None
    for member in model.members:
        logits, _ = nn.forward(member, batch, train_mode=False)
        p = nn.softmax(logits)
        probs = p if probs is None else probs + p
    return probs / model.n_members


def nll(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log probability of the true class, from probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    p = np.asarray(probs, dtype=nn.DTYPE)[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(p, 1e-300))))
