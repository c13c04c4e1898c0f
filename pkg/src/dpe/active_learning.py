"""Pool-based active learning with entropy acquisition.

The pool partitions the training split's positions into labeled and
unlabeled sets. Each budget step scores the unlabeled pool with the model
trained at the previous step, moves the top-scoring points into the
labeled set, retrains from a fresh initialization and evaluates on the
held-out validation split. Acquisition never sees validation data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from . import seeding
from .data import Dataset, Standardizer
from .ensemble import nll
from .errors import ConfigError


@dataclass
class LabelPool:
    """Disjoint, exhaustive partition of {0..total-1}; labels only grow."""

    labeled: list[int]
    unlabeled: list[int]
    total: int

    def __post_init__(self):
        combined = sorted(self.labeled) + sorted(self.unlabeled)
        if sorted(combined) != list(range(self.total)):
            raise ConfigError("pool indices must partition 0..total-1")

    @classmethod
    def seeded(cls, total: int, n_labeled: int, seed: int) -> "LabelPool":
        """Start with a random labeled subset of the given size."""
        if not 0 < n_labeled <= total:
            raise ConfigError(f"initial labeled size {n_labeled} not in (0, {total}]")
        rng = np.random.default_rng(seeding.normalize_seed(seed))
        picked = rng.choice(total, size=n_labeled, replace=False)
        mask = np.zeros(total, dtype=bool)
        mask[picked] = True
        return cls(
            labeled=sorted(int(i) for i in np.flatnonzero(mask)),
            unlabeled=[int(i) for i in np.flatnonzero(~mask)],
            total=total,
        )

    def mark_labeled(self, indices) -> None:
        """Move ``indices`` from the unlabeled to the labeled set."""
        moving = set(int(i) for i in indices)
        if len(moving) != len(list(indices)):
            raise ConfigError("duplicate indices in acquisition")
        remaining = set(self.unlabeled)
        if not moving <= remaining:
            raise ConfigError("acquired indices must come from the unlabeled set")
        self.labeled = sorted(set(self.labeled) | moving)
        self.unlabeled = sorted(remaining - moving)


@dataclass(frozen=True)
class Schedule:
    """Initial labeled fraction plus the increasing budget fractions."""

    seed_fraction: float
    fractions: tuple[float, ...]

    def __post_init__(self):
        fr = tuple(self.fractions)
        if not fr or any(not 0 < f <= 1 for f in fr):
            raise ConfigError(f"fractions must lie in (0, 1], got {fr}")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ConfigError(f"fractions must be strictly increasing, got {fr}")
        if not 0 < self.seed_fraction <= fr[0]:
            raise ConfigError(
                f"seed fraction {self.seed_fraction} must be in (0, {fr[0]}]"
            )
        object.__setattr__(self, "fractions", fr)


@dataclass(frozen=True)
class Strategy:
    """How to score the pool and how to configure the model per round.

    ``scorer`` is "entropy" (rank by predictive entropy of the averaged
    prediction) or "random". ``params`` overrides estimator parameters,
    which is where the regularization flavor of each strategy lives.
    """

    name: str
    scorer: str
    params: dict = field(default_factory=dict)


DEFAULT_WEIGHT_DECAY = 1e-4

STRATEGIES = {
    "random": Strategy("random", "random", {"beta": 0.0, "weight_decay": DEFAULT_WEIGHT_DECAY}),
    "ensemble": Strategy(
        "ensemble", "entropy", {"beta": 0.0, "weight_decay": DEFAULT_WEIGHT_DECAY}
    ),
    "dpe": Strategy("dpe", "entropy", {"beta": "auto", "weight_decay": 0.0}),
}


def get_strategy(name: str) -> Strategy:
    if name not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; valid: {sorted(STRATEGIES)}")
    return STRATEGIES[name]


@dataclass
class RoundReport:
    """Metrics of one retraining round (round 0 is the seeded pool)."""

    strategy: str
    seed: int
    round: int
    labeled_fraction: float
    labeled_count: int
    val_accuracy: float
    val_nll: float
    mean_acquired_entropy: float  # NaN for round 0 (nothing acquired)
    labeled_indices: tuple[int, ...] = ()


def prediction_entropy(probs) -> float:
    """Entropy (natural log) of one predicted class distribution."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ConfigError(f"expected a probability vector, got shape {p.shape}")
    if p.min() < 0 or abs(p.sum() - 1.0) > 1e-6:
        raise ConfigError(
            f"not a probability distribution (sum {p.sum()!r}, min {p.min()!r})"
        )
    return float(prediction_entropies(p[None, :])[0])


def prediction_entropies(probs: np.ndarray) -> np.ndarray:
    """Row-wise predictive entropy, with 0*log(0) taken as 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=1)


def top_k_by_score(scores, indices, k: int) -> list[int]:
    """The k indices with largest score; ties go to the smaller index."""
    scores = np.asarray(scores, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    order = np.lexsort((indices, -scores))
    return [int(i) for i in indices[order[:k]]]


def acquire(model, pool: LabelPool, X, k: int, strategy: Strategy, seed: int) -> list[int]:
    """Pick ``k`` unlabeled pool positions to label next.

    Entropy strategies rank by the predictive entropy of the model's
    averaged class probabilities; "random" draws uniformly without
    replacement from the unlabeled set.
    """
    if k > len(pool.unlabeled):
        raise ConfigError(f"cannot acquire {k} of {len(pool.unlabeled)} unlabeled points")
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    unlabeled = np.asarray(pool.unlabeled, dtype=np.int64)
    if strategy.scorer == "random":
        rng = np.random.default_rng(seeding.normalize_seed(seed))
        return [int(i) for i in rng.choice(unlabeled, size=k, replace=False)]
    if strategy.scorer == "entropy":
        probs = model.predict_proba(np.asarray(X)[unlabeled].reshape(len(unlabeled), -1))
        return top_k_by_score(prediction_entropies(probs), unlabeled, k)
    raise ConfigError(f"unknown scorer {strategy.scorer!r}")


def _fit_round(base_estimator, strategy, X, y, rows, seed, round_index):
    scaler = Standardizer().fit(X[rows])
    model = clone(base_estimator)
    model.set_params(
        **strategy.params,
        random_state=seeding.derive_seed(seed, seeding.ROUND_MODEL, round_index),
    )
    model.fit(scaler.transform(X[rows]).reshape(len(rows), -1), y[rows])
    return model, scaler


def _evaluate(model, scaler, X_val, y_val):
    probs = model.predict_proba(scaler.transform(X_val).reshape(len(X_val), -1))
    acc = float(np.mean(model.classes_[np.argmax(probs, axis=1)] == y_val))
    dense_val = np.searchsorted(model.classes_, y_val)
    return acc, nll(probs, dense_val)


def run_schedule(
    dataset: Dataset,
    base_estimator,
    schedule: Schedule,
    strategy: Strategy,
    seed: int,
) -> list[RoundReport]:
    """One active-learning run; deterministic given ``seed``.

    Every round retrains from a fresh initialization on all labeled
    points (features re-standardized on the labeled subset only), so each
    round is reproducible in isolation from its labeled set.
    """
    X_train, y_train = dataset.train_xy()
    X_val, y_val = dataset.val_xy()
    if len(X_val) == 0:
        raise ConfigError("dataset has no validation split")
    total = len(X_train)
    targets = [int(round(f * total)) for f in schedule.fractions]
    if targets[-1] > total:
        raise ConfigError(f"final budget {targets[-1]} exceeds pool size {total}")

    pool = LabelPool.seeded(
        total,
        max(1, int(round(schedule.seed_fraction * total))),
        seeding.derive_seed(seed, seeding.POOL_INIT),
    )
    reports = []
    model, scaler = _fit_round(
        base_estimator, strategy, X_train, y_train, pool.labeled, seed, 0
    )
    acc, val_nll = _evaluate(model, scaler, X_val, y_val)
    reports.append(
        RoundReport(
            strategy=strategy.name,
            seed=seed,
            round=0,
            labeled_fraction=len(pool.labeled) / total,
            labeled_count=len(pool.labeled),
            val_accuracy=acc,
            val_nll=val_nll,
            mean_acquired_entropy=float("nan"),
            labeled_indices=tuple(pool.labeled),
        )
    )
    for round_index, target in enumerate(targets, start=1):
        k = target - len(pool.labeled)
        if k < 0:
            raise ConfigError(f"budget {target} below current labeled size {len(pool.labeled)}")
        std_pool = scaler.transform(X_train).reshape(total, -1)
        picked = acquire(
            model,
            pool,
            std_pool,
            k,
            strategy,
            seeding.derive_seed(seed, seeding.POOL_INIT, round_index),
        )
        probs_picked = model.predict_proba(std_pool[picked])
        mean_entropy = float(np.mean(prediction_entropies(probs_picked))) if picked else float("nan")
        pool.mark_labeled(picked)
        model, scaler = _fit_round(
            base_estimator, strategy, X_train, y_train, pool.labeled, seed, round_index
        )
        acc, val_nll = _evaluate(model, scaler, X_val, y_val)
        reports.append(
            RoundReport(
                strategy=strategy.name,
                seed=seed,
                round=round_index,
                labeled_fraction=len(pool.labeled) / total,
                labeled_count=len(pool.labeled),
                val_accuracy=acc,
                val_nll=val_nll,
                mean_acquired_entropy=mean_entropy,
                labeled_indices=tuple(pool.labeled),
            )
        )
    return reports


@dataclass
class SummaryRow:
    strategy: str
    labeled_fraction: float
    mean_accuracy: float
    std_accuracy: float
    upper_bound_accuracy: float  # NaN when not computed
    relative_to_upper: float  # percent; NaN when not computed


def relative_to_upper_bound(accuracy: float, upper_bound: float) -> float:
    """Budget-limited accuracy as a percentage of the all-data accuracy."""
    if upper_bound <= 0:
        raise ConfigError(f"upper bound accuracy must be > 0, got {upper_bound}")
    return 100.0 * accuracy / upper_bound


def compare_strategies(
    dataset: Dataset,
    base_estimator,
    schedule: Schedule,
    strategies: list[Strategy],
    n_seeds: int,
    base_seed: int = 0,
    include_upper_bound: bool = True,
):
    """Run every (strategy, seed) pair and aggregate accuracies.

    Returns ``(rounds, summary)``: all per-round reports plus one
    SummaryRow per (strategy, fraction) with mean and std over seeds and,
    when requested, the accuracy relative to a 100%-data run of the same
    strategy configuration (mean over the same seeds).
    """
    if n_seeds < 1:
        raise ConfigError(f"n_seeds must be >= 1, got {n_seeds}")
    X_train, y_train = dataset.train_xy()
    X_val, y_val = dataset.val_xy()
    all_rounds: list[RoundReport] = []
    summary: list[SummaryRow] = []
    for strategy in strategies:
        runs = [
            run_schedule(dataset, base_estimator, schedule, strategy, base_seed + t)
            for t in range(n_seeds)
        ]
        all_rounds.extend(r for run in runs for r in run)
        upper = float("nan")
        if include_upper_bound:
            accs = []
            for t in range(n_seeds):
                model, scaler = _fit_round(
                    base_estimator,
                    strategy,
                    X_train,
                    y_train,
                    np.arange(len(X_train)),
                    base_seed + t,
                    seeding.UPPER_BOUND,
                )
                accs.append(_evaluate(model, scaler, X_val, y_val)[0])
            upper = float(np.mean(accs))
        for round_index in range(len(runs[0])):
            accs = np.array([run[round_index].val_accuracy for run in runs])
            summary.append(
                SummaryRow(
                    strategy=strategy.name,
                    labeled_fraction=runs[0][round_index].labeled_fraction,
                    mean_accuracy=float(accs.mean()),
                    std_accuracy=float(accs.std()),
                    upper_bound_accuracy=upper,
                    relative_to_upper=(
                        relative_to_upper_bound(float(accs.mean()), upper)
                        if math.isfinite(upper)
                        else float("nan")
                    ),
                )
            )
    return all_rounds, summary
