"""Command-line interface: train, active-learn, evaluate, gen-data.

Configuration lives in an INI file (flat sections, human-readable); every
supported command-line flag overrides its config key. All randomness flows
from config seeds, outputs are written atomically, and rerunning a command
with the same config produces byte-identical CSV files.

Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import active_learning as al
from . import checkpoint, data
from .ensemble import nll, predict_mean
from .errors import ConfigError, DPEError
from .estimator import DeepProbabilisticEnsembleClassifier


@dataclass
class RunConfig:
    # [data]
    kind: str = "blobs"
    n: int = 3000
    classes: int = 4
    dim: int = 2
    spread: float = 1.0
    noise: float = 0.1
    data_seed: int = 0
    path: str = ""
    label_column: str = "label"
    images: str = ""
    labels: str = ""
    val_fraction: float = 0.25
    split_seed: int = 0
    # [model]
    hidden: tuple[int, ...] = (32, 32)
    ensemble_size: int = 8
    beta: object = "auto"
    weight_decay: float = 0.0
    batch_norm: bool = False
    # [train]
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    # [active_learning]
    seed_fraction: float = 0.04
    fractions: tuple[float, ...] = (0.08, 0.16, 0.32)
    strategies: tuple[str, ...] = ("random", "ensemble", "dpe")
    n_seeds: int = 3
    upper_bound: bool = True
    # [output]
    out_dir: str = "runs/out"


_SCHEMA = {
    "data": {
        "kind": str,
        "n": int,
        "classes": int,
        "dim": int,
        "spread": float,
        "noise": float,
        "seed": ("data_seed", int),
        "path": str,
        "label_column": str,
        "images": str,
        "labels": str,
        "val_fraction": float,
        "split_seed": int,
    },
    "model": {
        "hidden": ("hidden", lambda s: tuple(int(v) for v in s.split(",") if v.strip())),
        "ensemble_size": int,
        "beta": ("beta", lambda s: s if s == "auto" else float(s)),
        "weight_decay": float,
        "batch_norm": ("batch_norm", lambda s: _parse_bool(s)),
    },
    "train": {
        "lr": float,
        "momentum": float,
        "batch_size": int,
        "epochs": int,
        "seed": int,
    },
    "active_learning": {
        "seed_fraction": float,
        "fractions": ("fractions", lambda s: tuple(float(v) for v in s.split(",") if v.strip())),
        "strategies": ("strategies", lambda s: tuple(v.strip() for v in s.split(",") if v.strip())),
        "n_seeds": int,
        "upper_bound": ("upper_bound", lambda s: _parse_bool(s)),
    },
    "output": {"dir": ("out_dir", str)},
}


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def load_config(path: str | None) -> RunConfig:
    config = RunConfig()
    if path is None:
        return config
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            rule = _SCHEMA[section][key]
            attr, convert = rule if isinstance(rule, tuple) else (key, rule)
            try:
                setattr(config, attr, convert(raw))
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {raw!r}") from exc
    return config


def build_dataset(config: RunConfig) -> data.Dataset:
    kind = config.kind
    if kind == "blobs":
        ds = data.gen_blobs(config.n, config.classes, config.dim, config.spread, config.data_seed)
    elif kind == "moons":
        ds = data.gen_moons(config.n, config.noise, config.data_seed)
    elif kind == "spirals":
        ds = data.gen_spirals(config.n, config.noise, config.data_seed)
    elif kind == "csv":
        if not config.path:
            raise ConfigError("data.kind=csv requires data.path")
        ds = data.load_csv(config.path, config.label_column)
    elif kind == "idx":
        if not config.images or not config.labels:
            raise ConfigError("data.kind=idx requires data.images and data.labels")
        ds = data.load_idx_images(config.images, config.labels)
    else:
        raise ConfigError(
            f"unknown data kind {kind!r}; valid: blobs, moons, spirals, csv, idx"
        )
    return data.split(ds, config.val_fraction, config.split_seed)


def build_estimator(config: RunConfig) -> DeepProbabilisticEnsembleClassifier:
    return DeepProbabilisticEnsembleClassifier(
        hidden_layers=config.hidden,
        n_members=config.ensemble_size,
        beta=config.beta,
        weight_decay=config.weight_decay,
        learning_rate=config.lr,
        momentum=config.momentum,
        batch_size=config.batch_size,
        epochs=config.epochs,
        batch_norm=config.batch_norm,
        random_state=config.seed,
    )


def write_csv(path: str, header: list[str], rows: list[list[str]]) -> None:
    """Atomic CSV write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _f(x: float) -> str:
    return f"{x:.6f}"


def cmd_train(config: RunConfig) -> int:
    dataset = build_dataset(config)
    X_train, y_train = dataset.train_xy()
    X_val, y_val = dataset.val_xy()
    estimator = build_estimator(config)
    estimator.fit(
        X_train.reshape(len(X_train), -1),
        y_train,
        validation_data=(X_val.reshape(len(X_val), -1), y_val),
    )
    os.makedirs(config.out_dir, exist_ok=True)
    checkpoint.save(estimator.ensemble_, os.path.join(config.out_dir, "model.dpe"))
    rows = [
        [
            str(r.epoch),
            _f(r.sum_ce),
            _f(r.penalty),
            _f(r.weighted_penalty),
            _f(r.train_accuracy),
            _f(r.val_accuracy),
        ]
        for r in estimator.history_
    ]
    write_csv(
        os.path.join(config.out_dir, "training.csv"),
        ["epoch", "sum_ce", "kl_penalty", "weighted_kl_penalty", "train_accuracy", "val_accuracy"],
        rows,
    )
    final = estimator.history_[-1]
    print(
        f"trained {config.ensemble_size} members for {config.epochs} epochs: "
        f"train_acc={final.train_accuracy:.4f} val_acc={final.val_accuracy:.4f}"
    )
    print(f"checkpoint: {os.path.join(config.out_dir, 'model.dpe')}")
    return 0


def cmd_active_learn(config: RunConfig) -> int:
    dataset = build_dataset(config)
    schedule = al.Schedule(config.seed_fraction, config.fractions)
    strategies = [al.get_strategy(name) for name in config.strategies]
    estimator = build_estimator(config)
    rounds, summary = al.compare_strategies(
        dataset,
        estimator,
        schedule,
        strategies,
        n_seeds=config.n_seeds,
        base_seed=config.seed,
        include_upper_bound=config.upper_bound,
    )
    write_csv(
        os.path.join(config.out_dir, "rounds.csv"),
        [
            "strategy",
            "seed",
            "round",
            "labeled_fraction",
            "labeled_count",
            "val_accuracy",
            "val_nll",
            "mean_acquired_entropy",
        ],
        [
            [
                r.strategy,
                str(r.seed),
                str(r.round),
                _f(r.labeled_fraction),
                str(r.labeled_count),
                _f(r.val_accuracy),
                _f(r.val_nll),
                _f(r.mean_acquired_entropy),
            ]
            for r in rounds
        ],
    )
    write_csv(
        os.path.join(config.out_dir, "summary.csv"),
        [
            "strategy",
            "labeled_fraction",
            "mean_val_accuracy",
            "std_val_accuracy",
            "upper_bound_accuracy",
            "relative_to_upper_pct",
        ],
        [
            [
                s.strategy,
                _f(s.labeled_fraction),
                _f(s.mean_accuracy),
                _f(s.std_accuracy),
                _f(s.upper_bound_accuracy),
                _f(s.relative_to_upper),
            ]
            for s in summary
        ],
    )
    for s in summary:
        print(
            f"{s.strategy:>9} @{100 * s.labeled_fraction:5.1f}%: "
            f"{100 * s.mean_accuracy:6.2f} +- {100 * s.std_accuracy:5.2f}"
            + (
                f"  ({s.relative_to_upper:6.2f} of upper bound)"
                if config.upper_bound
                else ""
            )
        )
    return 0


def cmd_evaluate(config: RunConfig, checkpoint_path: str, split: str) -> int:
    model = checkpoint.load(checkpoint_path)
    dataset = build_dataset(config)
    X, y = dataset.val_xy() if split == "val" else dataset.train_xy()
    probs = predict_mean(model, X)
    acc = float(np.mean(np.argmax(probs, axis=1) == y))
    loss = nll(probs, y)
    entropy = float(np.mean(al.prediction_entropies(probs)))
    os.makedirs(config.out_dir, exist_ok=True)
    write_csv(
        os.path.join(config.out_dir, "evaluation.csv"),
        ["split", "accuracy", "nll", "mean_predictive_entropy"],
        [[split, _f(acc), _f(loss), _f(entropy)]],
    )
    print(f"{split}: accuracy={acc:.6f} nll={loss:.6f} mean_entropy={entropy:.6f}")
    return 0


def cmd_gen_data(config: RunConfig, out_path: str) -> int:
    if config.kind not in ("blobs", "moons", "spirals"):
        raise ConfigError(
            f"cannot generate kind {config.kind!r}; valid: blobs, moons, spirals"
        )
    ds = build_dataset(config)
    dim = int(np.prod(ds.features.shape[1:]))
    flat = ds.features.reshape(ds.n, dim)
    rows = [
        [repr(float(v)) for v in flat[i]] + [str(int(ds.labels[i]))] for i in range(ds.n)
    ]
    write_csv(out_path, [f"f{j}" for j in range(dim)] + ["label"], rows)
    print(f"wrote {ds.n} rows to {out_path}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: _Parser):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="training seed (overrides train.seed)")
    p.add_argument("--beta", help="KL penalty weight, a float or 'auto'")
    p.add_argument("--ensemble-size", type=int, help="number of ensemble members")


def build_parser() -> _Parser:
    parser = _Parser(prog="dpe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an ensemble, save checkpoint + CSV")
    _add_common(p)

    p = sub.add_parser("active-learn", help="run the budgeted acquisition comparison")
    _add_common(p)
    p.add_argument(
        "--strategy",
        action="append",
        help="strategy name (repeatable): random, ensemble, dpe",
    )

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="path to a model.dpe file")
    p.add_argument("--split", choices=("train", "val"), default="val")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    _add_common(p)
    p.add_argument("kind", choices=("blobs", "moons", "spirals"))
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--classes", type=int, help="number of classes (blobs)")
    p.add_argument("--dim", type=int, help="feature dimension (blobs)")
    p.add_argument("--spread", type=float, help="cluster spread (blobs)")
    p.add_argument("--noise", type=float, help="noise level (moons/spirals)")
    p.add_argument("--data-seed", type=int, help="generator seed")
    p.add_argument("--out-file", required=True, help="CSV file to write")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "out", None):
        config.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "beta", None) is not None:
        config.beta = args.beta if args.beta == "auto" else float(args.beta)
    if getattr(args, "ensemble_size", None) is not None:
        config.ensemble_size = args.ensemble_size
    if getattr(args, "strategy", None):
        config.strategies = tuple(args.strategy)
    for flag, attr in (
        ("n", "n"),
        ("classes", "classes"),
        ("dim", "dim"),
        ("spread", "spread"),
        ("noise", "noise"),
        ("data_seed", "data_seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, value)
    if getattr(args, "kind", None):
        config.kind = args.kind
    return config


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits; surface as a return code
        return exc.code if isinstance(exc.code, int) else 1
    try:
        config = _apply_overrides(load_config(args.config), args)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "active-learn":
            return cmd_active_learn(config)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.checkpoint, args.split)
        if args.command == "gen-data":
            return cmd_gen_data(config, args.out_file)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DPEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected runtime failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
