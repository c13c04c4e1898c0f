"""KL penalty on the cross-member distribution of every parameter.

Each scalar parameter of the architecture takes E values across the
ensemble members. Treating those E values as an empirical Gaussian with
mean mu_i and population variance var_i, the penalty per parameter is

    penalty_i = log(var_i) + (var_p + (mu_i - mu_p)^2) / var_i

where (mu_p, var_p) is the group's prior. This keeps exactly the terms of
the closed-form Gaussian KL that depend on the ensemble; the remaining
constants are dropped and absorbed into the objective's beta weight. As a
function of var_i the penalty is uniquely minimized at
var_p + (mu_i - mu_p)^2: collapsing member variance below the prior is
punished hard (the 1/var_i term), runaway variance only logarithmically.

The analytic gradient w.r.t. member value theta_e of parameter i is

    d/dtheta_e = (2 (mu_i - mu_p) / var_i) / E
               + (1/var_i - (var_p + (mu_i - mu_p)^2) / var_i^2)
                 * 2 (theta_e - mu_i) / E

with the variance path cut (stop-gradient) wherever the variance floor
engaged.

Summation order is canonicalized (per-parameter member values are sorted
before reduction, groups reduced with compensated summation), so totals
are bit-identical under any permutation of the ensemble members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .priors import PriorSpec

# Floor for the cross-member variance; the penalty is singular at zero.
VAR_FLOOR = 1e-8


@dataclass
class ParameterGroup:
    """Values of one parameter block across all ensemble members.

    ``values`` has shape (E, P): E members, P scalar parameters sharing
    one prior.
    """

    values: np.ndarray
    prior: PriorSpec
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ConfigError(f"group values must be (E, P), got shape {self.values.shape}")


@dataclass
class GroupStats:
    """Cross-member mean and floored population variance, per parameter."""

    mu: np.ndarray
    var: np.ndarray
    floored: np.ndarray


def gaussian_kl(mu_q: float, var_q: float, mu_p: float, var_p: float) -> float:
    """Closed-form divergence between two Gaussians.

    Computed as 0.5 * (log(var_q/var_p) + (var_p + (mu_q - mu_p)^2)/var_q - 1),
    the exact form the group penalty is derived from. Note the prior
    variance sits in the numerator of the ratio term; do not "fix" this to
    the more common orientation, the penalty's properties depend on it.
    """
    if var_q <= 0 or var_p <= 0:
        raise ConfigError(f"variances must be > 0, got var_q={var_q}, var_p={var_p}")
    return 0.5 * (
        math.log(var_q / var_p) + (var_p + (mu_q - mu_p) ** 2) / var_q - 1.0
    )


def group_stats(group: ParameterGroup) -> GroupStats:
    """Cross-member mean and population variance of every parameter.

    Member values are sorted per parameter before reduction, which makes
    the result (and everything downstream) bit-identical under member
    permutations. Variances below VAR_FLOOR are clamped and flagged.
    """
    e = group.values.shape[0]
    if e < 2:
        raise ConfigError(f"cross-member statistics need E >= 2 members, got {e}")
    ordered = np.sort(group.values, axis=0)
    mu = ordered.mean(axis=0)
    var = ordered.var(axis=0)  # divides by E
    floored = var < VAR_FLOOR
    var = np.where(floored, VAR_FLOOR, var)
    return GroupStats(mu=mu, var=var, floored=floored)


def _per_parameter_penalty(stats: GroupStats, prior: PriorSpec) -> np.ndarray:
    return np.log(stats.var) + (prior.var + (stats.mu - prior.mu) ** 2) / stats.var


def group_penalty(group: ParameterGroup) -> float:
    """Penalty of one group: sum over its parameters."""
    stats = group_stats(group)
    return float(np.sum(_per_parameter_penalty(stats, group.prior)))


def total_penalty(groups: list[ParameterGroup]) -> float:
    """Penalty aggregated over all groups (compensated summation)."""
    for g in groups:
        if g.prior is None:
            raise ConfigError(f"group {g.name!r} has no prior")
    return math.fsum(group_penalty(g) for g in groups)


def penalty_gradient(groups: list[ParameterGroup]) -> list[np.ndarray]:
    """Gradient of ``total_penalty`` w.r.t. every member value.

    Returns one (E, P) array per group, aligned with ``group.values``.
    """
    grads = []
    for group in groups:
        stats = group_stats(group)
        e = group.values.shape[0]
        mu_term = 2.0 * (stats.mu - group.prior.mu) / stats.var / e
        var_coeff = (
            1.0 / stats.var
            - (group.prior.var + (stats.mu - group.prior.mu) ** 2) / stats.var**2
        )
        var_coeff = np.where(stats.floored, 0.0, var_coeff)
        grads.append(mu_term + var_coeff * 2.0 * (group.values - stats.mu) / e)
    return grads
