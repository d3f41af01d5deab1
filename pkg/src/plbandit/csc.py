"""Cost-sensitive classification oracles and the reduction of the penalized objective.

The penalized objective ipw_risk + beta * pseudo_loss over any policy class
equals the average policy-weighted cost of a single modified cost matrix, so
training is exactly one oracle call. Oracles minimize costs (losses, not
rewards) and break ties toward the lowest index: lowest member index for the
enumeration oracle, lowest action index for the pointwise argmin. The
regression oracle is approximate by nature and is excluded from the exact
equivalence guarantees; it exists to exercise feature-mode scale.

Oracles are pure functions of immutable inputs; concurrent calls with
different beta values must not interfere, which the sweep harness relies on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Protocol

import numpy as np

from .estimators import penalized_objective
from .model import (
    PROPENSITY_FLOOR,
    LinearCostPolicy,
    DeterministicPolicy,
    LoggedDataset,
    MassPolicy,
    PolicyClass,
    SupportError,
)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """An (n, num_actions) cost table aligned with the rows it was built from."""

    costs: np.ndarray
    context_ids: np.ndarray | None = None
    context_features: np.ndarray | None = None

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 2:
            raise ValueError("cost matrix must be 2-dimensional")
        if not np.all(np.isfinite(costs)):
            raise ValueError("cost matrix entries must be finite")
        object.__setattr__(self, "costs", costs)

    @property
    def n(self) -> int:
        return self.costs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.costs.shape[1]

    @cached_property
    def _row_view(self) -> LoggedDataset:
        # Dummy dataset carrying only the row contexts, so MassPolicy.pmf_rows
        # can evaluate policies against this matrix.
        return LoggedDataset(
            actions=np.zeros(self.n, dtype=np.int64),
            losses=np.zeros(self.n),
            propensities=np.full((self.n, self.num_actions), 1.0 / self.num_actions),
            context_ids=self.context_ids,
            context_features=self.context_features,
        )

    def to_csv(self, path: str | Path) -> None:
        """Debug export: row index, context id (blank in feature mode), cost columns."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "context_id"] + [f"cost_{a}" for a in range(self.num_actions)])
            for i in range(self.n):
                ctx = int(self.context_ids[i]) if self.context_ids is not None else ""
                writer.writerow([i, ctx] + [repr(float(v)) for v in self.costs[i]])


class CscOracle(Protocol):
    """Returns an in-class policy minimizing (1/n) sum_i sum_a pi(a|x_i) * costs[i][a]."""

    def solve(self, costs: CostMatrix, policy_class: PolicyClass | None = None) -> MassPolicy: ...


def build_modified_costs(dataset: LoggedDataset, beta: float) -> CostMatrix:
    """Cost row for record i: loss_i/mu(a_i|x_i) at the logged action, plus beta/mu(a|x_i) everywhere.

    The policy-weighted average of these costs equals the penalized objective
    exactly, for every policy.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if np.any(dataset.propensities <= PROPENSITY_FLOOR):
        raise SupportError("propensity below floor; support assumption violated")
    costs = beta / dataset.propensities
    idx = np.arange(dataset.n)
    costs[idx, dataset.actions] += dataset.losses / dataset.propensities[idx, dataset.actions]
    return CostMatrix(
        costs=costs,
        context_ids=dataset.context_ids,
        context_features=dataset.context_features,
    )


def average_cost(policy: MassPolicy, costs: CostMatrix) -> float:
    """The CSC objective (1/n) sum_i sum_a pi(a|x_i) * costs[i][a]."""
    rows = policy.pmf_rows(costs._row_view)
    return float(np.mean((rows * costs.costs).sum(axis=1)))


class EnumerationOracle:
    """Exact argmin over the explicit members of a finite class, lowest index on ties."""

    def solve(self, costs: CostMatrix, policy_class: PolicyClass | None = None) -> MassPolicy:
        if policy_class is None or not policy_class.is_enumerated:
            raise ValueError("enumeration oracle needs an enumerated class")
        best, best_value = None, np.inf
        for member in policy_class.members:
            value = average_cost(member, costs)
            if value < best_value:
                best, best_value = member, value
        return best


class PointwiseArgminOracle:
    """CSC over all deterministic maps: per context, the action of minimum summed cost.

    Contexts never seen in the cost rows default to action 0 (the tie rule's
    lowest index). The ignored `policy_class` argument keeps the oracle
    signature uniform.
    """

    def __init__(self, num_contexts: int | None = None):
        self.num_contexts = num_contexts

    def solve(self, costs: CostMatrix, policy_class: PolicyClass | None = None) -> DeterministicPolicy:
        if costs.context_ids is None:
            raise ValueError("pointwise argmin needs finite-context cost rows")
        num_contexts = self.num_contexts or int(costs.context_ids.max()) + 1
        summed = np.zeros((num_contexts, costs.num_actions))
        np.add.at(summed, costs.context_ids, costs.costs)
        assignment = tuple(int(a) for a in np.argmin(summed, axis=1))
        return DeterministicPolicy(assignment=assignment, num_actions=costs.num_actions)


class RidgeRegressionOracle:
    """CSC via per-action ridge-regressed cost predictors, then pointwise argmin.

    Fits costs[:, a] ~ features with an unpenalized intercept. As ridge grows
    the predictors collapse to the per-action mean costs. Approximate: no
    exact-equivalence guarantee.
    """

    def __init__(self, ridge: float = 1e-6):
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        self.ridge = ridge

    def solve(self, costs: CostMatrix, policy_class: PolicyClass | None = None) -> LinearCostPolicy:
        if costs.context_features is None:
            raise ValueError("regression oracle needs feature-mode cost rows")
        x = costs.context_features
        n, dim = x.shape
        design = np.hstack([x, np.ones((n, 1))])
        gram = design.T @ design
        penalty = np.eye(dim + 1) * self.ridge
        penalty[dim, dim] = 0.0  # intercept unpenalized
        try:
            coef = np.linalg.solve(gram + penalty, design.T @ costs.costs)
        except np.linalg.LinAlgError as err:
            raise ValueError("singular design; increase the ridge strength") from err
        return LinearCostPolicy(weights=coef[:dim], intercepts=coef[dim])


def train_ipw_pl(
    dataset: LoggedDataset,
    beta: float,
    oracle: CscOracle,
    policy_class: PolicyClass | None = None,
) -> tuple[MassPolicy, float]:
    """Minimize ipw_risk + beta * pseudo_loss with exactly one oracle call.

    Returns the oracle's policy and its penalized objective recomputed from
    the dataset (not from the cost matrix).
    """
    costs = build_modified_costs(dataset, beta)
    policy = oracle.solve(costs, policy_class)
    return policy, penalized_objective(policy, dataset, beta)


def brute_force_argmin(
    dataset: LoggedDataset,
    beta: float,
    policy_class: PolicyClass,
) -> tuple[MassPolicy, float]:
    """Reference minimizer: evaluate the penalized objective on every member.

    Shares the lowest-index tie rule with the enumeration oracle.
    """
    if not policy_class.is_enumerated:
        raise ValueError("brute force needs an enumerated class")
    best, best_value = None, np.inf
    for member in policy_class.members:
        value = penalized_objective(member, dataset, beta)
        if value < best_value:
            best, best_value = member, value
    return best, best_value
