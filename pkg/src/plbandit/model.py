"""Core domain types for offline contextual-bandit policy optimization.

Logged datasets store the *full* logging pmf for every record, not only the
propensity of the logged action: the pseudo-loss regularizer needs
``mu(a | x_i)`` for every action, and self-contained records avoid carrying a
live logging-policy object around at estimation time.

Two context modes are supported. In finite-context mode a context is an
integer index into an environment table, which is what the brute-force
verification machinery needs. Feature mode (real-valued vectors) exists to
feed the regression-based cost-sensitive oracle.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import itertools
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

# Propensities below this are treated as zero (support violation); guards the
# 1/mu terms in every estimator.
PROPENSITY_FLOOR = 1e-12

# Tolerance for "sums to one" checks on pmfs and distributions.
PMF_ATOL = 1e-9


class SupportError(ValueError):
    """A propensity or density required by an importance weight is (near) zero."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Context:
    """A context, either an integer id (finite mode) or a feature vector."""

    id: int | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        if (self.id is None) == (self.features is None):
            raise ValueError("context needs exactly one of id / features")
        if self.id is not None and self.id < 0:
            raise ValueError("context id must be nonnegative")
        if self.features is not None:
            object.__setattr__(self, "features", _frozen(np.asarray(self.features, dtype=float)))


@dataclass(frozen=True)
class DiscreteActionSpace:
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("action space needs at least 2 actions")


class MassPolicy(ABC):
    """A policy producing a probability mass function over actions per context."""

    @abstractmethod
    def pmf(self, context: Context) -> np.ndarray:
        """Probability vector over actions for one context."""

    def pmf_rows(self, dataset: "LoggedDataset") -> np.ndarray:
        """Pmf evaluated at every logged context, as an (n, num_actions) array."""
        return np.stack([self.pmf(c) for c in dataset.iter_contexts()])


def _check_pmf(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2:
        raise ValueError("pmf table must be 2-dimensional")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("pmf entries must be finite and nonnegative")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > PMF_ATOL):
        raise ValueError("pmf rows must sum to 1 within 1e-9")
    return p


@dataclass(frozen=True, eq=False)
class TabularPolicy(MassPolicy):
    """Mass policy for finite contexts: row x of `table` is the pmf at context x."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(_check_pmf(self.table)))

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    def pmf(self, context: Context) -> np.ndarray:
        if context.id is None:
            raise ValueError("tabular policy needs finite contexts")
        return self.table[context.id]

    def pmf_rows(self, dataset: "LoggedDataset") -> np.ndarray:
        if dataset.context_ids is None:
            raise ValueError("tabular policy needs finite contexts")
        return self.table[dataset.context_ids]


@dataclass(frozen=True)
class UniformPolicy(MassPolicy):
    num_actions: int

    def pmf(self, context: Context) -> np.ndarray:
        return np.full(self.num_actions, 1.0 / self.num_actions)

    def pmf_rows(self, dataset: "LoggedDataset") -> np.ndarray:
        return np.full((dataset.n, self.num_actions), 1.0 / self.num_actions)


@dataclass(frozen=True)
class DeterministicPolicy(MassPolicy):
    """One action per context id; the pmf is the indicator of `assignment`.

    The pmf supremum of any such policy is 1 and the infimum is 0.
    """

    assignment: tuple[int, ...]
    num_actions: int

    def __post_init__(self):
        if any(a < 0 or a >= self.num_actions for a in self.assignment):
            raise ValueError("assignment actions out of range")
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))

    def action(self, context: Context) -> int:
        if context.id is None:
            raise ValueError("deterministic table policy needs finite contexts")
        return self.assignment[context.id]

    def pmf(self, context: Context) -> np.ndarray:
        row = np.zeros(self.num_actions)
        row[self.action(context)] = 1.0
        return row

    def pmf_rows(self, dataset: "LoggedDataset") -> np.ndarray:
        if dataset.context_ids is None:
            raise ValueError("deterministic table policy needs finite contexts")
        chosen = np.asarray(self.assignment)[dataset.context_ids]
        return np.eye(self.num_actions)[chosen]


@dataclass(frozen=True, eq=False)
class RowDeterministicPolicy(MassPolicy):
    """One action per dataset row; serialization form for feature-mode learners.

    Only meaningful against the dataset it was trained on (row i gets
    `actions[i]` regardless of the context content).
    """

    actions: tuple[int, ...]
    num_actions: int

    def pmf(self, context: Context) -> np.ndarray:  # pragma: no cover - row-keyed
        raise ValueError("row-deterministic policy is evaluated per dataset row, not per context")

    def pmf_rows(self, dataset: "LoggedDataset") -> np.ndarray:
        if len(self.actions) != dataset.n:
            raise ValueError("row-deterministic policy does not match dataset length")
        return np.eye(self.num_actions)[np.asarray(self.actions)]


@dataclass(frozen=True, eq=False)
class LinearCostPolicy(MassPolicy):
    """Deterministic feature-mode policy: argmin over fitted per-action cost scores."""

    weights: np.ndarray  # (dim, num_actions)
    intercepts: np.ndarray  # (num_actions,)

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))
        object.__setattr__(self, "intercepts", _frozen(np.asarray(self.intercepts, dtype=float)))

    @property
    def num_actions(self) -> int:
        return self.weights.shape[1]

    def scores(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(features) @ self.weights + self.intercepts

    def action(self, context: Context) -> int:
        if context.features is None:
            raise ValueError("linear cost policy needs feature contexts")
        return int(np.argmin(self.scores(context.features)[0]))

    def pmf(self, context: Context) -> np.ndarray:
        row = np.zeros(self.num_actions)
        row[self.action(context)] = 1.0
        return row

    def pmf_rows(self, dataset: "LoggedDataset") -> np.ndarray:
        if dataset.context_features is None:
            raise ValueError("linear cost policy needs feature contexts")
        chosen = np.argmin(self.scores(dataset.context_features), axis=1)
        return np.eye(self.num_actions)[chosen]


@dataclass(frozen=True)
class PolicyClass:
    """A finite policy class: explicit members, or a bare size surrogate.

    `size` enters every bound through ln(4|class|/alpha); enumeration mode is
    required by the oracles and the brute-force reference minimizer.
    """

    members: tuple[MassPolicy, ...] | None
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("policy class size must be >= 1")
        if self.members is not None and len(self.members) != self.size:
            raise ValueError("size must equal member count in enumeration mode")

    @classmethod
    def from_members(cls, members: Sequence[MassPolicy]) -> "PolicyClass":
        members = tuple(members)
        return cls(members=members, size=len(members))

    @classmethod
    def with_size(cls, size: int) -> "PolicyClass":
        return cls(members=None, size=size)

    @property
    def is_enumerated(self) -> bool:
        return self.members is not None


def deterministic_class(num_contexts: int, num_actions: int) -> PolicyClass:
    """All num_actions**num_contexts deterministic policies.

    Member order is lexicographic in the assignment tuple with context 0 most
    significant, so the lowest-index tie rule of the enumeration oracle agrees
    with per-context lowest-action tie-breaking.
    """
    members = [
        DeterministicPolicy(assignment=assign, num_actions=num_actions)
        for assign in itertools.product(range(num_actions), repeat=num_contexts)
    ]
    return PolicyClass.from_members(members)


@dataclass(frozen=True)
class ClassStats:
    """Scalar statistics of a policy class against a logging policy.

    pmf_sup        largest pmf value any member assigns to any action,
    mu_pmf_inf     smallest logging propensity,
    weight_ratio_sup  largest member-to-logging probability ratio,
    mismatch       max(sqrt(pmf_sup / mu_pmf_inf), weight_ratio_sup),
    class_size     number of policies the union bound runs over.

    `mismatch` is always recomputed from the other fields. Densities are
    allowed (pmf_sup may exceed 1), which is how the smoothed continuous-action
    class reuses the discrete bounds.
    """

    pmf_sup: float
    mu_pmf_inf: float
    weight_ratio_sup: float
    class_size: int
    mismatch: float = field(init=False)

    def __post_init__(self):
        if not (self.pmf_sup > 0 and np.isfinite(self.pmf_sup)):
            raise ValueError("pmf_sup must be positive and finite")
        if not (self.mu_pmf_inf > 0 and np.isfinite(self.mu_pmf_inf)):
            raise ValueError("mu_pmf_inf must be positive and finite")
        if not (self.weight_ratio_sup > 0 and np.isfinite(self.weight_ratio_sup)):
            raise ValueError("weight_ratio_sup must be positive and finite")
        if self.class_size < 1:
            raise ValueError("class_size must be >= 1")
        object.__setattr__(
            self,
            "mismatch",
            max(float(np.sqrt(self.pmf_sup / self.mu_pmf_inf)), float(self.weight_ratio_sup)),
        )


@dataclass(frozen=True)
class LoggedRecord:
    """One logged interaction: context, chosen action, loss in [0,1], full logging pmf."""

    context: Context
    action: int
    loss: float
    logging_pmf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "logging_pmf", _frozen(np.asarray(self.logging_pmf, dtype=float)))


@dataclass(frozen=True, eq=False)
class LoggedDataset:
    """Batch of logged records in array form.

    Exactly one of `context_ids` / `context_features` is set. `num_contexts`
    is the finite-context table size when known (generators set it; loaders
    infer max id + 1).
    """

    actions: np.ndarray
    losses: np.ndarray
    propensities: np.ndarray
    context_ids: np.ndarray | None = None
    context_features: np.ndarray | None = None
    num_contexts: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "actions", _frozen(np.asarray(self.actions, dtype=np.int64)))
        object.__setattr__(self, "losses", _frozen(np.asarray(self.losses, dtype=float)))
        object.__setattr__(self, "propensities", _frozen(np.asarray(self.propensities, dtype=float)))
        if (self.context_ids is None) == (self.context_features is None):
            raise ValueError("dataset needs exactly one of context_ids / context_features")
        if self.context_ids is not None:
            object.__setattr__(self, "context_ids", _frozen(np.asarray(self.context_ids, dtype=np.int64)))
        else:
            object.__setattr__(
                self, "context_features", _frozen(np.asarray(self.context_features, dtype=float))
            )
        n = len(self.actions)
        if n < 1:
            raise ValueError("dataset must contain at least one record")
        if self.propensities.ndim != 2 or self.propensities.shape[0] != n or len(self.losses) != n:
            raise ValueError("dataset arrays are not aligned")
        if self.num_contexts is None and self.context_ids is not None:
            object.__setattr__(self, "num_contexts", int(self.context_ids.max()) + 1)

    @property
    def n(self) -> int:
        return len(self.actions)

    @property
    def num_actions(self) -> int:
        return self.propensities.shape[1]

    @property
    def action_space(self) -> DiscreteActionSpace:
        return DiscreteActionSpace(self.num_actions)

    def context(self, i: int) -> Context:
        if self.context_ids is not None:
            return Context(id=int(self.context_ids[i]))
        return Context(features=self.context_features[i])

    def iter_contexts(self) -> Iterator[Context]:
        return (self.context(i) for i in range(self.n))

    def record(self, i: int) -> LoggedRecord:
        return LoggedRecord(
            context=self.context(i),
            action=int(self.actions[i]),
            loss=float(self.losses[i]),
            logging_pmf=self.propensities[i],
        )

    @property
    def records(self) -> tuple[LoggedRecord, ...]:
        return tuple(self.record(i) for i in range(self.n))

    @classmethod
    def from_records(cls, records: Sequence[LoggedRecord], num_contexts: int | None = None) -> "LoggedDataset":
        records = list(records)
        if not records:
            raise ValueError("dataset must contain at least one record")
        finite = records[0].context.id is not None
        if any((r.context.id is not None) != finite for r in records):
            raise ValueError("records mix finite and feature contexts")
        kwargs = dict(
            actions=np.array([r.action for r in records]),
            losses=np.array([r.loss for r in records]),
            propensities=np.stack([r.logging_pmf for r in records]),
            num_contexts=num_contexts,
        )
        if finite:
            kwargs["context_ids"] = np.array([r.context.id for r in records])
        else:
            kwargs["context_features"] = np.stack([r.context.features for r in records])
        return cls(**kwargs)


def validate_dataset(dataset: LoggedDataset) -> list[str]:
    """Check every record invariant; return a report of violations (empty = valid).

    Propensities below 1e-12 count as zero, guarding the 1/mu terms downstream.
    """
    report: list[str] = []
    p = dataset.propensities
    for i in range(dataset.n):
        loss = dataset.losses[i]
        if not np.isfinite(loss):
            report.append(f"non-finite loss at record {i}")
        elif loss < 0.0 or loss > 1.0:
            report.append(f"loss out of [0,1] at record {i}")
        row = p[i]
        if not np.all(np.isfinite(row)):
            report.append(f"non-finite propensity at record {i}")
            continue
        if abs(row.sum() - 1.0) > PMF_ATOL:
            report.append(f"propensities do not sum to 1 at record {i}")
        if np.any(row <= PROPENSITY_FLOOR):
            report.append(f"zero propensity at record {i}")
        a = dataset.actions[i]
        if a < 0 or a >= dataset.num_actions:
            report.append(f"action out of range at record {i}")
        elif row[a] <= PROPENSITY_FLOOR:
            report.append(f"logged action has zero propensity at record {i}")
    return report


def policy_table(policy: MassPolicy, num_contexts: int, num_actions: int | None = None) -> np.ndarray:
    """Pmf of `policy` at every context id in [0, num_contexts), as an (X, A) array."""
    if isinstance(policy, TabularPolicy) and policy.table.shape[0] >= num_contexts:
        return np.asarray(policy.table[:num_contexts])
    if isinstance(policy, DeterministicPolicy):
        chosen = np.asarray(policy.assignment[:num_contexts])
        return np.eye(policy.num_actions)[chosen]
    if isinstance(policy, UniformPolicy):
        return np.full((num_contexts, policy.num_actions), 1.0 / policy.num_actions)
    return np.stack([policy.pmf(Context(id=x)) for x in range(num_contexts)])


def pmf_extrema(policy: MassPolicy, contexts: Sequence[Context], num_actions: int | None = None) -> tuple[float, float]:
    """(sup, inf) of the policy pmf over the given contexts and all actions."""
    contexts = list(contexts)
    if not contexts:
        raise ValueError("pmf_extrema needs at least one context")
    rows = np.stack([policy.pmf(c) for c in contexts])
    return float(rows.max()), float(rows.min())


def class_stats(
    policy_class: PolicyClass,
    logging_policy: MassPolicy,
    contexts: Sequence[Context],
) -> ClassStats:
    """Compute ClassStats for an enumerated class over the given contexts.

    Extrema are the empirical extrema over the supplied contexts; construct
    ClassStats directly to supply analytic values instead.
    """
    if not policy_class.is_enumerated:
        raise ValueError("class_stats needs an enumerated class; build ClassStats directly otherwise")
    contexts = list(contexts)
    if not contexts:
        raise ValueError("class_stats needs at least one context")
    mu_rows = np.stack([logging_policy.pmf(c) for c in contexts])
    if np.any(mu_rows <= PROPENSITY_FLOOR):
        raise SupportError("logging policy has a zero propensity on the given contexts")
    pmf_sup = 0.0
    ratio_sup = 0.0
    for member in policy_class.members:
        rows = np.stack([member.pmf(c) for c in contexts])
        pmf_sup = max(pmf_sup, float(rows.max()))
        ratio_sup = max(ratio_sup, float((rows / mu_rows).max()))
    return ClassStats(
        pmf_sup=pmf_sup,
        mu_pmf_inf=float(mu_rows.min()),
        weight_ratio_sup=ratio_sup,
        class_size=policy_class.size,
    )


# ---------------------------------------------------------------------------
# Dataset files: JSON Lines with a one-line header declaring the action count.


def _context_json(dataset: LoggedDataset, i: int) -> dict:
    if dataset.context_ids is not None:
        return {"id": int(dataset.context_ids[i])}
    return {"features": [float(v) for v in dataset.context_features[i]]}


def save_dataset_jsonl(dataset: LoggedDataset, path: str | Path, metadata: dict | None = None) -> None:
    """Write `{"header": {"num_actions": ...}}` then one record object per line."""
    header = {"num_actions": dataset.num_actions}
    if dataset.num_contexts is not None:
        header["num_contexts"] = dataset.num_contexts
    if metadata:
        header.update(metadata)
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for i in range(dataset.n):
            rec = {
                "context": _context_json(dataset, i),
                "action": int(dataset.actions[i]),
                "loss": float(dataset.losses[i]),
                "propensities": [float(v) for v in dataset.propensities[i]],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_dataset_jsonl(path: str | Path) -> LoggedDataset:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or "header" not in lines[0]:
        raise ValueError(f"{path}: missing header line")
    header = lines[0]["header"]
    num_actions = int(header["num_actions"])
    actions, losses, propensities = [], [], []
    ids: list[int] = []
    features: list[list[float]] = []
    for row in lines[1:]:
        ctx = row["context"]
        if "id" in ctx:
            ids.append(int(ctx["id"]))
        else:
            features.append([float(v) for v in ctx["features"]])
        actions.append(int(row["action"]))
        losses.append(float(row["loss"]))
        pmf = [float(v) for v in row["propensities"]]
        if len(pmf) != num_actions:
            raise ValueError(f"{path}: propensity vector does not match header action count")
        propensities.append(pmf)
    if ids and features:
        raise ValueError(f"{path}: records mix finite and feature contexts")
    return LoggedDataset(
        actions=np.array(actions),
        losses=np.array(losses),
        propensities=np.array(propensities),
        context_ids=np.array(ids) if ids else None,
        context_features=np.array(features) if features else None,
        num_contexts=int(header["num_contexts"]) if "num_contexts" in header else None,
    )
