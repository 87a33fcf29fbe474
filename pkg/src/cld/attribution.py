"""Attribution harness: rank-correlation scoring of pairwise influence
against retraining outcomes, and prediction brittleness under targeted
removal.

The subset study draws random training subsets, retrains on each with a few
fresh seeded initializations, and rank-correlates (per query sample) the
summed pairwise influence of each subset against the retrained model's
correct-class probability for that query. Brittleness removes the k
top-scored (or random) training samples, retrains, and reports the fraction
of query predictions that flip relative to the full-data baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConstantVector, TooShort, UnknownId
from .losslog import delta_trajectories
from .scoring import cld_infl, cld_scores, validation_class_average
from .trainer import (
    DatasetBundle,
    TrainConfig,
    predict_proba,
    train_and_log,
)


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation: Pearson of average ranks."""
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    b = np.asarray(y, dtype=np.float64).reshape(-1)
    if a.size != b.size or a.size < 2:
        raise TooShort(f"need two equal-length vectors of >= 2 points, got {a.size}/{b.size}")
    if np.unique(a).size < 2 or np.unique(b).size < 2:
        raise ConstantVector("rank correlation undefined for a constant vector")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    r = float(ra @ rb) / float(np.sqrt((ra @ ra) * (rb @ rb)))
    return float(min(1.0, max(-1.0, r)))


@dataclass
class InfluenceMatrix:
    """Pairwise influence values keyed by train/query sample ids."""

    train_ids: np.ndarray
    query_ids: np.ndarray
    values: np.ndarray  # (num_train, num_query)

    def __post_init__(self):
        self.train_ids = np.asarray(self.train_ids, dtype=np.int64)
        self.query_ids = np.asarray(self.query_ids, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self._trow = {int(s): i for i, s in enumerate(self.train_ids)}
        self._qcol = {int(s): i for i, s in enumerate(self.query_ids)}

    def column(self, query_id: int) -> np.ndarray:
        if int(query_id) not in self._qcol:
            raise UnknownId(f"query id {query_id} not in influence matrix")
        return self.values[:, self._qcol[int(query_id)]]

    def rows(self, train_ids: Sequence[int]) -> np.ndarray:
        try:
            return np.array([self._trow[int(s)] for s in train_ids], dtype=np.int64)
        except KeyError as e:
            raise UnknownId(f"train id {e.args[0]} not in influence matrix") from None


def group_attribution(infl: InfluenceMatrix, query_id: int, subset_ids: Sequence[int]) -> float:
    """Summed influence of a training subset on one query sample."""
    col = infl.column(query_id)
    return float(col[infl.rows(subset_ids)].sum())


@dataclass(frozen=True)
class SubsetPlan:
    """Random-subset retraining plan: num_subsets subsets of ceil(alpha * N)
    train points, each retrained once per entry of retrain_seeds."""

    num_subsets: int = 20
    alpha: float = 0.5
    retrain_seeds: tuple[int, ...] = (101, 202, 303)
    base_seed: int = 0

    def __post_init__(self):
        if self.num_subsets < 2:
            raise ValueError("need at least 2 subsets")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if len(self.retrain_seeds) < 1:
            raise ValueError("need at least one retrain seed")


@dataclass
class LdsReport:
    query_ids: np.ndarray
    per_query: list[float | None]
    mean: float
    impacts: np.ndarray       # (num_subsets, num_query) mean retrained outcome
    attributions: np.ndarray  # (num_subsets, num_query) summed influence
    subset_ids: list[np.ndarray]

    @property
    def defined(self) -> list[float]:
        return [v for v in self.per_query if v is not None]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "num_defined": len(self.defined),
            "per_query": [
                {"query_id": int(q), "lds": v}
                for q, v in zip(self.query_ids, self.per_query)
            ],
        }


def lds_from_matrices(impacts: np.ndarray, attributions: np.ndarray) -> tuple[list[float | None], float]:
    """Per-query rank correlation of observed impacts vs attribution sums.

    Queries where either vector is constant get None; the mean runs over the
    defined entries (0.0 when none are defined).
    """
    per_query: list[float | None] = []
    for q in range(impacts.shape[1]):
        try:
            per_query.append(spearman(impacts[:, q], attributions[:, q]))
        except ConstantVector:
            per_query.append(None)
    defined = [v for v in per_query if v is not None]
    return per_query, float(np.mean(defined)) if defined else 0.0


def lds_evaluate(
    data: DatasetBundle,
    plan: SubsetPlan,
    train_config: TrainConfig | None = None,
) -> LdsReport:
    """Run the full subset-retraining study against pairwise influence scores
    computed once from a full-data run's loss-difference trajectories."""
    config = train_config or TrainConfig()
    full = train_and_log(data, config, log_splits=("train", "validation", "query"))
    infl = InfluenceMatrix(
        train_ids=full.train_log.sample_ids,
        query_ids=full.query_log.sample_ids,
        values=cld_infl(
            delta_trajectories(full.train_log), delta_trajectories(full.query_log)
        ),
    )

    n = len(data.train)
    size = int(np.ceil(plan.alpha * n))
    query = data.query
    impacts = np.zeros((plan.num_subsets, len(query)))
    attributions = np.zeros((plan.num_subsets, len(query)))
    subsets: list[np.ndarray] = []
    for j in range(plan.num_subsets):
        rng = np.random.default_rng([plan.base_seed, 7919, j])
        subset = np.sort(rng.permutation(data.train.sample_ids)[:size])
        subsets.append(subset)
        rows = infl.rows(subset)
        attributions[j] = infl.values[rows].sum(axis=0)
        outcome = np.zeros(len(query))
        for seed in plan.retrain_seeds:
            cfg = replace(config, seed=int(seed), init="gaussian", record_parameter_snapshots=False)
            run = train_and_log(data, cfg, subset=subset, log_splits=("train",))
            probs = predict_proba(run.params, query.x)
            outcome += probs[np.arange(len(query)), query.labels]
        impacts[j] = outcome / len(plan.retrain_seeds)

    per_query, mean = lds_from_matrices(impacts, attributions)
    return LdsReport(
        query_ids=query.sample_ids.copy(),
        per_query=per_query,
        mean=mean,
        impacts=impacts,
        attributions=attributions,
        subset_ids=subsets,
    )


REMOVAL_POLICIES = ("cld_topk", "random")


@dataclass
class BrittlenessReport:
    k_values: list[int]
    policies: list[str]
    flip_fraction: dict[str, list[float]]       # policy -> mean over seeds, per k
    per_seed: dict[str, list[list[float]]]      # policy -> per k -> per seed

    def to_dict(self) -> dict:
        return {
            "k_values": self.k_values,
            "policies": self.policies,
            "flip_fraction": self.flip_fraction,
            "per_seed": self.per_seed,
        }


def brittleness(
    data: DatasetBundle,
    k_values: Sequence[int],
    policies: Sequence[str] = REMOVAL_POLICIES,
    train_config: TrainConfig | None = None,
    seeds: Sequence[int] = (1, 2, 3, 4, 5),
) -> BrittlenessReport:
    """Fraction of query predictions flipped after removing k training points
    and retraining, per removal policy, averaged over retrain seeds."""
    config = train_config or TrainConfig()
    for policy in policies:
        if policy not in REMOVAL_POLICIES:
            raise ValueError(f"unknown removal policy {policy!r}")
    n = len(data.train)
    if max(k_values) >= n:
        raise ValueError("k must be smaller than the train split")

    baseline = train_and_log(data, config)
    base_preds = np.argmax(predict_proba(baseline.params, data.query.x), axis=1)
    scores = cld_scores(
        delta_trajectories(baseline.train_log),
        validation_class_average(delta_trajectories(baseline.validation_log)),
        mode="per_class",
    )
    by_score = sorted(
        range(n), key=lambda i: (-scores.scores[i], scores.sample_ids[i])
    )
    ranked_ids = scores.sample_ids[by_score]

    all_ids = data.train.sample_ids
    flip: dict[str, list[float]] = {p: [] for p in policies}
    detail: dict[str, list[list[float]]] = {p: [] for p in policies}
    for policy in policies:
        for k in k_values:
            fractions = []
            for seed in seeds:
                if policy == "cld_topk":
                    removed = set(int(s) for s in ranked_ids[:k])
                else:
                    rng = np.random.default_rng([int(seed), 104729, int(k)])
                    removed = set(int(s) for s in rng.permutation(all_ids)[:k])
                keep = np.array([s for s in all_ids if int(s) not in removed], dtype=np.int64)
                cfg = replace(config, seed=int(seed), init="gaussian", record_parameter_snapshots=False)
                run = train_and_log(data, cfg, subset=keep, log_splits=("train",))
                preds = np.argmax(predict_proba(run.params, data.query.x), axis=1)
                fractions.append(float(np.mean(preds != base_preds)))
            flip[policy].append(float(np.mean(fractions)))
            detail[policy].append(fractions)
    return BrittlenessReport(
        k_values=[int(k) for k in k_values],
        policies=list(policies),
        flip_fraction=flip,
        per_seed=detail,
    )
