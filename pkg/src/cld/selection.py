"""Coreset construction: class-balanced top-k, a stratified-sampling baseline,
and score-driven validation-set builders.

Determinism contract: identical (scores, quotas, seed) produce identical
output, bit for bit. Ties break by ascending sample id everywhere; random
draws use a seeded PCG64 generator over id-sorted candidate lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import BudgetTooLarge, QuotaExceedsClass, SizeTooLarge
from .scoring import ScoreTable

PROVENANCES = ("cld_topk", "ccs_stratified", "random")


@dataclass(frozen=True)
class Budget:
    """Selection budget: a fraction of the pool, a total count, or explicit
    per-class quotas."""

    kind: str
    fraction: float = 0.0
    total: int = 0
    per_class: tuple[tuple[int, int], ...] = ()

    @staticmethod
    def from_fraction(p: float) -> "Budget":
        if not 0.0 < p <= 1.0:
            raise BudgetTooLarge(f"fraction must be in (0, 1], got {p}")
        return Budget("fraction", fraction=float(p))

    @staticmethod
    def from_total(k: int) -> "Budget":
        return Budget("total", total=int(k))

    @staticmethod
    def from_per_class(quotas: Mapping[int, int]) -> "Budget":
        return Budget("per_class", per_class=tuple(sorted((int(c), int(k)) for c, k in quotas.items())))

    def resolve(self, class_sizes: Mapping[int, int]) -> dict[int, int]:
        """Concrete per-class quotas against the given class sizes."""
        n = sum(class_sizes.values())
        if self.kind == "fraction":
            k = int(np.floor(self.fraction * n + 0.5))
            return allocate_quotas(max(k, 1), class_sizes)
        if self.kind == "total":
            return allocate_quotas(self.total, class_sizes)
        quotas = dict(self.per_class)
        for c, kc in quotas.items():
            if c not in class_sizes:
                raise QuotaExceedsClass(f"class {c} not present in score table")
            if kc > class_sizes[c]:
                raise QuotaExceedsClass(
                    f"quota {kc} exceeds class {c} size {class_sizes[c]}"
                )
            if kc < 0:
                raise QuotaExceedsClass(f"negative quota for class {c}")
        return quotas


def allocate_quotas(k: int, class_sizes: Mapping[int, int]) -> dict[int, int]:
    """Split a total budget k across classes proportionally to class size.

    Floor allocation plus largest-remainder distribution (ties by lowest
    class id); quotas are capped at the class size with any overflow pushed
    to the largest classes that still have room.
    """
    classes = sorted(int(c) for c in class_sizes)
    sizes = {c: int(class_sizes[c]) for c in classes}
    n = sum(sizes.values())
    if k <= 0:
        raise BudgetTooLarge(f"budget must be positive, got {k}")
    if k > n:
        raise BudgetTooLarge(f"budget {k} exceeds pool size {n}")
    quotas = {c: (k * sizes[c]) // n for c in classes}
    remainders = {c: (k * sizes[c]) % n for c in classes}
    leftover = k - sum(quotas.values())
    for c in sorted(classes, key=lambda c: (-remainders[c], c)):
        if leftover == 0:
            break
        if quotas[c] < sizes[c]:
            quotas[c] += 1
            leftover -= 1
    # overflow guard for degenerate size maps; proportional floors cannot overflow
    for c in classes:
        if quotas[c] > sizes[c]:
            leftover += quotas[c] - sizes[c]
            quotas[c] = sizes[c]
    while leftover > 0:
        room = [c for c in classes if quotas[c] < sizes[c]]
        if not room:
            raise BudgetTooLarge(f"budget {k} cannot be met by class sizes {sizes}")
        c = max(room, key=lambda c: (sizes[c] - quotas[c], -c))
        quotas[c] += 1
        leftover -= 1
    return quotas


@dataclass
class Coreset:
    """Selected sample ids (ascending) with per-class counts and provenance."""

    sample_ids: np.ndarray
    labels: np.ndarray
    per_class: dict[int, int]
    provenance: str
    seed: int | None = None

    def __post_init__(self):
        order = np.argsort(np.asarray(self.sample_ids, dtype=np.int64), kind="stable")
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)[order]
        self.labels = np.asarray(self.labels, dtype=np.int64)[order]
        if np.unique(self.sample_ids).size != self.sample_ids.size:
            raise ValueError("coreset sample ids must be unique")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")

    def __len__(self) -> int:
        return int(self.sample_ids.shape[0])

    def write(self, csv_path: str | Path) -> None:
        """CSV of (sample_id,label) plus a JSON sidecar with provenance."""
        path = Path(csv_path)
        lines = ["sample_id,label"]
        lines += [f"{int(s)},{int(l)}" for s, l in zip(self.sample_ids, self.labels)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        sidecar = {
            "provenance": self.provenance,
            "quotas": {str(c): int(k) for c, k in sorted(self.per_class.items())},
            "seed": self.seed,
            "size": len(self),
        }
        path.with_suffix(".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
        )

    @staticmethod
    def read(csv_path: str | Path) -> "Coreset":
        path = Path(csv_path)
        lines = [ln for ln in path.read_text(encoding="utf-8").split("\n") if ln]
        ids, labels = [], []
        for ln in lines[1:]:
            s, l = ln.split(",")
            ids.append(int(s))
            labels.append(int(l))
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        return Coreset(
            sample_ids=np.array(ids, dtype=np.int64),
            labels=np.array(labels, dtype=np.int64),
            per_class={int(c): int(k) for c, k in meta["quotas"].items()},
            provenance=meta["provenance"],
            seed=meta["seed"],
        )


def _class_sizes(scores: ScoreTable) -> dict[int, int]:
    labels, counts = np.unique(scores.labels, return_counts=True)
    return {int(c): int(n) for c, n in zip(labels, counts)}


def select_topk(scores: ScoreTable, quotas: Mapping[int, int]) -> Coreset:
    """Within each class, take the k_c highest-scoring samples (ties by id)."""
    sizes = _class_sizes(scores)
    ids, labels = [], []
    counts: dict[int, int] = {}
    for c, kc in sorted((int(c), int(k)) for c, k in quotas.items()):
        if kc == 0:
            continue
        if c not in sizes or kc > sizes[c]:
            raise QuotaExceedsClass(f"quota {kc} exceeds class {c} size {sizes.get(c, 0)}")
        sel = scores.labels == c
        cid = scores.sample_ids[sel]
        csc = scores.scores[sel]
        order = sorted(range(cid.size), key=lambda i: (-csc[i], cid[i]))
        take = [int(cid[i]) for i in order[:kc]]
        ids += take
        labels += [c] * kc
        counts[c] = kc
    return Coreset(
        sample_ids=np.array(ids, dtype=np.int64),
        labels=np.array(labels, dtype=np.int64),
        per_class=counts,
        provenance="cld_topk",
    )


def random_coreset(scores: ScoreTable, quotas: Mapping[int, int], seed: int) -> Coreset:
    """Class-balanced uniform draw honoring the same quotas as select_topk."""
    rng = np.random.default_rng(seed)
    sizes = _class_sizes(scores)
    ids, labels = [], []
    counts: dict[int, int] = {}
    for c, kc in sorted((int(c), int(k)) for c, k in quotas.items()):
        if kc == 0:
            continue
        if c not in sizes or kc > sizes[c]:
            raise QuotaExceedsClass(f"quota {kc} exceeds class {c} size {sizes.get(c, 0)}")
        cid = np.sort(scores.sample_ids[scores.labels == c])
        take = rng.permutation(cid)[:kc]
        ids += [int(s) for s in take]
        labels += [c] * kc
        counts[c] = kc
    return Coreset(
        sample_ids=np.array(ids, dtype=np.int64),
        labels=np.array(labels, dtype=np.int64),
        per_class=counts,
        provenance="random",
        seed=seed,
    )


def ccs_stratified(
    scores: ScoreTable,
    k: int,
    num_bins: int = 50,
    prune_hardest_fraction: float = 0.1,
    seed: int = 0,
) -> Coreset:
    """Stratified-sampling baseline: drop the lowest-scoring fraction, split
    the remaining score range into equal-width bins, draw equal per-bin
    budgets uniformly; shortfall from underfull bins is redistributed
    round-robin across bins that still have samples left.
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if not 0.0 <= prune_hardest_fraction < 1.0:
        raise ValueError("prune_hardest_fraction must be in [0, 1)")
    m = len(scores)
    n_prune = int(np.floor(prune_hardest_fraction * m))
    order = sorted(range(m), key=lambda i: (scores.scores[i], scores.sample_ids[i]))
    kept = order[n_prune:]
    if k > len(kept):
        raise BudgetTooLarge(f"budget {k} exceeds {len(kept)} samples left after pruning")
    if k <= 0:
        raise BudgetTooLarge(f"budget must be positive, got {k}")

    kept_scores = scores.scores[kept]
    lo, hi = float(kept_scores.min()), float(kept_scores.max())
    if hi > lo:
        edges = np.linspace(lo, hi, num_bins + 1)
        which = np.minimum(np.searchsorted(edges, kept_scores, side="right") - 1, num_bins - 1)
    else:
        which = np.zeros(len(kept), dtype=np.int64)
    bins: list[list[int]] = [[] for _ in range(num_bins)]
    for pos, b in zip(kept, which):
        bins[int(b)].append(pos)
    for b in bins:
        b.sort(key=lambda i: int(scores.sample_ids[i]))

    base, extra = divmod(k, num_bins)
    want = [base + (1 if b < extra else 0) for b in range(num_bins)]
    rng = np.random.default_rng(seed)
    drawn: list[list[int]] = []
    for b in range(num_bins):
        pool = bins[b]
        perm = rng.permutation(len(pool))
        take = min(want[b], len(pool))
        drawn.append([pool[i] for i in perm[:take]])
    deficit = k - sum(len(d) for d in drawn)
    while deficit > 0:
        progressed = False
        for b in range(num_bins):
            if deficit == 0:
                break
            pool = bins[b]
            if len(drawn[b]) < len(pool):
                chosen = set(drawn[b])
                rest = [i for i in pool if i not in chosen]
                pick = rest[int(rng.integers(len(rest)))]
                drawn[b].append(pick)
                deficit -= 1
                progressed = True
        if not progressed:
            raise BudgetTooLarge("bins exhausted before meeting the budget")

    picked = sorted(i for d in drawn for i in d)
    labels = scores.labels[picked]
    counts: dict[int, int] = {}
    for c in labels:
        counts[int(c)] = counts.get(int(c), 0) + 1
    return Coreset(
        sample_ids=scores.sample_ids[picked],
        labels=labels,
        per_class=counts,
        provenance="ccs_stratified",
        seed=seed,
    )


HEURISTICS = ("random", "lowest", "highest", "equal_bin", "proportional")


def build_validation_set(
    pool_scores: Mapping[int, float],
    size: int,
    heuristic: str = "random",
    bins: int = 10,
    seed: int = 0,
) -> list[int]:
    """Draw a validation set from a scored pool using one of five heuristics.

    random: seeded uniform draw. lowest/highest: extreme-score selection
    (ties by id). equal_bin: equal count per equal-width score bin.
    proportional: per-bin counts proportional to the pool's bin histogram
    (largest remainder), so the draw mirrors the pool's score distribution.
    """
    if heuristic not in HEURISTICS:
        raise ValueError(f"heuristic must be one of {HEURISTICS}")
    items = sorted((int(i), float(s)) for i, s in pool_scores.items())
    if size > len(items):
        raise SizeTooLarge(f"requested {size} from a pool of {len(items)}")
    if size <= 0:
        raise SizeTooLarge(f"size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    if heuristic == "random":
        perm = rng.permutation(len(items))
        return sorted(items[i][0] for i in perm[:size])
    if heuristic in ("lowest", "highest"):
        sign = 1.0 if heuristic == "lowest" else -1.0
        order = sorted(items, key=lambda t: (sign * t[1], t[0]))
        return sorted(i for i, _ in order[:size])

    vals = np.array([s for _, s in items])
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        edges = np.linspace(lo, hi, bins + 1)
        which = np.minimum(np.searchsorted(edges, vals, side="right") - 1, bins - 1)
    else:
        which = np.zeros(len(items), dtype=np.int64)
    pools: list[list[int]] = [[] for _ in range(bins)]
    for (i, _), b in zip(items, which):
        pools[int(b)].append(i)

    if heuristic == "equal_bin":
        base, extra = divmod(size, bins)
        want = [base + (1 if b < extra else 0) for b in range(bins)]
    else:  # proportional
        exact = [size * len(p) / len(items) for p in pools]
        want = [int(np.floor(e)) for e in exact]
        rem = size - sum(want)
        frac = [(exact[b] - want[b], b) for b in range(bins)]
        for _, b in sorted(frac, key=lambda t: (-t[0], t[1]))[:rem]:
            want[b] += 1

    chosen: list[list[int]] = []
    for b in range(bins):
        perm = rng.permutation(len(pools[b]))
        take = min(want[b], len(pools[b]))
        chosen.append([pools[b][i] for i in perm[:take]])
    deficit = size - sum(len(c) for c in chosen)
    while deficit > 0:
        progressed = False
        for b in range(bins):
            if deficit == 0:
                break
            if len(chosen[b]) < len(pools[b]):
                have = set(chosen[b])
                rest = [i for i in pools[b] if i not in have]
                chosen[b].append(rest[int(rng.integers(len(rest)))])
                deficit -= 1
                progressed = True
        if not progressed:
            raise SizeTooLarge("bins exhausted before meeting the requested size")
    return sorted(i for c in chosen for i in c)
