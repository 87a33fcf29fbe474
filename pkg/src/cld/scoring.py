"""Correlation scoring of loss-difference trajectories.

A training sample's score is the Pearson correlation between its trajectory
and the mean validation trajectory of its class (``per_class`` mode) or of
the whole validation split (``global`` mode). Trajectories with zero
variance cannot be correlated; they score 0 and carry a degenerate flag.

All correlations use population (1/T) normalization — the choice cancels in
the ratio, it is fixed only for bit-reproducibility — and results are
clamped to [-1, 1] to absorb float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatch, IdMismatch, LengthMismatch, MissingClassValidation, TooShort
from .losslog import DeltaMatrix

MODES = ("per_class", "global")


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson correlation of two equal-length vectors, clamped to [-1, 1].

    Returns None when either vector has zero variance (degenerate case).
    """
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    b = np.asarray(y, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise LengthMismatch(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise TooShort(f"need at least 2 points, got {a.size}")
    a = a - a.mean()
    b = b - b.mean()
    va = float(a @ a)
    vb = float(b @ b)
    if va == 0.0 or vb == 0.0:
        return None
    prod = va * vb
    # sqrt of the product is the more exact form; split the roots only when
    # the product itself under/overflows
    den = np.sqrt(prod) if 0.0 < prod < np.inf else np.sqrt(va) * np.sqrt(vb)
    r = float(a @ b) / den
    return float(min(1.0, max(-1.0, r)))


def _center_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center each row; returns (centered, row sum of squares, degeneracy mask)."""
    c = m - m.mean(axis=1, keepdims=True)
    ss = np.einsum("ij,ij->i", c, c)
    return c, ss, ss == 0.0


def rowwise_pearson(rows: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson of every row of ``rows`` against the vector ``y``.

    Returns (scores, degenerate) where degenerate rows (or a degenerate y)
    score 0.0.
    """
    rows = np.asarray(rows, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if rows.shape[1] != y.size:
        raise LengthMismatch(f"rows have {rows.shape[1]} columns, y has {y.size}")
    if y.size < 2:
        raise TooShort(f"need at least 2 points, got {y.size}")
    yc = y - y.mean()
    vy = float(yc @ yc)
    c, ss, deg = _center_rows(rows)
    if vy == 0.0:
        return np.zeros(rows.shape[0]), np.ones(rows.shape[0], dtype=bool)
    denom = np.sqrt(ss * vy)
    bad = ~((denom > 0.0) & np.isfinite(denom)) & ~deg
    if bad.any():
        denom[bad] = np.sqrt(ss[bad]) * np.sqrt(vy)
    denom[deg] = 1.0
    r = (c @ yc) / denom
    np.clip(r, -1.0, 1.0, out=r)
    r[deg] = 0.0
    return r, deg


def pairwise_pearson(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All-pairs Pearson between rows of ``a`` and rows of ``b``.

    Returns (matrix, a_degenerate, b_degenerate); entries touching a
    degenerate row are 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise GridMismatch(f"trajectory lengths differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[1] < 2:
        raise TooShort(f"need at least 2 points, got {a.shape[1]}")
    ca, sa, da = _center_rows(a)
    cb, sb, db = _center_rows(b)
    sa = sa.copy()
    sb = sb.copy()
    sa[da] = 1.0
    sb[db] = 1.0
    denom = np.sqrt(np.outer(sa, sb))
    bad = ~((denom > 0.0) & np.isfinite(denom))
    if bad.any():
        denom[bad] = np.outer(np.sqrt(sa), np.sqrt(sb))[bad]
    r = (ca @ cb.T) / denom
    np.clip(r, -1.0, 1.0, out=r)
    r[da, :] = 0.0
    r[:, db] = 0.0
    return r, da, db


@dataclass
class ClassValidationTrajectory:
    """Mean validation loss-difference trajectory per class, plus the global
    (class-agnostic) mean."""

    per_class: dict[int, np.ndarray]
    counts: dict[int, int]
    global_mean: np.ndarray
    num_steps: int


def validation_class_average(val_deltas: DeltaMatrix) -> ClassValidationTrajectory:
    """Componentwise mean of validation trajectories, per class and overall.

    Classes absent from the validation split are absent from the map.
    """
    labels = val_deltas.labels
    per_class: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for c in np.unique(labels):
        rows = val_deltas.deltas[labels == c]
        per_class[int(c)] = rows.mean(axis=0)
        counts[int(c)] = int(rows.shape[0])
    return ClassValidationTrajectory(
        per_class=per_class,
        counts=counts,
        global_mean=val_deltas.deltas.mean(axis=0),
        num_steps=val_deltas.num_steps,
    )


@dataclass
class ScoreTable:
    """One score row per training sample, in the training split's order."""

    sample_ids: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    degenerate: np.ndarray

    def __post_init__(self):
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.degenerate = np.asarray(self.degenerate, dtype=bool)
        if not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite")

    def __len__(self) -> int:
        return int(self.sample_ids.shape[0])

    def score_of(self) -> dict[int, float]:
        return {int(s): float(v) for s, v in zip(self.sample_ids, self.scores)}

    def to_csv(self, path: str | Path) -> None:
        lines = ["sample_id,label,score,degenerate"]
        for sid, lab, sc, dg in zip(self.sample_ids, self.labels, self.scores, self.degenerate):
            flag = "true" if dg else "false"
            lines.append(f"{int(sid)},{int(lab)},{format(float(sc), '.17g')},{flag}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    @staticmethod
    def from_csv(path: str | Path) -> "ScoreTable":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln]
        if not lines or lines[0] != "sample_id,label,score,degenerate":
            raise IdMismatch(f"{path}: not a score table")
        ids, labels, scores, deg = [], [], [], []
        for ln in lines[1:]:
            s, l, sc, dg = ln.split(",")
            ids.append(int(s))
            labels.append(int(l))
            scores.append(float(sc))
            deg.append(dg == "true")
        return ScoreTable(np.array(ids), np.array(labels), np.array(scores), np.array(deg))


def cld_scores(
    train_deltas: DeltaMatrix,
    val_avg: ClassValidationTrajectory,
    mode: str = "per_class",
) -> ScoreTable:
    """Score every training sample against its reference validation trajectory.

    ``per_class`` correlates against the sample's class mean (every train
    label must have a validation entry); ``global`` uses the class-agnostic
    mean. Degenerate samples score 0 with the flag set.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if train_deltas.num_steps != val_avg.num_steps:
        raise GridMismatch(
            f"train has {train_deltas.num_steps} steps, validation {val_avg.num_steps}"
        )
    m = train_deltas.deltas.shape[0]
    scores = np.zeros(m)
    degenerate = np.zeros(m, dtype=bool)
    if mode == "global":
        scores, degenerate = rowwise_pearson(train_deltas.deltas, val_avg.global_mean)
    else:
        for c in np.unique(train_deltas.labels):
            if int(c) not in val_avg.per_class:
                raise MissingClassValidation(int(c))
            sel = train_deltas.labels == c
            scores[sel], degenerate[sel] = rowwise_pearson(
                train_deltas.deltas[sel], val_avg.per_class[int(c)]
            )
    return ScoreTable(
        sample_ids=train_deltas.sample_ids.copy(),
        labels=train_deltas.labels.copy(),
        scores=scores,
        degenerate=degenerate,
    )


def cld_infl(train_deltas: DeltaMatrix, query_deltas: DeltaMatrix) -> np.ndarray:
    """Pairwise influence proxy: entry (m, q) is the correlation between
    training trajectory m and query trajectory q; degenerate pairs are 0."""
    r, _, _ = pairwise_pearson(train_deltas.deltas, query_deltas.deltas)
    return r


def score_mae(a: ScoreTable, b: ScoreTable) -> float:
    """Mean absolute score difference over aligned sample ids."""
    if len(a) != len(b) or set(a.sample_ids.tolist()) != set(b.sample_ids.tolist()):
        raise IdMismatch("score tables cover different sample id sets")
    order_a = np.argsort(a.sample_ids, kind="stable")
    order_b = np.argsort(b.sample_ids, kind="stable")
    return float(np.mean(np.abs(a.scores[order_a] - b.scores[order_b])))
