"""Per-sample loss trajectories: data model, CSV/manifest format, checkpoint
subsampling, and loss-difference computation.

A loss log is a dense M x (T+1) matrix of per-sample losses recorded at an
explicit grid of checkpoints (epoch 0 = the pre-update model is mandatory,
so the first difference is computable). Train and validation splits of one
run must share an identical grid.

On-disk layout (one directory per run):
    manifest.json            metadata + relative paths of the split files
    <split>.csv              header ``sample_id,label,loss_<i0>,...,loss_<iT>``

Losses are serialized with 17 significant digits so write -> load -> write
is byte-identical. All in-memory values are float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateSampleId,
    EmptyGrid,
    GridMismatch,
    InvalidGrid,
    InvalidLog,
    MalformedRow,
    MissingFile,
    NegativeLoss,
    NonFiniteLoss,
    UnknownIndex,
)

FORMAT_VERSION = "1"

SPLITS = ("train", "validation")
# in-memory logs may also carry a query split; only train/validation hit disk
VALID_SPLITS = ("train", "validation", "query")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class CheckpointGrid:
    """Ordered checkpoint ids (epoch numbers) at which losses were recorded."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) < 2:
            raise InvalidGrid(f"grid needs at least 2 checkpoints, got {len(idx)}")
        if idx[0] != 0:
            raise InvalidGrid(f"grid must start at checkpoint 0, got {idx[0]}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidGrid(f"grid indices must be strictly increasing: {idx}")

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def num_differences(self) -> int:
        return len(self.indices) - 1


@dataclass
class LossLog:
    """Losses of one split: ids, labels, and an M x (T+1) float64 matrix."""

    split: str
    sample_ids: np.ndarray
    labels: np.ndarray
    grid: CheckpointGrid
    losses: np.ndarray

    def __post_init__(self):
        if self.split not in VALID_SPLITS:
            raise InvalidLog(f"unknown split {self.split!r}; expected one of {VALID_SPLITS}")
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.losses = np.asarray(self.losses, dtype=np.float64)
        m = self.sample_ids.shape[0]
        if self.labels.shape != (m,):
            raise InvalidLog("labels and sample_ids length mismatch")
        if self.losses.shape != (m, len(self.grid)):
            raise MalformedRow(
                f"loss matrix shape {self.losses.shape} does not match "
                f"{m} samples x {len(self.grid)} checkpoints"
            )
        if m and np.min(self.sample_ids) < 0:
            raise InvalidLog("sample ids must be non-negative")
        if np.unique(self.sample_ids).size != m:
            dupes = self.sample_ids[np.r_[False, np.diff(np.sort(self.sample_ids)) == 0]]
            raise DuplicateSampleId(f"duplicate sample ids: {np.unique(dupes).tolist()}")
        if m and np.min(self.labels) < 0:
            raise InvalidLog("labels must be non-negative")
        bad = ~np.isfinite(self.losses)
        if bad.any():
            sid = int(self.sample_ids[np.argwhere(bad)[0][0]])
            raise NonFiniteLoss(f"non-finite loss for sample {sid} in split {self.split!r}")
        if m and np.min(self.losses) < 0:
            sid = int(self.sample_ids[np.argwhere(self.losses < 0)[0][0]])
            raise NegativeLoss(f"negative loss for sample {sid} in split {self.split!r}")

    @property
    def num_samples(self) -> int:
        return int(self.sample_ids.shape[0])

    @property
    def num_checkpoints(self) -> int:
        return len(self.grid)

    def take(self, sample_ids: Sequence[int]) -> "LossLog":
        """New log restricted to the given sample ids, in the given order."""
        pos = {int(s): i for i, s in enumerate(self.sample_ids)}
        try:
            rows = np.array([pos[int(s)] for s in sample_ids], dtype=np.int64)
        except KeyError as e:
            raise UnknownIndex(f"sample id {e.args[0]} not in log") from None
        return LossLog(
            split=self.split,
            sample_ids=self.sample_ids[rows].copy(),
            labels=self.labels[rows].copy(),
            grid=self.grid,
            losses=self.losses[rows].copy(),
        )


@dataclass
class DeltaMatrix:
    """Loss-difference trajectories: row m holds the T consecutive-checkpoint
    changes in sample m's loss."""

    sample_ids: np.ndarray
    labels: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.deltas = np.asarray(self.deltas, dtype=np.float64)
        if self.deltas.ndim != 2 or self.deltas.shape[1] < 1:
            raise InvalidLog("delta matrix must be 2-D with at least one column")
        if not np.isfinite(self.deltas).all():
            raise NonFiniteLoss("non-finite loss difference")

    @property
    def num_steps(self) -> int:
        return int(self.deltas.shape[1])


@dataclass
class Manifest:
    version: str
    dataset_name: str
    num_classes: int
    seed: int
    checkpoint_unit: str = "epoch"
    files: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.checkpoint_unit != "epoch":
            raise InvalidLog(
                f"unsupported checkpoint_unit {self.checkpoint_unit!r}; only 'epoch' exists"
            )

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "dataset_name": self.dataset_name,
            "num_classes": int(self.num_classes),
            "seed": int(self.seed),
            "checkpoint_unit": self.checkpoint_unit,
            "files": dict(sorted(self.files.items())),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "Manifest":
        try:
            raw = json.loads(text)
            return Manifest(
                version=str(raw["version"]),
                dataset_name=str(raw["dataset_name"]),
                num_classes=int(raw["num_classes"]),
                seed=int(raw["seed"]),
                checkpoint_unit=str(raw.get("checkpoint_unit", "epoch")),
                files={str(k): str(v) for k, v in raw["files"].items()},
            )
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
            raise InvalidLog(f"malformed manifest: {e}") from None


# --- CSV round trip ---

def _write_split_csv(path: Path, log: LossLog) -> None:
    cols = ",".join(f"loss_{i}" for i in log.grid.indices)
    lines = [f"sample_id,label,{cols}"]
    for sid, lab, row in zip(log.sample_ids, log.labels, log.losses):
        lines.append(f"{int(sid)},{int(lab)}," + ",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_split_csv(path: Path, split: str) -> LossLog:
    if not path.is_file():
        raise MissingFile(f"loss file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise MalformedRow(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:2] != ["sample_id", "label"] or len(header) < 4:
        raise MalformedRow(f"{path}: bad header {lines[0]!r}")
    try:
        indices = tuple(int(h.removeprefix("loss_")) for h in header[2:])
    except ValueError:
        raise MalformedRow(f"{path}: loss columns must be named loss_<checkpoint>") from None
    grid = CheckpointGrid(indices)
    width = len(indices)

    ids, labels, rows = [], [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != width + 2:
            raise MalformedRow(
                f"{path}:{lineno}: expected {width + 2} fields, got {len(parts)}"
            )
        try:
            sid = int(parts[0])
            label = int(parts[1])
            vals = np.array([float(v) for v in parts[2:]], dtype=np.float64)
        except ValueError as e:
            raise MalformedRow(f"{path}:{lineno}: {e}") from None
        if not np.isfinite(vals).all():
            raise NonFiniteLoss(f"{path}:{lineno}: non-finite loss for sample {sid}")
        ids.append(sid)
        labels.append(label)
        rows.append(vals)
    return LossLog(
        split=split,
        sample_ids=np.array(ids, dtype=np.int64),
        labels=np.array(labels, dtype=np.int64),
        grid=grid,
        losses=np.vstack(rows) if rows else np.zeros((0, width)),
    )


def write_losslog(manifest: Manifest, train: LossLog, validation: LossLog, out_dir: str | Path) -> Path:
    """Write manifest + one CSV per split; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = replace(manifest, files={"train": "train.csv", "validation": "validation.csv"})
    _write_split_csv(out / "train.csv", train)
    _write_split_csv(out / "validation.csv", validation)
    mpath = out / "manifest.json"
    mpath.write_text(manifest.to_json(), encoding="utf-8", newline="\n")
    return mpath


def load_losslog(manifest_path: str | Path) -> tuple[Manifest, LossLog, LossLog]:
    """Load and fully validate a loss-log directory.

    Both splits must share an identical checkpoint grid, and the manifest's
    num_classes must equal the number of distinct labels across the logs.
    """
    mpath = Path(manifest_path)
    if mpath.is_dir():
        mpath = mpath / "manifest.json"
    if not mpath.is_file():
        raise MissingFile(f"manifest not found: {mpath}")
    manifest = Manifest.from_json(mpath.read_text(encoding="utf-8"))
    for split in SPLITS:
        if split not in manifest.files:
            raise MissingFile(f"manifest lists no file for split {split!r}")
    base = mpath.parent
    train = _parse_split_csv(base / manifest.files["train"], "train")
    validation = _parse_split_csv(base / manifest.files["validation"], "validation")
    if train.grid != validation.grid:
        raise GridMismatch(
            f"train grid {train.grid.indices} != validation grid {validation.grid.indices}"
        )
    seen = set(np.unique(train.labels).tolist()) | set(np.unique(validation.labels).tolist())
    if seen != set(range(manifest.num_classes)):
        raise InvalidLog(
            f"labels {sorted(seen)} do not form the contiguous class set "
            f"0..{manifest.num_classes - 1}"
        )
    return manifest, train, validation


# --- checkpoint subsampling ---

@dataclass(frozen=True)
class SubsamplePlan:
    """Which checkpoint columns to retain: ``prefix(n)``, ``stride(s)``, or an
    explicit list of grid indices (which must include 0)."""

    kind: str
    n: int = 0
    indices: tuple[int, ...] = ()

    @staticmethod
    def prefix(n: int) -> "SubsamplePlan":
        return SubsamplePlan("prefix", n=int(n))

    @staticmethod
    def stride(s: int) -> "SubsamplePlan":
        return SubsamplePlan("stride", n=int(s))

    @staticmethod
    def explicit(indices: Iterable[int]) -> "SubsamplePlan":
        return SubsamplePlan("explicit", indices=tuple(int(i) for i in indices))

    @staticmethod
    def parse(text: str) -> "SubsamplePlan":
        """Parse CLI syntax: ``prefix=46``, ``stride=2``, ``explicit=0,2,5``."""
        kind, _, arg = text.partition("=")
        if kind == "prefix":
            return SubsamplePlan.prefix(int(arg))
        if kind == "stride":
            return SubsamplePlan.stride(int(arg))
        if kind == "explicit":
            return SubsamplePlan.explicit(int(v) for v in arg.split(",") if v != "")
        raise ValueError(f"unknown subsample plan {text!r}")


def _retained_positions(grid: CheckpointGrid, plan: SubsamplePlan) -> np.ndarray:
    n = len(grid)
    if plan.kind == "prefix":
        keep = np.arange(min(plan.n, n))
    elif plan.kind == "stride":
        if plan.n < 1:
            raise ValueError("stride must be >= 1")
        keep = np.arange(0, n, plan.n)
    elif plan.kind == "explicit":
        lookup = {v: i for i, v in enumerate(grid.indices)}
        unknown = [i for i in plan.indices if i not in lookup]
        if unknown:
            raise UnknownIndex(f"checkpoints {unknown} not in grid {grid.indices}")
        keep = np.array(sorted(lookup[i] for i in set(plan.indices)), dtype=np.int64)
    else:
        raise ValueError(f"unknown plan kind {plan.kind!r}")
    if keep.size < 2:
        raise EmptyGrid(
            f"plan {plan.kind} leaves {keep.size} checkpoint(s); at least 2 required"
        )
    return keep


def subsample_checkpoints(log: LossLog, plan: SubsamplePlan) -> LossLog:
    """New log with only the retained checkpoint columns; the input is unmodified.

    Checkpoint 0 is always kept (prefix/stride retain it by construction;
    explicit plans that drop it fail grid validation).
    """
    keep = _retained_positions(log.grid, plan)
    new_grid = CheckpointGrid(tuple(log.grid.indices[i] for i in keep))
    return LossLog(
        split=log.split,
        sample_ids=log.sample_ids.copy(),
        labels=log.labels.copy(),
        grid=new_grid,
        losses=log.losses[:, keep].copy(),
    )


def delta_trajectories(log: LossLog) -> DeltaMatrix:
    """Column t of the result is loss at retained checkpoint t+1 minus loss at
    retained checkpoint t."""
    return DeltaMatrix(
        sample_ids=log.sample_ids.copy(),
        labels=log.labels.copy(),
        deltas=np.diff(log.losses, axis=1),
    )
