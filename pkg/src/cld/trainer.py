"""Deterministic desk-scale trainer on synthetic Gaussian-mixture data.

The primary model is multinomial logistic regression (softmax regression):
it is convex, so smoothness/bounded-gradient conditions genuinely hold and
the convergence diagnostics in :mod:`cld.theory` are meaningful. A one
hidden-layer variant is available for non-convex experiments but is not
used by the verification suite.

Every logged number is fully determined by (dataset seed, train seed):
initialization is zeros by default (seeded Gaussian on request), batches
are drawn without replacement from a seeded permutation, and per-sample
losses are evaluated in ascending sample-id order at every checkpoint,
including checkpoint 0 (the pre-update model).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergedLoss, InvalidLog, UnknownIndex
from .losslog import CheckpointGrid, LossLog, Manifest, FORMAT_VERSION


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-mixture dataset: C isotropic clusters in R^d.

    class_means is (C, d); when None, means are drawn from the spec seed as
    mean_scale * standard normal. label_noise_fraction reassigns that share
    of train samples a uniformly random wrong label; the validation, query,
    and reference splits stay clean so they can act as generalization
    references.
    """

    num_classes: int = 5
    input_dim: int = 20
    noise_scale: float = 1.0
    n_train: int = 2000
    n_val: int = 500
    n_query: int = 200
    n_reference: int = 20000
    label_noise_fraction: float = 0.1
    seed: int = 0
    mean_scale: float = 1.0
    class_means: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_query, self.n_reference) <= 0:
            raise ValueError("all split sizes must be positive")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")
        if not 0.0 <= self.label_noise_fraction < 1.0:
            raise ValueError("label_noise_fraction must be in [0, 1)")
        if self.n_reference < 10 * self.n_train:
            raise ValueError("reference split must be >= 10x train size")
        if self.class_means is not None:
            m = np.asarray(self.class_means, dtype=np.float64)
            if m.shape != (self.num_classes, self.input_dim):
                raise ValueError(
                    f"class_means shape {m.shape} != ({self.num_classes}, {self.input_dim})"
                )

    def to_dict(self) -> dict:
        d = {
            "num_classes": self.num_classes,
            "input_dim": self.input_dim,
            "noise_scale": self.noise_scale,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_query": self.n_query,
            "n_reference": self.n_reference,
            "label_noise_fraction": self.label_noise_fraction,
            "seed": self.seed,
            "mean_scale": self.mean_scale,
        }
        if self.class_means is not None:
            d["class_means"] = [list(row) for row in self.class_means]
        return d

    @staticmethod
    def from_dict(raw: dict) -> "SyntheticSpec":
        means = raw.get("class_means")
        if means is not None:
            means = tuple(tuple(float(v) for v in row) for row in means)
        known = {k: raw[k] for k in raw if k != "class_means"}
        return SyntheticSpec(class_means=means, **known)


@dataclass
class Split:
    name: str
    x: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.x.shape[0])


@dataclass
class DatasetBundle:
    spec: SyntheticSpec
    train: Split
    validation: Split
    query: Split
    reference: Split
    clean_train_labels: np.ndarray
    noisy_train_mask: np.ndarray

    def split(self, name: str) -> Split:
        try:
            return {
                "train": self.train,
                "validation": self.validation,
                "query": self.query,
                "reference": self.reference,
            }[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None


def _balanced_class_counts(n: int, c: int) -> list[int]:
    base, extra = divmod(n, c)
    return [base + (1 if i < extra else 0) for i in range(c)]


def generate_dataset(spec: SyntheticSpec) -> DatasetBundle:
    """Seeded, reproducible draw of the four splits (train first, then
    validation, query, reference, each class by class)."""
    rng = np.random.default_rng(spec.seed)
    c, d = spec.num_classes, spec.input_dim
    if spec.class_means is not None:
        means = np.asarray(spec.class_means, dtype=np.float64)
    else:
        means = spec.mean_scale * rng.standard_normal((c, d))

    def draw(name: str, n: int) -> Split:
        xs, ys = [], []
        for cls, cnt in enumerate(_balanced_class_counts(n, c)):
            xs.append(means[cls] + spec.noise_scale * rng.standard_normal((cnt, d)))
            ys.append(np.full(cnt, cls, dtype=np.int64))
        return Split(name, np.vstack(xs), np.concatenate(ys), np.arange(n, dtype=np.int64))

    train = draw("train", spec.n_train)
    validation = draw("validation", spec.n_val)
    query = draw("query", spec.n_query)
    reference = draw("reference", spec.n_reference)

    clean = train.labels.copy()
    noisy_mask = np.zeros(spec.n_train, dtype=bool)
    n_noisy = int(np.floor(spec.label_noise_fraction * spec.n_train + 0.5))
    if n_noisy:
        flip = rng.permutation(spec.n_train)[:n_noisy]
        offsets = rng.integers(1, c, size=n_noisy)
        train.labels[flip] = (train.labels[flip] + offsets) % c
        noisy_mask[flip] = True
    return DatasetBundle(spec, train, validation, query, reference, clean, noisy_mask)


# --- models ---

@dataclass
class ModelParams:
    """Softmax-regression parameters."""

    weights: np.ndarray  # (C, d)
    biases: np.ndarray  # (C,)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.biases])

    @staticmethod
    def from_flat(flat: np.ndarray, num_classes: int, input_dim: int) -> "ModelParams":
        w = flat[: num_classes * input_dim].reshape(num_classes, input_dim)
        b = flat[num_classes * input_dim:]
        return ModelParams(w.copy(), b.copy())

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.biases.copy())


@dataclass
class MLPParams:
    """One hidden layer (tanh) variant; not used by the verification suite."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def copy(self) -> "MLPParams":
        return MLPParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def _logits(params, x: np.ndarray) -> np.ndarray:
    if isinstance(params, ModelParams):
        return x @ params.weights.T + params.biases
    h = np.tanh(x @ params.w1.T + params.b1)
    return h @ params.w2.T + params.b2


def predict_proba(params, x: np.ndarray) -> np.ndarray:
    z = _logits(params, x)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def per_sample_losses(params, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cross-entropy of each sample, computed in float64 with a stable
    log-sum-exp."""
    z = _logits(params, x)
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return lse - z[np.arange(x.shape[0]), labels]


def batch_gradient(params, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Mean cross-entropy gradient over the batch, as a flat vector."""
    m = x.shape[0]
    p = predict_proba(params, x)
    g = p
    g[np.arange(m), labels] -= 1.0
    if isinstance(params, ModelParams):
        gw = g.T @ x / m
        gb = g.mean(axis=0)
        return np.concatenate([gw.ravel(), gb])
    a1 = x @ params.w1.T + params.b1
    h = np.tanh(a1)
    gw2 = g.T @ h / m
    gb2 = g.mean(axis=0)
    gh = (g @ params.w2) * (1.0 - h * h)
    gw1 = gh.T @ x / m
    gb1 = gh.mean(axis=0)
    return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def per_sample_gradient(params, x: np.ndarray, label: int) -> np.ndarray:
    return batch_gradient(params, np.asarray(x, dtype=np.float64)[None, :], np.array([label]))


def reference_gradient(params, data: DatasetBundle) -> np.ndarray:
    """Population-risk gradient proxy: mean gradient over the frozen
    reference split."""
    ref = data.reference
    return batch_gradient(params, ref.x, ref.labels)


def evaluate(params, split: Split) -> tuple[float, float]:
    """(mean loss, accuracy) on a split; deterministic."""
    losses = per_sample_losses(params, split.x, split.labels)
    preds = np.argmax(_logits(params, split.x), axis=1)
    return float(losses.mean()), float(np.mean(preds == split.labels))


# --- training ---

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 40
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    record_parameter_snapshots: bool = False
    init: str = "zeros"  # or "gaussian" (seeded), for seed-stability studies
    init_scale: float = 0.01
    hidden_dim: int = 16  # one-hidden-layer variant only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError("init must be 'zeros' or 'gaussian'")


@dataclass
class TrainResult:
    params: ModelParams | MLPParams
    train_log: LossLog
    validation_log: LossLog | None
    query_log: LossLog | None
    mean_train_loss: np.ndarray  # over the trained subset, checkpoints 0..T
    snapshots: list[np.ndarray] | None
    subset_ids: np.ndarray
    config: TrainConfig


def _init_params(spec: SyntheticSpec, config: TrainConfig, model: str):
    rng = np.random.default_rng(config.seed)
    c, d = spec.num_classes, spec.input_dim
    if model == "softmax":
        if config.init == "zeros":
            return ModelParams(np.zeros((c, d)), np.zeros(c))
        return ModelParams(
            config.init_scale * rng.standard_normal((c, d)),
            config.init_scale * rng.standard_normal(c),
        )
    h = config.hidden_dim
    if config.init == "zeros":
        # zero hidden weights never break symmetry; always use the seeded draw
        pass
    return MLPParams(
        config.init_scale * rng.standard_normal((h, d)),
        config.init_scale * rng.standard_normal(h),
        config.init_scale * rng.standard_normal((c, h)),
        config.init_scale * rng.standard_normal(c),
    )


def train_and_log(
    data: DatasetBundle,
    config: TrainConfig,
    subset: Sequence[int] | None = None,
    log_splits: Sequence[str] = ("train", "validation"),
    model: str = "softmax",
) -> TrainResult:
    """Gradient descent with per-sample loss logging at checkpoints 0..T.

    ``subset`` restricts which train samples drive the updates; losses are
    still logged for the whole train split so trajectories remain
    comparable across subset choices. Full batch when batch_size is 0,
    otherwise seeded mini-batches without replacement.
    """
    if model not in ("softmax", "one_hidden"):
        raise ValueError("model must be 'softmax' or 'one_hidden'")
    if "train" not in log_splits:
        raise ValueError("log_splits must include 'train'")
    train = data.train
    if subset is None:
        rows = np.arange(len(train), dtype=np.int64)
    else:
        pos = {int(s): i for i, s in enumerate(train.sample_ids)}
        try:
            rows = np.array([pos[int(s)] for s in subset], dtype=np.int64)
        except KeyError as e:
            raise UnknownIndex(f"train sample id {e.args[0]} not found") from None
        if rows.size == 0:
            raise InvalidLog("subset must be non-empty")
    x_fit = train.x[rows]
    y_fit = train.labels[rows]

    params = _init_params(data.spec, config, model)
    rng = np.random.default_rng(config.seed)
    grid = CheckpointGrid(tuple(range(config.epochs + 1)))

    logged = {name: [] for name in log_splits}
    mean_fit_loss = []
    snapshots = [] if config.record_parameter_snapshots else None

    def checkpoint(epoch: int):
        for name in log_splits:
            sp = data.split(name)
            losses = per_sample_losses(params, sp.x, sp.labels)
            if not np.isfinite(losses).all():
                raise DivergedLoss(epoch, f"non-finite loss in split {name!r} at epoch {epoch}")
            logged[name].append(losses)
        fit_losses = per_sample_losses(params, x_fit, y_fit)
        if not np.isfinite(fit_losses).all():
            raise DivergedLoss(epoch)
        mean_fit_loss.append(float(fit_losses.mean()))
        if snapshots is not None:
            snapshots.append(params.flat().copy())

    checkpoint(0)
    eta = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        if config.batch_size <= 0 or config.batch_size >= rows.size:
            g = batch_gradient(params, x_fit, y_fit)
            step = eta * g
            if isinstance(params, ModelParams):
                cdim = data.spec.num_classes * data.spec.input_dim
                params.weights -= step[:cdim].reshape(params.weights.shape)
                params.biases -= step[cdim:]
            else:
                _apply_flat_step(params, step)
        else:
            perm = rng.permutation(rows.size)
            for start in range(0, rows.size, config.batch_size):
                idx = perm[start: start + config.batch_size]
                g = batch_gradient(params, x_fit[idx], y_fit[idx])
                step = eta * g
                if isinstance(params, ModelParams):
                    cdim = data.spec.num_classes * data.spec.input_dim
                    params.weights -= step[:cdim].reshape(params.weights.shape)
                    params.biases -= step[cdim:]
                else:
                    _apply_flat_step(params, step)
        checkpoint(epoch)

    def build_log(name: str) -> LossLog:
        sp = data.split(name)
        return LossLog(
            split=name,
            sample_ids=sp.sample_ids.copy(),
            labels=sp.labels.copy(),
            grid=grid,
            losses=np.column_stack(logged[name]),
        )

    return TrainResult(
        params=params,
        train_log=build_log("train"),
        validation_log=build_log("validation") if "validation" in log_splits else None,
        query_log=build_log("query") if "query" in log_splits else None,
        mean_train_loss=np.array(mean_fit_loss),
        snapshots=snapshots,
        subset_ids=train.sample_ids[rows].copy(),
        config=config,
    )


def _apply_flat_step(params: MLPParams, step: np.ndarray) -> None:
    sizes = [params.w1.size, params.b1.size, params.w2.size, params.b2.size]
    off = 0
    for arr, n in zip((params.w1, params.b1, params.w2, params.b2), sizes):
        arr -= step[off: off + n].reshape(arr.shape)
        off += n


def make_manifest(spec: SyntheticSpec, dataset_name: str = "synthetic-gaussian-mixture") -> Manifest:
    return Manifest(
        version=FORMAT_VERSION,
        dataset_name=dataset_name,
        num_classes=spec.num_classes,
        seed=spec.seed,
    )
