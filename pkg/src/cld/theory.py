"""Empirical verification of the convergence analysis on synthetic runs.

Three measured checks, all with exact analytic gradients:

* gradient alignment per checkpoint: cosine of every coreset sample's
  gradient against the validation-average gradient; the alignment gap
  kappa_t is 1 minus the worst cosine;
* the subset-gradient chain  E_t <= B * sqrt(2 * kappa_t) + delta_t,
  where E_t is the distance from the coreset-average gradient to the
  reference-split gradient and delta_t the validation-to-reference gap;
* the convergence bound: the smallest reference-gradient norm along the
  run against  2 * R_0 / (eta T) + L eta B^2 + (B sqrt(2 kappa) + delta)^2,
  plus the per-step quadratic descent inequality it is built from.

B is the max per-sample gradient norm observed over coreset and validation
samples across checkpoints; kappa and delta enter
the final bound at their worst (max) checkpoint values. Checkpoints where
the validation gradient vanishes are flagged and skipped (cosines are
undefined there).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AllStepsZero, MissingSnapshots
from .losslog import delta_trajectories
from .scoring import cld_scores, validation_class_average
from .selection import allocate_quotas, select_topk
from .trainer import (
    DatasetBundle,
    ModelParams,
    SyntheticSpec,
    TrainConfig,
    TrainResult,
    batch_gradient,
    generate_dataset,
    per_sample_losses,
    train_and_log,
)

_GV_ZERO_TOL = 1e-12


def _softmax_per_sample_grads(params: ModelParams, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample flat gradients as one (M, P) matrix."""
    m = x.shape[0]
    z = x @ params.weights.T + params.biases
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    p[np.arange(m), labels] -= 1.0
    gw = (p[:, :, None] * x[:, None, :]).reshape(m, -1)
    return np.concatenate([gw, p], axis=1)


@dataclass
class CheckpointAlignment:
    t: int
    flagged: bool
    kappa: float
    min_cosine: float
    e_t: float
    delta_t: float
    gv_norm: float
    cosines: np.ndarray


@dataclass
class AlignmentReport:
    checkpoints: list[CheckpointAlignment]
    b_hat: float

    @property
    def unflagged(self) -> list[CheckpointAlignment]:
        return [c for c in self.checkpoints if not c.flagged]

    @property
    def kappa_max(self) -> float:
        return max(c.kappa for c in self.unflagged)

    @property
    def delta_max(self) -> float:
        return max(c.delta_t for c in self.checkpoints)

    def subset_gap_violations(self, tol: float = 1e-12) -> list[int]:
        """Checkpoints where E_t exceeds B*sqrt(2*kappa_t) + delta_t."""
        return [
            c.t
            for c in self.unflagged
            if c.e_t > self.b_hat * np.sqrt(2.0 * c.kappa) + c.delta_t + tol
        ]

    def to_dict(self) -> dict:
        return {
            "b_hat": self.b_hat,
            "checkpoints": [
                {
                    "t": c.t,
                    "flagged": c.flagged,
                    "kappa": c.kappa,
                    "min_cosine": c.min_cosine,
                    "e_t": c.e_t,
                    "delta_t": c.delta_t,
                    "gv_norm": c.gv_norm,
                }
                for c in self.checkpoints
            ],
        }


def alignment_diagnostics(
    result: TrainResult,
    coreset_ids: Sequence[int],
    data: DatasetBundle,
) -> AlignmentReport:
    """Per-checkpoint gradient-alignment measurements for a logged run."""
    if result.snapshots is None:
        raise MissingSnapshots("run was trained without parameter snapshots")
    coreset_ids = np.asarray(list(coreset_ids), dtype=np.int64)
    if coreset_ids.size == 0:
        raise ValueError("coreset must be non-empty")
    pos = {int(s): i for i, s in enumerate(data.train.sample_ids)}
    rows = np.array([pos[int(s)] for s in coreset_ids], dtype=np.int64)
    xc = data.train.x[rows]
    yc = data.train.labels[rows]
    val, ref = data.validation, data.reference
    spec = data.spec

    checkpoints: list[CheckpointAlignment] = []
    b_hat = 0.0
    for t, flat in enumerate(result.snapshots):
        params = ModelParams.from_flat(flat, spec.num_classes, spec.input_dim)
        gv = batch_gradient(params, val.x, val.labels)
        gref = batch_gradient(params, ref.x, ref.labels)
        grads = _softmax_per_sample_grads(params, xc, yc)
        val_grads = _softmax_per_sample_grads(params, val.x, val.labels)
        norms = np.linalg.norm(grads, axis=1)
        b_hat = max(b_hat, float(norms.max()), float(np.linalg.norm(val_grads, axis=1).max()))

        gamma = grads.mean(axis=0)
        e_t = float(np.linalg.norm(gamma - gref))
        delta_t = float(np.linalg.norm(gv - gref))
        gv_norm = float(np.linalg.norm(gv))
        flagged = gv_norm <= _GV_ZERO_TOL
        if flagged:
            cosines = np.zeros(0)
            kappa = 0.0
            min_cos = 1.0
        else:
            denom = norms * gv_norm
            safe = denom > 0.0
            cosines = np.zeros(norms.shape[0])
            cosines[safe] = (grads[safe] @ gv) / denom[safe]
            np.clip(cosines, -1.0, 1.0, out=cosines)
            min_cos = float(cosines.min())
            kappa = 1.0 - min_cos
        checkpoints.append(
            CheckpointAlignment(
                t=t,
                flagged=flagged,
                kappa=kappa,
                min_cosine=min_cos,
                e_t=e_t,
                delta_t=delta_t,
                gv_norm=gv_norm,
                cosines=cosines,
            )
        )
    return AlignmentReport(checkpoints=checkpoints, b_hat=b_hat)


def smoothness_estimate(
    snapshots: Sequence[np.ndarray],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    safety: float = 2.0,
) -> float:
    """Empirical smoothness constant along a parameter trajectory.

    Max over consecutive snapshot pairs of ||g(b) - g(a)|| / ||b - a||
    (zero-displacement pairs skipped), times a safety factor.
    """
    if len(snapshots) < 2:
        raise MissingSnapshots("need at least two snapshots")
    best = None
    for a, b in zip(snapshots, snapshots[1:]):
        disp = float(np.linalg.norm(b - a))
        if disp == 0.0:
            continue
        ratio = float(np.linalg.norm(grad_fn(b) - grad_fn(a))) / disp
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise AllStepsZero("all consecutive snapshots coincide; no displacement to measure")
    return safety * best


@dataclass
class BoundReport:
    l_hat: float
    eta: float
    epochs: int
    r0: float
    b_hat: float
    kappa: float
    delta: float
    measured_min_grad_sq: float
    bound: float
    slack: float
    descent_max_violation: float
    descent_ok: bool
    subset_gap_violations: list[int]
    eta_warning: bool

    @property
    def bound_holds(self) -> bool:
        return self.slack >= 0.0

    def to_dict(self) -> dict:
        return {
            "l_hat": self.l_hat,
            "eta": self.eta,
            "epochs": self.epochs,
            "r0": self.r0,
            "b_hat": self.b_hat,
            "kappa": self.kappa,
            "delta": self.delta,
            "measured_min_grad_sq": self.measured_min_grad_sq,
            "bound": self.bound,
            "slack": self.slack,
            "bound_holds": self.bound_holds,
            "descent_max_violation": self.descent_max_violation,
            "descent_ok": self.descent_ok,
            "subset_gap_violations": self.subset_gap_violations,
            "eta_warning": self.eta_warning,
        }


def theorem_bound_check(
    result: TrainResult,
    data: DatasetBundle,
    l_hat: float,
    eta: float,
    descent_tol: float = 1e-9,
) -> BoundReport:
    """Check the convergence bound and its per-step descent inequality on a
    snapshot-logged coreset run, using the reference split as the population
    risk. The infimum risk is taken as 0 (cross-entropy is non-negative)."""
    if result.snapshots is None:
        raise MissingSnapshots("run was trained without parameter snapshots")
    align = alignment_diagnostics(result, result.subset_ids, data)
    spec = data.spec
    ref = data.reference
    pos = {int(s): i for i, s in enumerate(data.train.sample_ids)}
    rows = np.array([pos[int(s)] for s in result.subset_ids], dtype=np.int64)
    xc, yc = data.train.x[rows], data.train.labels[rows]

    t_count = len(result.snapshots)
    risks = np.zeros(t_count)
    ref_grads = []
    gammas = []
    for t, flat in enumerate(result.snapshots):
        params = ModelParams.from_flat(flat, spec.num_classes, spec.input_dim)
        risks[t] = float(per_sample_losses(params, ref.x, ref.labels).mean())
        ref_grads.append(batch_gradient(params, ref.x, ref.labels))
        gammas.append(batch_gradient(params, xc, yc))

    worst = 0.0
    for t in range(t_count - 1):
        rhs = (
            risks[t]
            - eta * float(ref_grads[t] @ gammas[t])
            + 0.5 * l_hat * eta * eta * float(gammas[t] @ gammas[t])
        )
        worst = max(worst, risks[t + 1] - rhs)

    grad_sq = np.array([float(g @ g) for g in ref_grads[:-1]])
    measured = float(grad_sq.min())
    kappa = align.kappa_max
    delta = align.delta_max
    b_hat = align.b_hat
    epochs = t_count - 1
    bound = (
        2.0 * risks[0] / (eta * epochs)
        + l_hat * eta * b_hat * b_hat
        + (b_hat * np.sqrt(2.0 * kappa) + delta) ** 2
    )
    return BoundReport(
        l_hat=l_hat,
        eta=eta,
        epochs=epochs,
        r0=float(risks[0]),
        b_hat=b_hat,
        kappa=kappa,
        delta=delta,
        measured_min_grad_sq=measured,
        bound=float(bound),
        slack=float(bound - measured),
        descent_max_violation=float(worst),
        descent_ok=worst <= descent_tol,
        subset_gap_violations=align.subset_gap_violations(),
        eta_warning=eta > 1.0 / l_hat,
    )


@dataclass
class TheoryStudy:
    seed: int
    l_hat: float
    eta: float
    top_ids: np.ndarray
    bottom_ids: np.ndarray
    top_alignment: AlignmentReport
    bottom_alignment: AlignmentReport
    bound: BoundReport


def run_theory_study(
    seed: int = 0,
    spec: SyntheticSpec | None = None,
    epochs: int = 30,
    probe_learning_rate: float = 0.2,
    budget_fraction: float = 0.10,
) -> TheoryStudy:
    """Full pipeline behind the `theory-check` command.

    A probe run on the full data provides the smoothness estimate and the
    scores; the study then retrains full-batch at eta = 0.5 / L-hat on the
    top- and bottom-scoring class-balanced coresets and runs the bound
    checks on the top run.
    """
    spec = spec or SyntheticSpec(seed=seed)
    if spec.seed != seed:
        spec = SyntheticSpec(**{**spec.to_dict(), "seed": seed})
    data = generate_dataset(spec)

    probe_cfg = TrainConfig(
        learning_rate=probe_learning_rate,
        epochs=epochs,
        record_parameter_snapshots=True,
        seed=seed,
    )
    probe = train_and_log(data, probe_cfg)
    l_hat = smoothness_estimate(
        probe.snapshots,
        lambda flat: batch_gradient(
            ModelParams.from_flat(flat, spec.num_classes, spec.input_dim),
            data.reference.x,
            data.reference.labels,
        ),
    )
    eta = 0.5 / l_hat

    scores = cld_scores(
        delta_trajectories(probe.train_log),
        validation_class_average(delta_trajectories(probe.validation_log)),
        mode="per_class",
    )
    sizes = {int(c): int(n) for c, n in zip(*np.unique(scores.labels, return_counts=True))}
    quotas = allocate_quotas(max(1, int(round(budget_fraction * len(scores)))), sizes)
    top = select_topk(scores, quotas)
    flipped = type(scores)(scores.sample_ids, scores.labels, -scores.scores, scores.degenerate)
    bottom = select_topk(flipped, quotas)

    cfg = TrainConfig(learning_rate=eta, epochs=epochs, record_parameter_snapshots=True, seed=seed)
    top_run = train_and_log(data, cfg, subset=top.sample_ids)
    bottom_run = train_and_log(data, cfg, subset=bottom.sample_ids)

    return TheoryStudy(
        seed=seed,
        l_hat=l_hat,
        eta=eta,
        top_ids=top.sample_ids,
        bottom_ids=bottom.sample_ids,
        top_alignment=alignment_diagnostics(top_run, top.sample_ids, data),
        bottom_alignment=alignment_diagnostics(bottom_run, bottom.sample_ids, data),
        bound=theorem_bound_check(top_run, data, l_hat, eta),
    )
