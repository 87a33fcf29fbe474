"""Command-line interface.

Subcommands cover the whole pipeline: synthetic training with loss logging
(`train-synth`), scoring (`score`), coreset selection (`select`),
checkpoint subsampling (`subsample`), score comparison (`score-mae`), the
compute/storage cost model (`cost`), convergence diagnostics
(`theory-check`), and the attribution studies (`lds`, `brittleness`).

Every subcommand is deterministic given its inputs and seed; the default
seed comes from the CLD_SEED environment variable (0 if unset). Heavy
imports happen after --threads is applied so the BLAS worker cap takes
effect.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _default_seed() -> int:
    return int(os.environ.get("CLD_SEED", "0"))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="seed (default: $CLD_SEED or 0)")
    p.add_argument("--format", choices=("table", "json"), default="table")


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="cld", description=__doc__)
    root.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-synth", help="train the synthetic model and write loss logs")
    p.add_argument("--spec", type=Path, default=None, help="JSON file with dataset spec fields")
    p.add_argument("--config", type=Path, default=None, help="JSON file with train config fields")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--snapshots", action="store_true", help="also write parameter snapshots")
    _add_common(p)

    p = sub.add_parser("score", help="score train samples from a loss-log directory")
    p.add_argument("logdir", type=Path)
    p.add_argument("--mode", choices=("per-class", "global"), default="per-class")
    p.add_argument("--subsample", default=None, help="prefix=N | stride=S | explicit=I,J,...")
    p.add_argument("--out", type=Path, required=True, help="output score CSV")
    _add_common(p)

    p = sub.add_parser("select", help="build a coreset from a score table")
    p.add_argument("scores", type=Path, help="score CSV")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--total", type=int, default=None)
    p.add_argument("--per-class", default=None, help='quotas like "0=3,1=2"')
    p.add_argument("--method", choices=("topk", "ccs", "random"), default="topk")
    p.add_argument("--bins", type=int, default=50, help="ccs: number of score bins")
    p.add_argument("--prune", type=float, default=0.1, help="ccs: hardest fraction to drop")
    p.add_argument("--out", type=Path, required=True, help="output coreset CSV")
    _add_common(p)

    p = sub.add_parser("subsample", help="write a checkpoint-subsampled copy of a loss log")
    p.add_argument("logdir", type=Path)
    p.add_argument("--plan", required=True, help="prefix=N | stride=S | explicit=I,J,...")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("score-mae", help="mean absolute difference between two score tables")
    p.add_argument("table_a", type=Path)
    p.add_argument("table_b", type=Path)
    _add_common(p)

    p = sub.add_parser("cost", help="compute/storage cost model")
    p.add_argument("--method", default="all", help="method name or 'all'")
    p.add_argument("--preset", default="imagenet1k-10pct", choices=("imagenet1k-10pct", "none"))
    p.add_argument("--param", action="append", default=[], help="override, e.g. num_train=50000")
    p.add_argument("--unit", choices=("flops", "1e15", "1e18"), default="1e15")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("theory-check", help="run convergence diagnostics on a synthetic study")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--train-size", type=int, default=1000)
    p.add_argument("--out", type=Path, default=None, help="write the full JSON report here")
    _add_common(p)

    p = sub.add_parser("lds", help="subset-retraining attribution study")
    p.add_argument("--subsets", type=int, default=20)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--retrain-seeds", default="101,202,303")
    p.add_argument("--train-size", type=int, default=400)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--out", type=Path, default=None, help="output directory for CSV + JSON")
    _add_common(p)

    p = sub.add_parser("brittleness", help="prediction flips after removing top-scored samples")
    p.add_argument("--k", default=None, help="comma-separated removal counts")
    p.add_argument("--k-fractions", default="0.0,0.1", help="removal counts as train fractions")
    p.add_argument("--policies", default="cld_topk,random")
    p.add_argument("--retrain-seeds", default="1,2,3,4,5")
    p.add_argument("--train-size", type=int, default=400)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--out", type=Path, default=None, help="output directory for CSV + JSON")
    _add_common(p)

    return root


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _harness_spec(train_size: int, seed: int):
    from .trainer import SyntheticSpec

    return SyntheticSpec(
        n_train=train_size,
        n_val=max(50, train_size // 4),
        n_query=max(40, train_size // 10),
        n_reference=10 * train_size,
        seed=seed,
    )


def _cmd_train_synth(args) -> int:
    from .losslog import write_losslog
    from .trainer import SyntheticSpec, TrainConfig, generate_dataset, make_manifest, train_and_log

    seed = args.seed if args.seed is not None else _default_seed()
    spec_kv = _load_json(args.spec)
    cfg_kv = _load_json(args.config)
    if args.seed is not None or "seed" not in spec_kv:
        spec_kv["seed"] = seed
    if args.seed is not None or "seed" not in cfg_kv:
        cfg_kv["seed"] = seed
    if args.snapshots:
        cfg_kv["record_parameter_snapshots"] = True
    spec = SyntheticSpec.from_dict(spec_kv)
    config = TrainConfig(**cfg_kv)

    data = generate_dataset(spec)
    result = train_and_log(data, config)
    out = Path(args.out)
    write_losslog(make_manifest(spec), result.train_log, result.validation_log, out)
    if result.snapshots is not None:
        width = result.snapshots[0].size
        lines = ["checkpoint," + ",".join(f"p{i}" for i in range(width))]
        for t, flat in enumerate(result.snapshots):
            lines.append(f"{t}," + ",".join(format(v, ".17g") for v in flat))
        (out / "snapshots.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    summary = {
        "out": str(out),
        "train_samples": len(result.train_log.sample_ids),
        "validation_samples": len(result.validation_log.sample_ids),
        "checkpoints": result.train_log.num_checkpoints,
        "seed": seed,
    }
    if args.format == "json":
        print(json.dumps(summary))
    else:
        print(f"wrote loss logs for {summary['train_samples']} train / "
              f"{summary['validation_samples']} validation samples to {out}")
    return 0


def _cmd_score(args) -> int:
    from .losslog import SubsamplePlan, delta_trajectories, load_losslog, subsample_checkpoints
    from .scoring import cld_scores, validation_class_average

    _, train, val = load_losslog(args.logdir)
    if args.subsample:
        plan = SubsamplePlan.parse(args.subsample)
        train = subsample_checkpoints(train, plan)
        val = subsample_checkpoints(val, plan)
    mode = "per_class" if args.mode == "per-class" else "global"
    table = cld_scores(delta_trajectories(train), validation_class_average(delta_trajectories(val)), mode)
    table.to_csv(args.out)
    if args.format == "json":
        print(json.dumps({"out": str(args.out), "samples": len(table), "mode": mode,
                          "degenerate": int(table.degenerate.sum())}))
    else:
        print(f"wrote {len(table)} scores to {args.out}")
    return 0


def _parse_per_class(text: str) -> dict[int, int]:
    quotas = {}
    for part in text.split(","):
        c, _, k = part.partition("=")
        quotas[int(c)] = int(k)
    return quotas


def _cmd_select(args) -> int:
    from .scoring import ScoreTable
    from .selection import Budget, ccs_stratified, random_coreset, select_topk

    seed = args.seed if args.seed is not None else _default_seed()
    table = ScoreTable.from_csv(args.scores)
    import numpy as np

    labels, counts = np.unique(table.labels, return_counts=True)
    sizes = {int(c): int(n) for c, n in zip(labels, counts)}
    chosen = [v is not None for v in (args.fraction, args.total, args.per_class)]
    if sum(chosen) != 1:
        raise SystemExit("select: give exactly one of --fraction / --total / --per-class")
    if args.fraction is not None:
        budget = Budget.from_fraction(args.fraction)
    elif args.total is not None:
        budget = Budget.from_total(args.total)
    else:
        budget = Budget.from_per_class(_parse_per_class(args.per_class))
    quotas = budget.resolve(sizes)
    if args.method == "topk":
        coreset = select_topk(table, quotas)
    elif args.method == "random":
        coreset = random_coreset(table, quotas, seed=seed)
    else:
        coreset = ccs_stratified(
            table, k=sum(quotas.values()), num_bins=args.bins,
            prune_hardest_fraction=args.prune, seed=seed,
        )
    coreset.write(args.out)
    if args.format == "json":
        print(json.dumps({"out": str(args.out), "size": len(coreset),
                          "provenance": coreset.provenance,
                          "quotas": {str(c): k for c, k in sorted(coreset.per_class.items())}}))
    else:
        print(f"wrote coreset of {len(coreset)} samples to {args.out}")
    return 0


def _cmd_subsample(args) -> int:
    from .losslog import SubsamplePlan, load_losslog, subsample_checkpoints, write_losslog

    manifest, train, val = load_losslog(args.logdir)
    plan = SubsamplePlan.parse(args.plan)
    sub_train = subsample_checkpoints(train, plan)
    write_losslog(manifest, sub_train, subsample_checkpoints(val, plan), args.out)
    if args.format == "json":
        print(json.dumps({"out": str(args.out), "plan": args.plan,
                          "checkpoints": sub_train.num_checkpoints}))
    else:
        print(f"wrote subsampled logs ({args.plan}) to {args.out}")
    return 0


def _cmd_score_mae(args) -> int:
    from .scoring import ScoreTable, score_mae

    mae = score_mae(ScoreTable.from_csv(args.table_a), ScoreTable.from_csv(args.table_b))
    if args.format == "json":
        print(json.dumps({"mae": mae}))
    else:
        print(f"score MAE: {mae:.17g}")
    return 0


def _parse_param(kv: str):
    name, _, raw = kv.partition("=")
    try:
        value = int(raw)
    except ValueError:
        value = float(raw)
    return name, value


def _cmd_cost(args) -> int:
    from .costmodel import (
        DISPLAY_UNITS,
        METHODS,
        PRESETS,
        ScenarioParams,
        canonical_method,
        compute_cost,
    )

    params = PRESETS[args.preset]() if args.preset != "none" else ScenarioParams()
    overrides = dict(_parse_param(kv) for kv in args.param)
    if overrides:
        params = params.with_overrides(**overrides)
    methods = list(METHODS) if args.method == "all" else [canonical_method(args.method)]
    reports = [compute_cost(m, params) for m in methods]
    div = DISPLAY_UNITS[args.unit]

    if args.format == "json":
        print(json.dumps([r.to_dict(args.unit) for r in reports], indent=2))
        return 0
    if args.format == "csv":
        print("method,total,unit_divisor,storage_bytes")
        for r in reports:
            storage = ";".join(f"{k}={v}" for k, v in r.storage_variants.items())
            print(f"{r.method},{r.total_flops / div:.3f},{div},{storage}")
        return 0
    unit_label = {"flops": "FLOPs", "1e15": "PFLOPs (1e15)", "1e18": "EFLOPs (1e18)"}[args.unit]
    print(f"{'method':<16} {'total ' + unit_label:>22}   storage")
    for r in reports:
        storage = ", ".join(
            f"{k}={v / 1e9:.3f} GB" if v >= 1e7 else f"{k}={v} B"
            for k, v in r.storage_variants.items()
        )
        print(f"{r.method:<16} {r.total_flops / div:>22,.3f}   {storage}")
        for label, v in r.flop_terms:
            print(f"    {label:<44} {v / div:>14,.3f}")
        for label in r.excluded_terms:
            print(f"    excluded: {label}")
        for note in r.notes:
            print(f"    note: {note}")
    return 0


def _cmd_theory_check(args) -> int:
    from .theory import run_theory_study

    seed = args.seed if args.seed is not None else _default_seed()
    spec = _harness_spec(args.train_size, seed)
    study = run_theory_study(seed=seed, spec=spec, epochs=args.epochs)
    bound = study.bound
    rows = [
        ("subset-gradient gap holds at every unflagged checkpoint",
         not bound.subset_gap_violations),
        ("per-step descent inequality within 1e-9", bound.descent_ok),
        ("convergence bound holds with positive slack", bound.slack > 0.0),
    ]
    ok = all(passed for _, passed in rows)
    payload = {
        "seed": seed,
        "l_hat": study.l_hat,
        "eta": study.eta,
        "checks": {name: passed for name, passed in rows},
        "bound_report": bound.to_dict(),
        "top_alignment": study.top_alignment.to_dict(),
        "bottom_alignment": study.bottom_alignment.to_dict(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(f"smoothness estimate {study.l_hat:.6g}, step size {study.eta:.6g}")
        for name, passed in rows:
            print(f"{'PASS' if passed else 'FAIL'}  {name}")
        print(f"bound {bound.bound:.6g} vs measured {bound.measured_min_grad_sq:.6g} "
              f"(slack {bound.slack:.6g})")
    return 0 if ok else 1


def _cmd_lds(args) -> int:
    from .attribution import SubsetPlan, lds_evaluate
    from .trainer import TrainConfig, generate_dataset

    seed = args.seed if args.seed is not None else _default_seed()
    data = generate_dataset(_harness_spec(args.train_size, seed))
    plan = SubsetPlan(
        num_subsets=args.subsets,
        alpha=args.alpha,
        retrain_seeds=tuple(int(s) for s in args.retrain_seeds.split(",")),
        base_seed=seed,
    )
    report = lds_evaluate(data, plan, TrainConfig(epochs=args.epochs, seed=seed))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["query_id,lds"]
        for q, v in zip(report.query_ids, report.per_query):
            lines.append(f"{int(q)},{'' if v is None else format(v, '.17g')}")
        (out / "lds.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        (out / "lds.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.format == "json":
        print(json.dumps(report.to_dict()))
    else:
        print(f"mean LDS over {len(report.defined)} defined queries: {report.mean:.4f}")
    return 0


def _cmd_brittleness(args) -> int:
    from .attribution import brittleness
    from .trainer import TrainConfig, generate_dataset

    seed = args.seed if args.seed is not None else _default_seed()
    data = generate_dataset(_harness_spec(args.train_size, seed))
    if args.k:
        ks = [int(v) for v in args.k.split(",")]
    else:
        ks = [int(round(float(v) * args.train_size)) for v in args.k_fractions.split(",")]
    report = brittleness(
        data,
        ks,
        policies=tuple(args.policies.split(",")),
        train_config=TrainConfig(epochs=args.epochs, seed=seed),
        seeds=tuple(int(s) for s in args.retrain_seeds.split(",")),
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["policy,k,flip_fraction"]
        for policy in report.policies:
            for k, v in zip(report.k_values, report.flip_fraction[policy]):
                lines.append(f"{policy},{k},{format(v, '.17g')}")
        (out / "brittleness.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        (out / "brittleness.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.format == "json":
        print(json.dumps(report.to_dict()))
    else:
        for policy in report.policies:
            row = ", ".join(
                f"k={k}: {v:.3f}" for k, v in zip(report.k_values, report.flip_fraction[policy])
            )
            print(f"{policy:<10} {row}")
    return 0


_COMMANDS = {
    "train-synth": _cmd_train_synth,
    "score": _cmd_score,
    "select": _cmd_select,
    "subsample": _cmd_subsample,
    "score-mae": _cmd_score_mae,
    "cost": _cmd_cost,
    "theory-check": _cmd_theory_check,
    "lds": _cmd_lds,
    "brittleness": _cmd_brittleness,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    from .errors import CldError

    try:
        return _COMMANDS[args.command](args)
    except CldError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
