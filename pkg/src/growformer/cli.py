"""Command-line surface.

Subcommands: train, grow, verify, analyze, fit-scaling, periodicity,
flops, ablate. Exit codes: 0 success, 1 validation failure, 2 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import NumericError, ValidationError
from .experiment import ablate_axes, analyze_snapshot_series, emit_reports
from .flops import breakdown_csv_rows, model_flops
from .growth import GrowthPlan, grow_model, verify_function_preservation
from .model import ModelConfig
from .seriesstats import fisher_g_test, harmonic_fit, scaling_law_fit
from .training import ExperimentConfig, heldout_sequences, train


def _load_experiment_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _load_model_config(path: str) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    if "model" in blob:
        blob = blob["model"]
    return ModelConfig.from_dict(blob)


def _cmd_train(args) -> int:
    config = _load_experiment_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resume = load_checkpoint(args.resume) if args.resume else None
    result = train(config, resume=resume)
    for ck in result.checkpoints:
        save_checkpoint(ck, out / f"step{ck.step:08d}.nxf")
    log_lines = ["step,tokens,train_loss,heldout_loss"]
    for row in result.log:
        log_lines.append(f"{row.step},{row.tokens},{row.train_loss!r},{row.heldout_loss!r}")
    (out / "train_log.csv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    print(f"wrote {len(result.checkpoints)} checkpoints to {out}")
    return 0


def _parse_policy(text: str) -> str:
    if text in ("strict-zero", "guarded-zero") or text.startswith("noise:"):
        return text
    raise ValidationError(f"unknown init policy {text!r}")


def _cmd_grow(args) -> int:
    ck = load_checkpoint(args.ckpt)
    plan = GrowthPlan(args.dm, args.da, _parse_policy(args.init), seed=args.seed)
    probe = None
    if ck.experiment is not None:
        probe = heldout_sequences(ExperimentConfig.from_dict(ck.experiment), count=4)
    new_params, new_config, report = grow_model(
        ck.params, ck.model_config, plan, strict_hierarchy=not args.permissive, probe=probe
    )
    grown = Checkpoint(
        model_config=new_config,
        params=new_params,
        adam_m={k: np.zeros_like(p) for k, p in new_params.items()},
        adam_v={k: np.zeros_like(p) for k, p in new_params.items()},
        rng=ck.rng,
        step=ck.step,
        tokens=ck.tokens,
        experiment=ck.experiment,
    )
    save_checkpoint(grown, args.out)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0


def _cmd_verify(args) -> int:
    old = load_checkpoint(args.old)
    new = load_checkpoint(args.new)
    if old.experiment is not None:
        probe = heldout_sequences(ExperimentConfig.from_dict(old.experiment), count=8)
    else:
        raise ValidationError("old checkpoint carries no experiment config for probes")
    deviation = verify_function_preservation(
        old.params, old.model_config, new.params, new.model_config, probe
    )
    print(f"max logit deviation: {deviation!r}")
    if args.expect_zero and deviation != 0.0:
        raise NumericError(f"expected exact preservation, got deviation {deviation!r}")
    return 0


def _cmd_analyze(args) -> int:
    base = load_checkpoint(args.base)
    paths = sorted(Path(args.series).glob("*.nxf"))
    if not paths:
        raise ValidationError(f"no .nxf checkpoints found in {args.series}")
    series = [load_checkpoint(p) for p in paths]
    series.sort(key=lambda ck: ck.step)
    if base.experiment is None:
        raise ValidationError("base checkpoint carries no experiment config")
    heldout = heldout_sequences(ExperimentConfig.from_dict(base.experiment))
    snapshots, trajectory, fits = analyze_snapshot_series(base, series, heldout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["tokens,u_p,noc,up_pct,noc_pct,perf_pct,r,loss,ppl,r_g,r_e"]
    for snap, tp in zip(snapshots, trajectory):
        lines.append(
            ",".join(
                [str(snap.tokens)]
                + [repr(x) for x in (snap.u_p, snap.noc, snap.up_pct, snap.noc_pct,
                                     snap.perf_pct, snap.r, snap.loss, snap.ppl,
                                     tp.r_g, tp.r_e)]
            )
        )
    (out / "alignment.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "fits.json").write_text(json.dumps(fits, sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")
    print(f"analyzed {len(snapshots)} snapshots into {out}")
    return 0


def _read_metrics_csv(path: str) -> dict[str, list[float]]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    cols: dict[str, list] = {h: [] for h in header}
    for line in lines[1:]:
        for h, cell in zip(header, line.split(",")):
            cols[h].append(cell)
    return cols


def _cmd_fit_scaling(args) -> int:
    cols = _read_metrics_csv(args.metrics)
    pairs = [(float(r), float(p)) for r, p in zip(cols["r"], cols["ppl"])]
    fit = scaling_law_fit(pairs)
    print(json.dumps(fit.to_dict(), sort_keys=True, indent=2))
    return 0


def _cmd_periodicity(args) -> int:
    cols = _read_metrics_csv(args.metrics)
    tokens = [float(t) / 1000.0 for t in cols["tokens"]]
    r = [float(x) for x in cols["r"]]
    out = {
        "harmonic": harmonic_fit(tokens, r).to_dict(),
        "fisher_g": fisher_g_test(r, detrend=args.detrend).to_dict(),
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_flops(args) -> int:
    config = _load_model_config(args.config)
    name = Path(args.config).stem
    for line in breakdown_csv_rows([(name, config)], seq_len=args.seq_len):
        print(line)
    return 0


def _cmd_ablate(args) -> int:
    ck = load_checkpoint(args.ckpt)
    rows = ablate_axes(ck, budget=args.budget, delta_total=args.delta_total)
    print("axis,order,m,a,ppl")
    for row in rows:
        print(f"{row['axis']},{row['order']},{row['m']},{row['a']},{row['ppl']!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="growformer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("grow", help="grow a checkpoint along both width axes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dm", type=int, required=True)
    p.add_argument("--da", type=int, required=True)
    p.add_argument("--init", required=True,
                   help="strict-zero | guarded-zero | noise:<fraction>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--permissive", action="store_true",
                   help="allow hierarchy violations (axis ablations)")
    p.set_defaults(fn=_cmd_grow)

    p = sub.add_parser("verify", help="max logit deviation between two checkpoints")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--expect-zero", action="store_true")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("analyze", help="alignment/trajectory/fits for a snapshot series")
    p.add_argument("--base", required=True)
    p.add_argument("--series", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("fit-scaling", help="fit ln(ppl) ~ |ln(r)| from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.set_defaults(fn=_cmd_fit_scaling)

    p = sub.add_parser("periodicity", help="harmonic + spectral tests on the r series")
    p.add_argument("--metrics", required=True)
    p.add_argument("--detrend", choices=("linear", "none"), default="linear")
    p.set_defaults(fn=_cmd_periodicity)

    p = sub.add_parser("flops", help="per-token FLOP breakdown for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seq-len", type=int, default=None)
    p.set_defaults(fn=_cmd_flops)

    p = sub.add_parser("ablate", help="axis-ablation table from a base checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--delta-total", type=int, default=None)
    p.set_defaults(fn=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
