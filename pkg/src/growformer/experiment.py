"""Growth-experiment orchestration and report emission.

``run_growth_experiment`` replays the production protocol at desk scale:
grow a pretrained base with one or more plans, verify preservation (a
hard gate for the zero policies), continue training with snapshots at a
fixed cadence, compute the alignment snapshot series against the frozen
base, and run the trajectory-geometry and time-series analyses over it.

All emitted files are byte-stable for fixed inputs: floats are written
in shortest round-trip form and JSON keys are sorted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .alignment import AlignmentSnapshot, snapshot_alignment
from .checkpoint import Checkpoint
from .errors import ValidationError
from .growth import GrowthPlan, GrowthReport, grow_model, require_exact_preservation
from .model import heldout_loss
from .rng import derive_seed
from .seriesstats import fisher_g_test, harmonic_fit, scaling_law_fit
from .trajectory import TrajectoryPoint, pca_fit, trajectory_series
from .training import ExperimentConfig, TrainResult, heldout_sequences, train

_CONTINUED_STREAM = 2  # continued training draws an unseen sample stream

METRICS_COLUMNS = (
    "path,tokens,u_p,noc,up_pct,noc_pct,perf_pct,r,loss,ppl,r_g,r_e"
)


@dataclass
class ExperimentSeries:
    label: str
    plan: GrowthPlan
    growth_report: GrowthReport
    snapshots: list[AlignmentSnapshot]
    trajectory: list[TrajectoryPoint]
    fits: dict


def plan_label(plan: GrowthPlan) -> str:
    kind = plan.policy_kind
    if kind == "noise":
        kind = f"noise{plan.noise_fraction:g}"
    return f"{kind}-dm{plan.delta_m}-da{plan.delta_a}"


def continued_config(base_config: ExperimentConfig, budget: int, cadence: int) -> ExperimentConfig:
    """Continued-training configuration on a disjoint sample stream of
    the same language."""
    corpus = replace(base_config.corpus, stream=base_config.corpus.stream + _CONTINUED_STREAM)
    schedule = replace(base_config.schedule, steps=budget, snapshot_every=cadence)
    return replace(
        base_config, corpus=corpus, schedule=schedule, growth=None, growth_trigger=None
    )


def _fit_block(fn, *args, **kwargs) -> dict:
    try:
        result = fn(*args, **kwargs).to_dict()
        result.setdefault("degenerate", False)
        return result
    except ValidationError as exc:
        return {"degenerate": True, "reason": str(exc)}


def analyze_snapshot_series(
    base_ckpt: Checkpoint, series_ckpts: list[Checkpoint], heldout, subsample_seed: int = 0
) -> tuple[list[AlignmentSnapshot], list[TrajectoryPoint], dict]:
    """Alignment snapshots (first one is the reference), trajectory
    geometry, and the three series fits."""
    if len(series_ckpts) < 2:
        raise ValidationError("need at least 2 checkpoints to analyze a series")
    snapshots: list[AlignmentSnapshot] = []
    reference = None
    for ck in series_ckpts:
        snap = snapshot_alignment(
            base_ckpt.params,
            base_ckpt.model_config,
            ck.params,
            ck.model_config,
            heldout,
            tokens=ck.tokens,
            reference=reference,
            subsample_seed=subsample_seed,
        )
        if reference is None:
            reference = snap
        snapshots.append(snap)

    model = pca_fit(snapshots)
    trajectory = trajectory_series(model, snapshots)
    times_kilo = [s.tokens / 1000.0 for s in snapshots]
    r_values = [s.r for s in snapshots]
    fits = {
        "harmonic": _fit_block(harmonic_fit, times_kilo, r_values),
        "fisher_g": _fit_block(fisher_g_test, r_values, detrend="linear"),
        "scaling_law": _fit_block(scaling_law_fit, [(s.r, s.ppl) for s in snapshots]),
        "pca_variance_ratios": [float(x) for x in model.variance_ratios],
        "pca_loadings": [[float(x) for x in model.eigenvectors[:, j]] for j in range(2)],
    }
    return snapshots, trajectory, fits


def run_growth_experiment(
    base_ckpt: Checkpoint,
    plans: list[GrowthPlan],
    budget: int,
    cadence: int,
) -> dict[str, ExperimentSeries]:
    """Grow/verify/continue/analyze once per plan."""
    if base_ckpt.experiment is None:
        raise ValidationError("base checkpoint carries no experiment config")
    base_exp = ExperimentConfig.from_dict(base_ckpt.experiment)
    heldout = heldout_sequences(base_exp)
    out: dict[str, ExperimentSeries] = {}
    for plan in plans:
        label = plan_label(plan)
        new_params, new_config, report = grow_model(
            base_ckpt.params, base_ckpt.model_config, plan, probe=heldout
        )
        require_exact_preservation(report.max_output_deviation, plan)

        cont = continued_config(base_exp, budget, cadence)
        cont = replace(cont, model=new_config, seed=derive_seed(base_exp.seed, plan.seed))
        resume = Checkpoint(
            model_config=new_config,
            params=new_params,
            adam_m={k: np.zeros_like(p) for k, p in new_params.items()},
            adam_v={k: np.zeros_like(p) for k, p in new_params.items()},
            rng=_fresh_order_rng(cont),
            step=0,
            tokens=0,
            experiment=cont.to_dict(),
        )
        result = train(cont, resume=resume)
        snapshots, trajectory, fits = analyze_snapshot_series(
            base_ckpt, result.checkpoints, heldout
        )
        out[label] = ExperimentSeries(
            label=label,
            plan=plan,
            growth_report=report,
            snapshots=snapshots,
            trajectory=trajectory,
            fits=fits,
        )
    return out


def _fresh_order_rng(config: ExperimentConfig):
    from .rng import RngState

    return RngState(derive_seed(config.seed, 0x0D0E))


def _axis_order_label(d: int, m: int, a: int) -> str:
    dims = sorted((("D", d), ("M", m), ("A", a)), key=lambda kv: -kv[1])
    parts = [dims[0][0]]
    for (_, prev), (name, val) in zip(dims, dims[1:]):
        parts.append(("=" if val == prev else ">") + name)
    return "".join(parts)


def ablate_axes(base_ckpt: Checkpoint, budget: int, delta_total: int | None = None) -> list[dict]:
    """Four matched-budget growth settings: single-axis M, single-axis A,
    and both axes with either axis dominant. Each is grown guarded-zero,
    trained for the budget, and reports its final held-out perplexity."""
    if base_ckpt.experiment is None:
        raise ValidationError("base checkpoint carries no experiment config")
    base_exp = ExperimentConfig.from_dict(base_ckpt.experiment)
    heldout = heldout_sequences(base_exp)
    config = base_ckpt.model_config
    if budget < 1:
        raise ValidationError("budget must be at least one step")
    s = delta_total if delta_total is not None else max(8, config.ladder_m // 2)
    minor = max(1, round(s / 8))
    settings = [
        ("M", s, 0),
        ("A", 0, s),
        ("M+A", s - minor, minor),
        ("M+A", minor, s - minor),
    ]
    rows = []
    for axis, dm, da in settings:
        plan = GrowthPlan(dm, da, "guarded-zero", seed=derive_seed(base_exp.seed, dm * 1000 + da))
        new_params, new_config, report = grow_model(
            base_ckpt.params, config, plan, strict_hierarchy=False, probe=heldout[:2]
        )
        require_exact_preservation(report.max_output_deviation, plan)
        cadence = budget  # only the endpoint matters here
        cont = continued_config(base_exp, budget, cadence)
        cont = replace(cont, model=new_config, seed=derive_seed(base_exp.seed, plan.seed))
        resume = Checkpoint(
            model_config=new_config,
            params=new_params,
            adam_m={k: np.zeros_like(p) for k, p in new_params.items()},
            adam_v={k: np.zeros_like(p) for k, p in new_params.items()},
            rng=_fresh_order_rng(cont),
            experiment=cont.to_dict(),
        )
        result = train(cont, resume=resume)
        final_loss = heldout_loss(new_config, result.final.params, heldout)
        rows.append(
            {
                "axis": axis,
                "order": _axis_order_label(
                    new_config.hidden_size, new_config.ladder_m, new_config.ladder_a
                ),
                "m": new_config.ladder_m,
                "a": new_config.ladder_a,
                "ppl": float(np.exp(final_loss)),
            }
        )
    return rows


def adaptation_comparison(
    base_ckpt: Checkpoint,
    plan: GrowthPlan,
    steps: int = 1000,
    n_windows: int = 32,
) -> dict:
    """Capacity race on a fixed held-out set.

    Both arms continue training directly on ``n_windows`` held-out
    windows (cycled deterministically) for the same number of steps: the
    pre-growth model as-is versus the grown model. The returned losses
    are measured on those same windows, so the comparison isolates how
    much of the set each model has the capacity to absorb.
    """
    from .model import model_loss_and_grads
    from .training import adamw_step

    if base_ckpt.experiment is None:
        raise ValidationError("base checkpoint carries no experiment config")
    base_exp = ExperimentConfig.from_dict(base_ckpt.experiment)
    windows = heldout_sequences(base_exp, count=n_windows)
    lr = base_exp.optimizer.lr
    betas = base_exp.optimizer.betas
    wd = base_exp.optimizer.weight_decay

    def tune(config, params, m, v):
        params = {k: p.copy() for k, p in params.items()}
        for t in range(1, steps + 1):
            w = windows[(t - 1) % len(windows)]
            loss, grads = model_loss_and_grads(config, params, w)
            adamw_step(params, grads, m, v, t, lr * min(1.0, t / 50.0), betas, wd)
        return params

    before = heldout_loss(base_ckpt.model_config, base_ckpt.params, windows)
    tuned_base = tune(
        base_ckpt.model_config,
        base_ckpt.params,
        {k: p.copy() for k, p in base_ckpt.adam_m.items()},
        {k: p.copy() for k, p in base_ckpt.adam_v.items()},
    )
    base_after = heldout_loss(base_ckpt.model_config, tuned_base, windows)

    new_params, new_config, report = grow_model(
        base_ckpt.params, base_ckpt.model_config, plan, probe=windows[:1]
    )
    require_exact_preservation(report.max_output_deviation, plan)
    tuned_grown = tune(
        new_config,
        new_params,
        {k: np.zeros_like(p) for k, p in new_params.items()},
        {k: np.zeros_like(p) for k, p in new_params.items()},
    )
    grown_after = heldout_loss(new_config, tuned_grown, windows)
    return {
        "before": before,
        "ungrown_after": base_after,
        "grown_after": grown_after,
        "margin": base_after - grown_after,
    }


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def metrics_rows(series_by_label: dict[str, ExperimentSeries]) -> list[str]:
    lines = [METRICS_COLUMNS]
    for label in sorted(series_by_label):
        s = series_by_label[label]
        for snap, tp in zip(s.snapshots, s.trajectory):
            lines.append(
                ",".join(
                    [
                        label,
                        str(snap.tokens),
                        _fmt(snap.u_p),
                        _fmt(snap.noc),
                        _fmt(snap.up_pct),
                        _fmt(snap.noc_pct),
                        _fmt(snap.perf_pct),
                        _fmt(snap.r),
                        _fmt(snap.loss),
                        _fmt(snap.ppl),
                        _fmt(tp.r_g),
                        _fmt(tp.r_e),
                    ]
                )
            )
    return lines


def emit_reports(series_by_label: dict[str, ExperimentSeries], out_dir) -> list[Path]:
    """Write metrics.csv, per-plan trajectory.csv/fits.json, the growth
    report, and a combined summary. Returns the written paths."""
    if not series_by_label:
        raise ValidationError("no series to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_path = out / "metrics.csv"
    metrics_path.write_text("\n".join(metrics_rows(series_by_label)) + "\n", encoding="utf-8")
    written.append(metrics_path)

    growth_blob = {
        label: s.growth_report.to_dict() for label, s in series_by_label.items()
    }
    growth_path = out / "growth_report.json"
    growth_path.write_text(
        json.dumps(growth_blob, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    written.append(growth_path)

    combined_pairs = []
    for label in sorted(series_by_label):
        s = series_by_label[label]
        plan_dir = out / label
        plan_dir.mkdir(exist_ok=True)
        traj_lines = ["t,pc1,pc2,r_g,r_e"]
        for tp in s.trajectory:
            traj_lines.append(
                ",".join(
                    [str(tp.tokens), _fmt(float(tp.z[0])), _fmt(float(tp.z[1])),
                     _fmt(tp.r_g), _fmt(tp.r_e)]
                )
            )
        tpath = plan_dir / "trajectory.csv"
        tpath.write_text("\n".join(traj_lines) + "\n", encoding="utf-8")
        written.append(tpath)
        fpath = plan_dir / "fits.json"
        fpath.write_text(json.dumps(s.fits, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(fpath)
        combined_pairs.extend((snap.r, snap.ppl) for snap in s.snapshots)

    summary = {
        "plans": sorted(series_by_label),
        "combined_scaling_law": _fit_block(scaling_law_fit, combined_pairs),
        "final_loss_by_plan": {
            label: series_by_label[label].snapshots[-1].loss
            for label in sorted(series_by_label)
        },
    }
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    written.append(spath)
    return written
