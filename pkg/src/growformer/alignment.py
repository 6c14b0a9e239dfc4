"""Nonparametric alignment statistics between a frozen base model and a
grown model under continued training.

Two distribution statistics drive everything:

* ``noc``       - histogram intersection of two weight populations
                  (shared equal-width bins over the union range).
* ``u_p_score`` - two-sided Mann-Whitney p-value locating the new-block
                  entries against the frozen base distribution.

Their signed shifts relative to a reference snapshot combine into the
scalar radial indicator r = sqrt(up_pct^2 + noc_pct^2); small r means the
grown model's weight distribution still looks like the base model's.

Sample semantics: ``noc`` compares the frozen base projection entries
against *all* projection entries of the current model, while ``u_p``
compares only the entries that did not exist before the growth step
against the frozen base distribution. Populations above 10^5 entries are
subsampled with a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .growth import GrowthPlan, new_block_slices, projection_param_keys
from .model import ModelConfig, heldout_loss
from .rng import RngState, subsample

SUBSAMPLE_LIMIT = 100_000
DEFAULT_BINS = 128


@dataclass
class WeightSample:
    """A flat population of parameter values with provenance."""

    values: np.ndarray
    source: str
    subsample_seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size == 0:
            raise ValidationError(f"weight sample {self.source!r} is empty")
        if not np.isfinite(self.values).all():
            raise ValidationError(f"weight sample {self.source!r} has non-finite entries")


def noc(f_sample: WeightSample, g_sample: WeightSample, bins: int = DEFAULT_BINS) -> float:
    """Histogram overlap coefficient in [0, 1]; symmetric in its arguments."""
    if bins < 2:
        raise ValidationError(f"need at least 2 bins, got {bins}")
    f = f_sample.values
    g = g_sample.values
    lo = min(f.min(), g.min())
    hi = max(f.max(), g.max())
    if lo == hi:
        # both samples are the same constant
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    pf, _ = np.histogram(f, bins=edges)
    pg, _ = np.histogram(g, bins=edges)
    # integer cross-products keep the sum exact (1.0 for equal histograms)
    overlap = np.minimum(pf * g.size, pg * f.size).sum()
    return float(overlap / (f.size * g.size))


def _tie_averaged_ranks(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fractional ranks (1-based) and the tie-group sizes."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    ties = []
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        ties.append(j - i + 1)
        i = j + 1
    return ranks, np.asarray(ties, dtype=np.float64)


def _exact_u_counts(n1: int, n2: int) -> np.ndarray:
    """Null distribution of U as subset counts, via the Gaussian binomial.

    counts[u] = number of rank arrangements with statistic u; computed in
    float64, which is exact up to ~2^53 arrangements and accurate beyond.
    """
    length = n1 * n2 + 1
    coef = np.zeros(length)
    coef[0] = 1.0
    for i in range(1, n1 + 1):
        # multiply by (1 - q^(n2+i))
        shift = n2 + i
        if shift < length:
            coef[shift:] -= coef[: length - shift].copy()
        # divide by (1 - q^i): prefix sums along each stride-i class
        for r in range(i):
            coef[r::i] = np.cumsum(coef[r::i])
    return coef


def u_p_score(new_sample: WeightSample, base_sample: WeightSample, method: str = "auto") -> float:
    """Two-sided Mann-Whitney p-value for the location of ``new`` vs ``base``.

    Uses exact enumeration of the U distribution when the smaller sample
    has at most 8 entries and the data are tie-free; otherwise the normal
    approximation with tie and continuity corrections.
    """
    x = new_sample.values
    y = base_sample.values
    n1, n2 = x.size, y.size
    if n1 < 2 or n2 < 2:
        raise ValidationError(f"both samples need >= 2 entries, got {n1} and {n2}")
    combined = np.concatenate([x, y])
    ranks, ties = _tie_averaged_ranks(combined)
    has_ties = bool((ties > 1).any())
    r1 = float(ranks[:n1].sum())
    u1 = n1 * n2 + n1 * (n1 + 1) / 2.0 - r1
    u2 = n1 * n2 - u1

    if method == "auto":
        method = "exact" if (min(n1, n2) <= 8 and not has_ties) else "approx"
    if method == "exact":
        if has_ties:
            raise ValidationError("exact method is only defined for tie-free samples")
        counts = _exact_u_counts(n1, n2)
        u = int(round(min(u1, u2)))
        p = 2.0 * counts[: u + 1].sum() / counts.sum()
        return float(min(p, 1.0))
    if method != "approx":
        raise ValidationError(f"unknown method {method!r}")

    n = n1 + n2
    mu = n1 * n2 / 2.0
    tie_term = (ties**3 - ties).sum() / (n * (n - 1))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = (abs(u1 - mu) - 0.5) / np.sqrt(var)
    z = max(z, 0.0)
    return float(min(2.0 * ndtr(-z), 1.0))


def percent_shift(current: float, initial: float) -> float:
    """Signed relative shift (current - initial) / initial."""
    if initial == 0:
        raise ValidationError("percent_shift undefined for a zero initial value")
    return (current - initial) / initial


def radial_energy(up_pct: float, noc_pct: float) -> float:
    """Radial indicator sqrt(up_pct^2 + noc_pct^2)."""
    return float(np.hypot(up_pct, noc_pct))


def perf_gain(current_perf: float, baseline_perf: float) -> float:
    """Signed performance gain versus a baseline.

    The denominator uses |baseline| so that "better" is always positive
    even when the performance proxy is a negated loss.
    """
    if baseline_perf == 0:
        raise ValidationError("perf_gain undefined for a zero baseline")
    return (current_perf - baseline_perf) / abs(baseline_perf)


@dataclass
class AlignmentSnapshot:
    tokens: int
    u_p: float
    noc: float
    perf: float
    loss: float
    ppl: float
    up_pct: float
    noc_pct: float
    perf_pct: float
    r: float

    def __post_init__(self):
        if abs(self.ppl - np.exp(self.loss)) > 1e-12 * max(1.0, self.ppl):
            raise ValidationError("ppl must equal exp(loss)")
        if abs(self.r - radial_energy(self.up_pct, self.noc_pct)) > 1e-12:
            raise ValidationError("r must equal sqrt(up_pct^2 + noc_pct^2)")

    @property
    def state_vector(self) -> np.ndarray:
        return np.array([self.up_pct, self.noc_pct, self.perf_pct])


def base_projection_sample(params: dict, config: ModelConfig, rng: RngState) -> WeightSample:
    vals = np.concatenate([params[k].ravel() for k in projection_param_keys(config)])
    seed = rng.seed
    return WeightSample(subsample(rng, vals, SUBSAMPLE_LIMIT), "base-snapshot", seed)


def expanded_projection_sample(params: dict, config: ModelConfig, rng: RngState) -> WeightSample:
    vals = np.concatenate([params[k].ravel() for k in projection_param_keys(config)])
    seed = rng.seed
    return WeightSample(subsample(rng, vals, SUBSAMPLE_LIMIT), "expanded-all", seed)


def new_block_sample(
    params: dict, config: ModelConfig, plan: GrowthPlan, rng: RngState
) -> WeightSample | None:
    blocks = [np.asarray(b).ravel() for _, b in new_block_slices(params, config, plan)]
    vals = np.concatenate(blocks) if blocks else np.array([])
    if vals.size == 0:
        return None
    seed = rng.seed
    return WeightSample(subsample(rng, vals, SUBSAMPLE_LIMIT), "new-blocks-only", seed)


def snapshot_alignment(
    base_params: dict,
    base_config: ModelConfig,
    current_params: dict,
    current_config: ModelConfig,
    heldout,
    tokens: int,
    reference: AlignmentSnapshot | None = None,
    subsample_seed: int = 0,
) -> AlignmentSnapshot:
    """Assemble the full per-checkpoint alignment record.

    ``reference`` is the snapshot the percent shifts are measured against;
    None means this snapshot is its own reference (all shifts zero).
    """
    if (
        current_config.hidden_size != base_config.hidden_size
        or current_config.n_layers != base_config.n_layers
        or current_config.ladder_m < base_config.ladder_m
        or current_config.ladder_a < base_config.ladder_a
    ):
        raise ValidationError(
            "current model does not extend the base model: "
            f"base (m={base_config.ladder_m}, a={base_config.ladder_a}), "
            f"current (m={current_config.ladder_m}, a={current_config.ladder_a})"
        )
    rng = RngState(subsample_seed)
    base_s = base_projection_sample(base_params, base_config, rng)
    cur_s = expanded_projection_sample(current_params, current_config, rng)
    noc_val = noc(base_s, cur_s)

    delta_m = current_config.ladder_m - base_config.ladder_m
    delta_a = current_config.ladder_a - base_config.ladder_a
    if delta_m + delta_a > 0:
        plan = GrowthPlan(delta_m, delta_a, "strict-zero", seed=0)
        new_s = new_block_sample(current_params, current_config, plan, rng)
        u_p = u_p_score(new_s, base_s)
    else:
        u_p = 1.0  # no new parameters: nothing can have diverged

    loss = heldout_loss(current_config, current_params, heldout)
    ppl = float(np.exp(loss))
    perf = -loss
    if reference is None:
        up_pct = noc_pct = perf_pct = 0.0
    else:
        up_pct = percent_shift(u_p, reference.u_p)
        noc_pct = percent_shift(noc_val, reference.noc)
        perf_pct = perf_gain(perf, reference.perf)
    return AlignmentSnapshot(
        tokens=tokens,
        u_p=u_p,
        noc=noc_val,
        perf=perf,
        loss=loss,
        ppl=ppl,
        up_pct=up_pct,
        noc_pct=noc_pct,
        perf_pct=perf_pct,
        r=radial_energy(up_pct, noc_pct),
    )
