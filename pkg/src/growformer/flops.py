"""Analytic per-token FLOP accounting.

Convention: one multiply-add counts as 2 FLOPs. Counted components are
the Q/K/V projections, the attention score and aggregation matmuls at
the full sequence length, the attention output projection, the FFN
matmuls, and the vocabulary head. Normalisation, softmax, activations
and embedding lookups are excluded. The tag on every breakdown records
this so downstream comparisons know what they are looking at.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .model import ModelConfig

CONVENTION = (
    "mac=2flops;counted=qkv+attn-matmuls+output-proj+ffn+lm-head;"
    "excluded=norms,softmax,activations,embedding-lookup"
)


class FlopCounter:
    """Accumulates multiply-add counts by component during a forward pass."""

    def __init__(self):
        self.by_component: dict[str, int] = {}

    def add(self, component: str, flops: int) -> None:
        self.by_component[component] = self.by_component.get(component, 0) + int(flops)

    def total(self) -> int:
        return sum(self.by_component.values())


@dataclass
class FlopsBreakdown:
    qkv_projections: int
    attention_scores: int
    attention_aggregate: int
    output_projection: int
    ffn: int
    lm_head: int
    convention: str = CONVENTION

    @property
    def total(self) -> int:
        return (
            self.qkv_projections
            + self.attention_scores
            + self.attention_aggregate
            + self.output_projection
            + self.ffn
            + self.lm_head
        )

    def to_dict(self) -> dict:
        return {
            "qkv_projections": self.qkv_projections,
            "attention_scores": self.attention_scores,
            "attention_aggregate": self.attention_aggregate,
            "output_projection": self.output_projection,
            "ffn": self.ffn,
            "lm_head": self.lm_head,
            "total": self.total,
            "convention": self.convention,
        }


def nexus_proj_flops(d: int, m: int, a: int) -> int:
    """Per-token cost of one staged projection d -> m -> a -> d."""
    if min(d, m, a) < 1:
        raise ValidationError("projection dims must be >= 1")
    return 2 * (d * m + m * a + a * d)


def standard_proj_flops(d: int) -> int:
    """Per-token cost of one plain linear projection d -> d."""
    if d < 1:
        raise ValidationError("projection dim must be >= 1")
    return 2 * d * d


def model_flops(
    config: ModelConfig, seq_len: int | None = None, projection: str = "ladder"
) -> FlopsBreakdown:
    """Per-token FLOP estimate for a whole model.

    ``projection`` selects staged ("ladder") or plain ("standard")
    Q/K/V maps; the latter models a conventional baseline with the same
    hidden size.
    """
    n = config.context_len if seq_len is None else seq_len
    if n < 1:
        raise ValidationError(f"seq_len must be >= 1, got {n}")
    if projection not in ("ladder", "standard"):
        raise ValidationError(f"unknown projection kind {projection!r}")
    d, layers = config.hidden_size, config.n_layers
    if projection == "ladder":
        qkv = 3 * nexus_proj_flops(d, config.ladder_m, config.ladder_a)
    else:
        qkv = 3 * standard_proj_flops(d)
    scores = 2 * n * d
    aggregate = 2 * n * d
    out_proj = 2 * d * d
    ffn = 4 * d * config.ffn_size
    return FlopsBreakdown(
        qkv_projections=layers * qkv,
        attention_scores=layers * scores,
        attention_aggregate=layers * aggregate,
        output_projection=layers * out_proj,
        ffn=layers * ffn,
        lm_head=2 * d * config.vocab_size,
    )


def efficiency_ratio(ppl: float, flops: float) -> float:
    """Perplexity per FLOP; lower is better."""
    if flops <= 0:
        raise ValidationError(f"flops must be positive, got {flops}")
    return ppl / flops


def breakdown_csv_rows(named_configs, seq_len: int | None = None) -> list[str]:
    """CSV lines (config_name, components..., total, ratio_vs_baseline).

    The baseline for each row is the same config with standard
    projections.
    """
    header = (
        "config_name,qkv_projections,attention_scores,attention_aggregate,"
        "output_projection,ffn,lm_head,total,ratio_vs_baseline"
    )
    lines = [header]
    for name, config in named_configs:
        b = model_flops(config, seq_len=seq_len, projection="ladder")
        base = model_flops(config, seq_len=seq_len, projection="standard")
        ratio = b.total / base.total
        lines.append(
            f"{name},{b.qkv_projections},{b.attention_scores},"
            f"{b.attention_aggregate},{b.output_projection},{b.ffn},"
            f"{b.lm_head},{b.total},{ratio!r}"
        )
    return lines
