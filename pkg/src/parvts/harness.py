"""Seeded experiment execution and machine-readable run reports.

An experiment builds one model, synthesizes one token sequence, partitions
the visual segment once, then runs every requested strategy on identical
inputs, decodes greedily from each prefill, and collects token accounting,
analytic FLOPs numbers, and divergence statistics against the vanilla run.
The toy model has no semantics, so agreement rates are descriptive, never
pass/fail thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import (
    CostParams,
    CSV_COLUMNS,
    csv_row,
    decoding_flops_parvts,
    decoding_flops_vanilla,
    flops_layer,
    prefill_flops_parvts,
    prefill_flops_vanilla,
    speedup_decoding,
    speedup_prefill,
)
from .errors import InvalidArgumentError
from .model import ModelConfig, SequenceLayout, build_model, embed, greedy_decode, output_logits
from .numerics import RngState, seeded_integers
from .oracle import oracle_two_pass
from .saliency import load_saliency, partition_topk, toy_cls_attention
from .scheduler import ScheduleConfig, Strategy, run_strategy

SCHEMA_VERSION = 1

# Token synthesis draws from a counter region far above the weight draws.
_TOKEN_STREAM_COUNTER = 2**32

SWEEP_HEADER = ",".join(CSV_COLUMNS)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    num_system: int
    num_visual: int
    num_question: int
    saliency_source: str  # "toy" or a path to a saliency file
    keep_count: int
    schedule: ScheduleConfig
    decode_steps: int
    strategies: tuple[Strategy, ...]
    output_path: str | None = None

    def __post_init__(self):
        if self.num_visual < 1:
            raise InvalidArgumentError("tokens.visual must be >= 1")
        if self.num_question < 1:
            raise InvalidArgumentError("tokens.question must be >= 1")
        if self.num_system < 0:
            raise InvalidArgumentError("tokens.system must be >= 0")
        if not 0 <= self.keep_count <= self.num_visual:
            raise InvalidArgumentError(
                f"keep_count {self.keep_count} outside [0, tokens.visual = {self.num_visual}]"
            )
        if self.decode_steps < 0:
            raise InvalidArgumentError("decode.steps must be >= 0")
        if not self.strategies:
            raise InvalidArgumentError("at least one strategy is required")

    def echo(self) -> dict[str, str]:
        """Fully-resolved configuration as dotted key/value pairs."""
        cfg, sched = self.model, self.schedule
        return {
            "model.layers": str(cfg.num_layers),
            "model.hidden_dim": str(cfg.hidden_dim),
            "model.heads": str(cfg.num_heads),
            "model.mlp_dim": str(cfg.mlp_dim),
            "model.vocab": str(cfg.vocab_size),
            "model.seed": str(cfg.master_seed),
            "tokens.system": str(self.num_system),
            "tokens.visual": str(self.num_visual),
            "tokens.question": str(self.num_question),
            "schedule.strategy": sched.strategy.value,
            "schedule.migration_depth": str(sched.migration_depth),
            "schedule.alpha": repr(sched.alpha),
            "schedule.beta": repr(sched.beta),
            "schedule.joint_prefix": str(sched.joint_prefix_layers),
            "partition.keep_count": str(self.keep_count),
            "partition.saliency": self.saliency_source,
            "decode.steps": str(self.decode_steps),
        }


@dataclass
class StrategyReport:
    strategy: str
    n: int
    alpha: float
    beta: float
    tokens_subject: int
    tokens_nonsubject: int
    prefill_flops: float
    decoding_flops: float
    rho_prefill: float
    rho_decoding: float
    cache_entries_per_layer: list[int]
    decoded_ids: list[int]
    agreement_vs_vanilla: float
    max_divergence_vs_vanilla: float
    masked_batch_gap: float | None = None
    frobenius_vs_vanilla: float = 0.0
    max_divergence_vs_oracle: float | None = None
    phase_token_counts: dict[str, int] = field(default_factory=dict)


@dataclass
class RunReport:
    schema_version: int
    config_echo: dict[str, str]
    blocks: list[StrategyReport]


def compare_states(a, b) -> tuple[float, float]:
    """(max elementwise |a - b|, Frobenius norm of a - b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if diff.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(diff))), float(np.linalg.norm(diff))


def synthesize_token_ids(model_config: ModelConfig, count: int) -> np.ndarray:
    """Deterministic uniform token ids from the master seed."""
    rng = RngState(model_config.master_seed, counter=_TOKEN_STREAM_COUNTER)
    return seeded_integers(rng, count, 0, model_config.vocab_size)


def _strategy_flops(strategy: Strategy, params: CostParams) -> tuple[float, float, float, float]:
    """(prefill, decoding, rho_prefill, rho_decoding) for one strategy."""
    if strategy is Strategy.VANILLA:
        pf, df = prefill_flops_vanilla(params), decoding_flops_vanilla(params)
        return pf, df, 1.0, 1.0
    if strategy in (Strategy.PARVTS_BATCH, Strategy.PARVTS_MASKED):
        return (
            prefill_flops_parvts(params),
            decoding_flops_parvts(params),
            speedup_prefill(params),
            speedup_decoding(params),
        )
    # Sequential schedules: n layers at the stage-1 length, the rest at the
    # stage-2 length; decoding attends to whichever rows each layer cached.
    kept = round((1.0 - params.p) * params.L_img)
    first = kept if strategy is Strategy.SUBJECT_FIRST else params.L_img - kept
    second = params.L_img - first
    d, m, n, N, M = params.d, params.m, params.n, params.N, params.M
    len1, len2 = params.L_text + first, params.L_text + second
    pf = n * flops_layer(d, m, len1) + (N - n) * flops_layer(d, m, len2)
    if M == 0:
        df = 0.0
    else:
        const = 4.0 * d * d + 2.0 * m * d
        half = (M - 1) / 2.0
        df = M * (
            n * (const + 2.0 * d * (len1 + half))
            + (N - n) * (const + 2.0 * d * (len2 + half))
        )
    rho_p = prefill_flops_vanilla(params) / pf if pf else 1.0
    rho_d = decoding_flops_vanilla(params) / df if df else 1.0
    return pf, df, rho_p, rho_d


def run_experiment(config: ExperimentConfig, config_echo: dict[str, str] | None = None) -> RunReport:
    """Run every requested strategy on one seeded input and collect a report."""
    model = build_model(config.model)
    total = config.num_system + config.num_visual + config.num_question
    ids = synthesize_token_ids(config.model, total)
    layout = SequenceLayout.from_counts(
        config.num_system, config.num_visual, config.num_question
    )

    if config.saliency_source == "toy":
        visual_ids = ids[layout.visual_span[0] : layout.visual_span[1]]
        saliency = toy_cls_attention(embed(model, visual_ids), config.model.master_seed)
    else:
        saliency = load_saliency(config.saliency_source)
        if len(saliency) != config.num_visual:
            raise InvalidArgumentError(
                f"saliency file has {len(saliency)} values for {config.num_visual} visual tokens"
            )
    partition = partition_topk(saliency, config.keep_count)

    params = CostParams(
        p=1.0 - config.keep_count / config.num_visual,
        n=config.schedule.migration_depth,
        N=config.model.num_layers,
        L_text=config.num_system + config.num_question,
        L_img=config.num_visual,
        M=config.decode_steps,
        d=config.model.hidden_dim,
        m=config.model.mlp_dim,
    )

    q_lo, q_hi = layout.question_span
    num_q = q_hi - q_lo

    def run_one(strategy: Strategy):
        cfg = ScheduleConfig(
            strategy=strategy,
            migration_depth=config.schedule.migration_depth,
            alpha=config.schedule.alpha,
            beta=config.schedule.beta,
            joint_prefix_layers=config.schedule.joint_prefix_layers,
        )
        result = run_strategy(model, ids, layout, partition, cfg)
        start_token = int(np.argmax(output_logits(model, result.hidden[-1:])[0]))
        decoded = greedy_decode(model, result.cache, start_token, config.decode_steps)
        return cfg, result, decoded

    # the vanilla run is the comparison baseline even when its block is not requested
    baseline_cfg, baseline_result, baseline_decoded = run_one(Strategy.VANILLA)
    vanilla_question = baseline_result.hidden[-num_q:]

    results = {Strategy.VANILLA: baseline_result}
    blocks: list[StrategyReport] = []

    for strategy in config.strategies:
        if strategy is Strategy.VANILLA:
            cfg, result, decoded = baseline_cfg, baseline_result, baseline_decoded
        else:
            cfg, result, decoded = run_one(strategy)
        results[strategy] = result

        question = result.hidden[-num_q:]
        max_abs, frob = compare_states(question, vanilla_question)
        agreement = (
            float(np.mean(np.array(decoded) == np.array(baseline_decoded)))
            if decoded
            else 1.0
        )

        oracle_div = None
        if strategy is Strategy.PARVTS_BATCH:
            reference = oracle_two_pass(model, ids, layout, partition, cfg)
            oracle_div, _ = compare_states(result.hidden, reference.hidden)

        pf, df, rho_p, rho_d = _strategy_flops(strategy, params)
        blocks.append(
            StrategyReport(
                strategy=strategy.value,
                n=cfg.migration_depth,
                alpha=cfg.alpha,
                beta=cfg.beta,
                tokens_subject=int(partition.keep_count),
                tokens_nonsubject=int(config.num_visual - partition.keep_count),
                prefill_flops=pf,
                decoding_flops=df,
                rho_prefill=rho_p,
                rho_decoding=rho_d,
                cache_entries_per_layer=result.cache.entry_counts(),
                decoded_ids=list(decoded),
                agreement_vs_vanilla=agreement,
                max_divergence_vs_vanilla=max_abs,
                frobenius_vs_vanilla=frob,
                max_divergence_vs_oracle=oracle_div,
                phase_token_counts=dict(result.phase_token_counts),
            )
        )

    if Strategy.PARVTS_BATCH in results and Strategy.PARVTS_MASKED in results:
        gap, _ = compare_states(
            results[Strategy.PARVTS_BATCH].diagnostics["question_at_migration"],
            results[Strategy.PARVTS_MASKED].diagnostics["question_at_migration"],
        )
        for block in blocks:
            if block.strategy in (Strategy.PARVTS_BATCH.value, Strategy.PARVTS_MASKED.value):
                block.masked_batch_gap = gap

    return RunReport(
        schema_version=SCHEMA_VERSION,
        config_echo=config_echo if config_echo is not None else config.echo(),
        blocks=blocks,
    )


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_report(report: RunReport) -> str:
    """Key/value text with nested blocks; byte-identical for identical runs."""
    lines = [f"schema_version = {report.schema_version}", "config {"]
    for key in sorted(report.config_echo):
        lines.append(f"  {key} = {report.config_echo[key]}")
    lines.append("}")
    for block in report.blocks:
        lines.append("strategy_block {")
        lines.append(f"  strategy = {block.strategy}")
        lines.append(f"  n = {block.n}")
        lines.append(f"  alpha = {_fmt(block.alpha)}")
        lines.append(f"  beta = {_fmt(block.beta)}")
        lines.append(f"  tokens_subject = {block.tokens_subject}")
        lines.append(f"  tokens_nonsubject = {block.tokens_nonsubject}")
        lines.append(f"  prefill_flops = {_fmt(block.prefill_flops)}")
        lines.append(f"  decoding_flops = {_fmt(block.decoding_flops)}")
        lines.append(f"  rho_prefill = {_fmt(block.rho_prefill)}")
        lines.append(f"  rho_decoding = {_fmt(block.rho_decoding)}")
        lines.append(
            "  cache_entries_per_layer = "
            + ",".join(str(c) for c in block.cache_entries_per_layer)
        )
        lines.append("  decoded_ids = " + ",".join(str(t) for t in block.decoded_ids))
        lines.append(f"  agreement_vs_vanilla = {_fmt(block.agreement_vs_vanilla)}")
        lines.append(f"  max_divergence_vs_vanilla = {_fmt(block.max_divergence_vs_vanilla)}")
        lines.append(f"  masked_batch_gap = {_fmt(block.masked_batch_gap)}")
        lines.append("}")
    return "\n".join(lines) + "\n"


def sweep_cost(grid) -> list[str]:
    """CSV rows (no header) for every CostParams point in the grid."""
    rows = [csv_row(point) for point in grid]
    if not rows:
        raise InvalidArgumentError("sweep grid is empty")
    return rows
