"""Analytic FLOPs model for vanilla and scheduled prefill/decoding.

Counts multi-head attention and feed-forward work only (no embeddings,
norms, or output head). A single layer over L tokens costs

    4 d^2 L + 2 d L^2 + 2 m d L

and decoding sums that attention term over a growing cache. The scheduled
variant runs n full-length layers and N - n layers at the reduced length
L_text + (1 - p) * L_img; its decoding cost depends only on the reduced
length, never on the migration depth.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgumentError

# Published migration-depth presets: (backbone, params, depth).
_PRESETS = (
    ("LLaVA-1.5", "7B", 3),
    ("LLaVA-1.5", "13B", 3),
    ("LLaVA-Next", "7B", 16),
    ("LLaVA-Next", "13B", 16),
    ("Qwen2.5-VL", "3B", 18),
    ("Qwen2.5-VL", "7B", 18),
    ("Qwen3-VL", "2B", 10),
    ("Qwen3-VL", "4B", 12),
    ("Qwen3-VL", "8B", 12),
    ("InternVL2", "2B", 18),
    ("InternVL2", "8B", 16),
    ("InternVL2.5", "2B", 18),
    ("InternVL2.5", "8B", 16),
    ("Video-LLaVA", "7B", 24),
)

STEPWISE_SUM_LIMIT = 10_000


@dataclass(frozen=True)
class CostParams:
    """Inputs of the analytic model; L is stored redundantly and validated."""

    p: float
    n: int
    N: int
    L_text: int
    L_img: int
    M: int
    d: int
    m: int
    L: int = -1  # -1 means "derive from L_text + L_img"

    def __post_init__(self):
        if self.L < 0:
            object.__setattr__(self, "L", self.L_text + self.L_img)
        if self.L != self.L_text + self.L_img:
            raise InvalidArgumentError(
                f"L = {self.L} but L_text + L_img = {self.L_text + self.L_img}"
            )
        if not 0.0 <= self.p <= 1.0:
            raise InvalidArgumentError("pruning rate p must lie in [0, 1]")
        if not 1 <= self.n <= self.N:
            raise InvalidArgumentError(f"migration depth {self.n} outside [1, {self.N}]")
        if min(self.L_text, self.L_img, self.M, self.d, self.m) < 0:
            raise InvalidArgumentError("counts must be non-negative")

    @property
    def reduced_length(self) -> float:
        return self.L_text + (1.0 - self.p) * self.L_img


@dataclass(frozen=True)
class CostReport:
    prefill_flops_vanilla: float
    decoding_flops_vanilla: float
    prefill_flops_parvts: float
    decoding_flops_parvts: float
    rho_prefill: float
    rho_decoding: float


def flops_layer(d: float, m: float, L: float) -> float:
    """4 d^2 L + 2 d L^2 + 2 m d L for one layer over L tokens."""
    if min(d, m, L) < 0:
        raise InvalidArgumentError("counts must be non-negative")
    return 4.0 * d * d * L + 2.0 * d * L * L + 2.0 * m * d * L


def prefill_flops_vanilla(params: CostParams) -> float:
    return params.N * flops_layer(params.d, params.m, params.L)


def decoding_flops_vanilla(params: CostParams, mode: str = "closed") -> float:
    """Decoding cost over M steps with cache length L + i - 1 at step i.

    'stepwise' sums the per-step terms literally (arithmetic series for very
    large M); 'closed' evaluates N * M * (4d^2 + 2d(L + (M-1)/2) + 2md).
    """
    N, M, d, m, L = params.N, params.M, params.d, params.m, params.L
    if mode == "closed":
        if M == 0:
            return 0.0
        return N * M * (4.0 * d * d + 2.0 * d * (L + (M - 1) / 2.0) + 2.0 * m * d)
    if mode == "stepwise":
        if M <= STEPWISE_SUM_LIMIT:
            total = 0.0
            for i in range(1, M + 1):
                total += N * (4.0 * d * d + 2.0 * d * (L + i - 1) + 2.0 * m * d)
            return total
        base = N * M * (4.0 * d * d + 2.0 * d * L + 2.0 * m * d)
        return base + N * 2.0 * d * (M * (M - 1) / 2.0)
    raise InvalidArgumentError(f"unknown mode {mode!r}")


def prefill_flops_parvts(params: CostParams) -> float:
    full = flops_layer(params.d, params.m, params.L)
    reduced = flops_layer(params.d, params.m, params.reduced_length)
    return params.n * full + (params.N - params.n) * reduced


def decoding_flops_parvts(params: CostParams) -> float:
    N, M, d, m = params.N, params.M, params.d, params.m
    if M == 0:
        return 0.0
    return N * M * (
        4.0 * d * d + 2.0 * m * d + 2.0 * d * ((M - 1) / 2.0 + params.reduced_length)
    )


def speedup_prefill(params: CostParams) -> float:
    denom = prefill_flops_parvts(params)
    if denom == 0.0:
        raise InvalidArgumentError("prefill speedup undefined for an empty prefill (L = 0)")
    return prefill_flops_vanilla(params) / denom


def speedup_decoding(params: CostParams) -> float:
    """Closed-form ratio; equals the decoding-FLOPs ratio whenever M >= 1."""
    d, m, M = params.d, params.m, params.M
    half = (M - 1) / 2.0
    return (2.0 * d + m + params.L + half) / (
        2.0 * d + m + half + params.reduced_length
    )


def cost_report(params: CostParams) -> CostReport:
    return CostReport(
        prefill_flops_vanilla=prefill_flops_vanilla(params),
        decoding_flops_vanilla=decoding_flops_vanilla(params),
        prefill_flops_parvts=prefill_flops_parvts(params),
        decoding_flops_parvts=decoding_flops_parvts(params),
        rho_prefill=speedup_prefill(params),
        rho_decoding=speedup_decoding(params),
    )


def preset_migration_depths() -> tuple[tuple[str, str, int], ...]:
    """Published (backbone, params, migration depth) presets."""
    return _PRESETS


def migration_depth_for(name: str):
    """Depth for a 'Backbone-Params' name such as 'LLaVA-1.5-7B'; None if unknown."""
    for backbone, size, depth in _PRESETS:
        if f"{backbone}-{size}" == name:
            return depth
    return None


CSV_COLUMNS = (
    "p", "n", "N", "L_text", "L_img", "M", "d", "m",
    "prefill_flops_vanilla", "prefill_flops_parvts",
    "decoding_flops_vanilla", "decoding_flops_parvts",
    "rho_prefill", "rho_decoding",
)


def csv_row(params: CostParams) -> str:
    """One sweep row in the fixed column order of CSV_COLUMNS."""
    report = cost_report(params)
    cells = [
        repr(params.p), str(params.n), str(params.N), str(params.L_text),
        str(params.L_img), str(params.M), str(params.d), str(params.m),
        repr(report.prefill_flops_vanilla), repr(report.prefill_flops_parvts),
        repr(report.decoding_flops_vanilla), repr(report.decoding_flops_parvts),
        repr(report.rho_prefill), repr(report.rho_decoding),
    ]
    return ",".join(cells)
