"""The analytic FLOPs model at deployment scale.

Per-layer cost is 4d^2L + 2dL^2 + 2mdL; the scheduled pipeline pays full
length for n layers and the reduced length afterwards. Prefill speedup
grows with the pruning rate and shrinks with the migration depth; decoding
speedup ignores the depth entirely and decays toward 1 as the output grows.
"""

from parvts import CostParams, cost_report, migration_depth_for
from parvts.verify import ratio_fit

# 7B-class geometry: 32 layers, d=4096, FFN 11008, 576 visual tokens.
BASE = dict(N=32, L_text=115, L_img=576, d=4096, m=11008)

print("token budget sweep (n = 3, M = 1):")
print(f"{'kept':>6} {'p':>7} {'prefill TF':>11} {'ratio':>8} {'rho_pre':>8} {'rho_dec':>8}")
for kept in (576, 192, 161, 128, 103, 64, 46):
    params = CostParams(p=1.0 - kept / 576.0, n=3, M=1, **BASE)
    report = cost_report(params)
    ratio = 100.0 * report.prefill_flops_parvts / report.prefill_flops_vanilla
    print(
        f"{kept:>6} {params.p:>7.3f} {report.prefill_flops_parvts / 1e12:>11.2f} "
        f"{ratio:>7.2f}% {report.rho_prefill:>8.3f} {report.rho_decoding:>8.3f}"
    )

print("\nmigration depth sweep (64 kept tokens, M = 16):")
print(f"{'n':>4} {'rho_prefill':>12} {'rho_decoding':>13}")
for n in (1, 2, 3, 8, 16, 24, 32):
    report = cost_report(CostParams(p=1.0 - 64 / 576.0, n=n, M=16, **BASE))
    print(f"{n:>4} {report.rho_prefill:>12.4f} {report.rho_decoding:>13.4f}")
print("decoding speedup is constant in n; prefill speedup decays toward 1 at n = N")

print("\noutput length sweep (64 kept tokens, n = 3):")
for M in (1, 16, 64, 256, 1024):
    report = cost_report(CostParams(p=1.0 - 64 / 576.0, n=3, M=M, **BASE))
    print(f"  M = {M:>5}: rho_decoding = {report.rho_decoding:.4f}")

# Published TFLOPs percentages for LLaVA-1.5-7B at budgets 161/103/46 are
# 44.34 / 37.26 / 30.31; the text length behind them is unpublished, so fit
# one L_text and compare.
best_l, ratios = ratio_fit()
print(f"\nbest-fit text length for the published ratios: L_text = {best_l}")
for kept, ratio, target in zip((161, 103, 46), ratios, (44.34, 37.26, 30.31)):
    print(f"  kept {kept:>3}: computed {ratio:.2f}% vs published {target}%")

print("\npublished migration depths:", migration_depth_for("LLaVA-1.5-7B"),
      "(LLaVA-1.5-7B),", migration_depth_for("Video-LLaVA-7B"), "(Video-LLaVA-7B)")
