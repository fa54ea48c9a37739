"""Command-line front end: run, cost, sweep, verify.

Exit codes: 0 success, 1 validation error, 2 internal invariant violation
(including failed verify checks).
"""

from __future__ import annotations

import argparse
import itertools
import sys
import traceback
from dataclasses import replace

from .configfile import (
    ConfigError,
    cost_params_from,
    experiment_config_from,
    load_config,
)
from .cost import CostParams, cost_report, migration_depth_for
from .errors import InvalidArgumentError, InvalidMaskError, SaliencyFormatError
from .harness import SWEEP_HEADER, run_experiment, serialize_report, sweep_cost
from .verify import render_results, run_checks

_GRID_PARAMS = ("p", "n", "N", "L_text", "L_img", "M", "d", "m")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parvts",
        description="Vision-token scheduling laboratory: prefill strategies, "
        "KV-cache pruning, and the analytic FLOPs model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment and write its report")
    run_p.add_argument("--config", help="config file (dotted key = value lines)")
    run_p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    run_p.add_argument("--out", default="report.txt", help="report output path")

    cost_p = sub.add_parser("cost", help="print the analytic cost report")
    cost_p.add_argument("--config", help="config file supplying cost.* defaults")
    cost_p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    cost_p.add_argument("--p", type=float)
    cost_p.add_argument("--n", type=int)
    cost_p.add_argument("--N", type=int)
    cost_p.add_argument("--L_text", type=int)
    cost_p.add_argument("--L_img", type=int)
    cost_p.add_argument("--M", type=int)
    cost_p.add_argument("--d", type=int)
    cost_p.add_argument("--m", type=int)
    cost_p.add_argument("--L", type=int, help="optional; must equal L_text + L_img")
    cost_p.add_argument(
        "--preset", metavar="BACKBONE",
        help="use the published migration depth for e.g. LLaVA-1.5-7B",
    )

    sweep_p = sub.add_parser("sweep", help="write a CSV cost sweep over a grid")
    sweep_p.add_argument("--config", help="config file supplying cost.* base values")
    sweep_p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sweep_p.add_argument("--out", default="sweep.csv", help="CSV output path")
    sweep_p.add_argument(
        "grid", nargs="*",
        help="axes like p=0:1:0.25 (inclusive range) or n=1,2,3 (list)",
    )

    sub.add_parser("verify", help="run the built-in invariant and oracle suite")
    return parser


def _cmd_run(args) -> int:
    resolved = load_config(args.config, args.set)
    config = replace(experiment_config_from(resolved), output_path=args.out)
    report = run_experiment(config, config_echo=resolved)
    text = serialize_report(report)
    with open(config.output_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    main_block = report.blocks[-1]
    print(
        f"{main_block.strategy}: kept {main_block.tokens_subject} visual tokens, "
        f"rho_prefill = {main_block.rho_prefill:.4f}, "
        f"max divergence vs vanilla = {main_block.max_divergence_vs_vanilla:.3e}"
    )
    return 0


def _cmd_cost(args) -> int:
    resolved = load_config(args.config, args.set)
    n = args.n
    if args.preset is not None:
        n = migration_depth_for(args.preset)
        if n is None:
            raise ConfigError(f"unknown preset backbone {args.preset!r}")
    params = cost_params_from(
        resolved, p=args.p, n=n, N=args.N, L_text=args.L_text,
        L_img=args.L_img, M=args.M, d=args.d, m=args.m, L=args.L,
    )
    report = cost_report(params)
    for name in (
        "prefill_flops_vanilla", "prefill_flops_parvts",
        "decoding_flops_vanilla", "decoding_flops_parvts",
        "rho_prefill", "rho_decoding",
    ):
        print(f"{name} = {getattr(report, name)!r}")
    return 0


def _parse_axis(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise ConfigError(f"grid axis {spec!r} is not of the form param=values")
    name, _, body = spec.partition("=")
    name = name.strip()
    if name not in _GRID_PARAMS:
        raise ConfigError(f"unknown sweep parameter {name!r}")
    body = body.strip()
    cast = float if name == "p" else int
    try:
        if ":" in body:
            parts = body.split(":")
            if len(parts) != 3:
                raise ValueError("ranges are start:stop:step")
            start, stop, step = (float(x) for x in parts)
            if step <= 0 or stop < start:
                raise ValueError("need step > 0 and stop >= start")
            count = int((stop - start) / step + 1e-9) + 1
            values = [round(start + i * step, 12) for i in range(count)]
        else:
            values = [float(x) for x in body.split(",") if x.strip()]
        if not values:
            raise ValueError("no values")
        typed = [cast(v) for v in values]
    except ValueError as exc:
        raise ConfigError(f"bad grid axis {spec!r}: {exc}") from exc
    return name, typed


def _cmd_sweep(args) -> int:
    if not args.grid:
        raise ConfigError("empty grid: pass at least one axis like p=0:1:0.1")
    resolved = load_config(args.config, args.set)
    base = cost_params_from(resolved)
    axes = [_parse_axis(spec) for spec in args.grid]
    points = []
    for combo in itertools.product(*(values for _, values in axes)):
        fields = {
            "p": base.p, "n": base.n, "N": base.N, "L_text": base.L_text,
            "L_img": base.L_img, "M": base.M, "d": base.d, "m": base.m,
        }
        fields.update({name: value for (name, _), value in zip(axes, combo)})
        try:
            points.append(CostParams(**fields))
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from exc
    rows = sweep_cost(points)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(SWEEP_HEADER + "\n")
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_verify() -> int:
    results = run_checks()
    sys.stdout.write(render_results(results))
    return 0 if all(r.passed for r in results) else 2


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "cost":
            return _cmd_cost(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_verify()
    except (ConfigError, InvalidArgumentError, InvalidMaskError, SaliencyFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
