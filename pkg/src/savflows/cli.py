"""Command-line entry point.

Subcommands: run, convergence, compare, showcase, validate.  All output is
deterministic given (config, seed); studies echo aligned tables and write
CSVs plus figures into the output directory.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import figures, harness
from .config import ConfigError, config_to_text, load_config, with_overrides
from .schemes import DivergenceError


def _out_dir(cfg, args, fallback: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    if cfg is not None and cfg.out_dir is not None:
        return Path(cfg.out_dir)
    return Path(fallback)


def cmd_run(args) -> int:
    cfg = with_overrides(load_config(args.config), out_dir=args.out, seed=args.seed)
    out = _out_dir(cfg, args, "runs/run")
    try:
        result = harness.execute_run(cfg, out, quiet=args.quiet)
    except DivergenceError as err:
        last = getattr(err, "last_trace", None)
        print(f"error: {err}", file=sys.stderr)
        if last is not None:
            print(f"last finite trace row: step={last.step} t={last.t:g} "
                  f"E={last.energy:g} R={last.r:g}", file=sys.stderr)
        return 1
    if not args.quiet and result.traces:
        tr = result.traces[-1]
        print(f"final: t={tr.t:g} E={tr.energy:.10g} R={tr.r:.10g} "
              f"mass={tr.mass:.10g}")
    return 0


def cmd_convergence(args) -> int:
    cfg = with_overrides(load_config(args.config), out_dir=args.out, seed=args.seed)
    if cfg.convergence is None:
        raise ConfigError("config has no convergence.* section")
    if not cfg.manufactured:
        raise ConfigError("convergence studies need forcing.manufactured = true")
    out = _out_dir(cfg, args, "runs/convergence")
    out.mkdir(parents=True, exist_ok=True)
    model, _, cfg = harness.build_problem(cfg)
    (out / "manifest.txt").write_text(config_to_text(cfg))
    rows = harness.run_convergence(model, cfg.convergence)
    table = [(r.variant, r.order, r.dt, r.error,
              "" if r.observed_order is None else f"{r.observed_order:.3f}")
             for r in rows]
    if not args.quiet:
        print(harness.format_table(
            ["variant", "k", "dt", "error", "order"], table))
    harness.write_rows_csv(out / "errors.csv",
                           ["variant", "k", "dt", "error", "order"], table)
    if cfg.figures:
        figures.save_convergence_figure(rows, out / "convergence.png",
                                        title=cfg.model_name)
    return 0


def cmd_compare(args) -> int:
    cfg = with_overrides(load_config(args.config), out_dir=args.out, seed=args.seed)
    if cfg.compare is None:
        raise ConfigError("config has no compare.* section")
    out = _out_dir(cfg, args, "runs/compare")
    out.mkdir(parents=True, exist_ok=True)
    model, phi0, cfg = harness.build_problem(cfg)
    (out / "manifest.txt").write_text(config_to_text(cfg))
    desc = config_to_text(cfg)
    rows = harness.run_comparison(model, phi0, cfg.compare, out / "refcache", desc)
    table = [(r.variant, r.dt, r.error) for r in rows]
    if not args.quiet:
        print(harness.format_table(["variant", "dt", "error"], table))
    harness.write_rows_csv(out / "errors.csv", ["variant", "dt", "error"], table)
    if cfg.figures:
        figures.save_comparison_figure(rows, out / "comparison.png",
                                       title=cfg.model_name)
    return 0


def cmd_showcase(args) -> int:
    out_root = Path(args.out) if args.out is not None else Path("runs/showcase")
    where = harness.run_showcase(args.name, out_root, quiet=args.quiet)
    if not args.quiet:
        print(f"showcase artifacts in {where}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    if not args.quiet:
        sys.stdout.write(config_to_text(cfg))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="savflows",
        description="Energy-stable auxiliary-variable integrators for "
                    "dissipative PDEs on periodic Fourier grids.")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--quiet", action="store_true", help="suppress chatter")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one simulation")
    p_run.add_argument("config")
    p_run.set_defaults(fn=cmd_run)

    p_conv = sub.add_parser("convergence", help="measure convergence orders")
    p_conv.add_argument("config")
    p_conv.set_defaults(fn=cmd_convergence)

    p_cmp = sub.add_parser("compare", help="compare variants against a reference")
    p_cmp.add_argument("config")
    p_cmp.set_defaults(fn=cmd_compare)

    p_show = sub.add_parser("showcase", help="run a named scenario")
    p_show.add_argument("name")
    p_show.set_defaults(fn=cmd_showcase)

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    p_val.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
