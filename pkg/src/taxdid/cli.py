"""Command-line entry point.

Subcommands mirror the pipeline stages (generate, assign, balance,
estimate, diagnose) plus ``pipeline`` for the full run.  Each stage
consumes the previous stage's CSVs, so stages are independently
re-runnable.  ``--threads`` caps BLAS-level parallelism and must take
effect before numpy loads, so heavy imports happen inside ``main``.
"""

from __future__ import annotations

import argparse
import os
import sys

CONFIG_ENV_VAR = "TAXDID_CONFIG"


def _parse_groups(text: str) -> dict:
    """Parse '120000:160000,160000:280000' into group bounds."""
    try:
        low, medium = text.split(",")
        lo1, hi1 = (float(x) for x in low.split(":"))
        lo2, hi2 = (float(x) for x in medium.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            "expected LOW_LO:LOW_HI,MED_LO:MED_HI"
        ) from exc
    return {"low": [lo1, hi1], "medium": [lo2, hi2]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taxdid",
        description="Tax microsimulation and DID/IV estimation pipeline "
        "for the 1987 joint-taxation reform design.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=os.environ.get(CONFIG_ENV_VAR),
                       help=f"YAML config path (default: ${CONFIG_ENV_VAR})")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="generator seed")
        p.add_argument("--threads", type=int, default=None,
                       help="cap numeric-library threads")
        p.add_argument("--deflation-factor", type=float, default=None,
                       help="inflation adjustment for the counterfactual 1987 system")
        p.add_argument("--groups", type=_parse_groups, default=None,
                       metavar="LO:HI,LO:HI", help="low and medium income bounds")

    for name, help_text in [
        ("pipeline", "run every stage and write the full bundle"),
        ("generate", "write a synthetic panel CSV"),
        ("assign", "select the sample and write assignments"),
        ("balance", "write covariate balance tables"),
        ("estimate", "write event-study and elasticity tables"),
        ("diagnose", "write identification diagnostics"),
    ]:
        p = sub.add_parser(name, help=help_text)
        add_common(p)
        if name in ("assign", "balance", "estimate", "diagnose"):
            p.add_argument("--panel", default=None, help="panel CSV path")
        if name in ("balance", "estimate", "diagnose"):
            p.add_argument("--assignments", default=None,
                           help="assignments CSV from a previous assign stage")
    return parser


def _cap_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(max(1, n))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _cap_threads(args.threads)

    # imports deferred so the thread caps above bind the BLAS pools
    from pathlib import Path

    from taxdid.config import ConfigError, load_config
    from taxdid.panel import PanelFormatError, load_panel, write_panel
    from taxdid.pipeline import (
        PipelineError,
        acquire_panel,
        read_assignments,
        resolve_deflator,
        run_pipeline,
        stage_balance,
        stage_design,
        stage_diagnose,
        stage_estimate,
        write_panel_sidecars,
    )

    overrides = {
        "out_dir": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "deflation_factor": args.deflation_factor,
        "groups": args.groups,
    }
    panel_path = getattr(args, "panel", None)
    if panel_path:
        overrides["mode"] = "file"
        overrides["panel_path"] = panel_path

    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(cfg.out_dir)

    try:
        if args.command == "pipeline":
            manifest = run_pipeline(cfg)
            print(f"wrote {len(manifest['outputs'])} artifacts to {out_dir}")
            return 0

        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            panel, cpi = acquire_panel(cfg)
            write_panel(panel, out_dir / "panel.csv")
            write_panel_sidecars(cfg, cpi, out_dir)
            print(f"wrote {out_dir / 'panel.csv'} ({len(panel)} rows)")
            return 0

        panel, report = load_panel(cfg.panel_path)
        print(report.summary())
        if args.command == "assign":
            assignments, bins = stage_design(panel, cfg)
            assignments.reset_index().to_csv(out_dir / "assignments.csv", index=False)
            bins.to_csv(out_dir / "propensity_bins.csv", index=False)
            print(f"wrote assignments for {len(assignments)} individuals to {out_dir}")
            return 0

        assignments_path = args.assignments or out_dir / "assignments.csv"
        assignments = read_assignments(assignments_path)
        if args.command == "balance":
            frames = stage_balance(panel, assignments)
        elif args.command == "estimate":
            cpi = resolve_deflator(cfg)
            event_frames, summary = stage_estimate(panel, cpi, assignments, cfg)
            frames = {**event_frames, "elasticity_summary.csv": summary}
        else:  # diagnose
            cpi = resolve_deflator(cfg)
            frames = stage_diagnose(panel, cpi, assignments, cfg)

        for name, frame in frames.items():
            frame.to_csv(out_dir / name, index=False)
        print(f"wrote {len(frames)} artifacts to {out_dir}")
        return 0

    except PipelineError as exc:
        print(f"error in stage '{exc.stage}': {exc}", file=sys.stderr)
        print(f"structured report: {out_dir / 'error.json'}", file=sys.stderr)
        return 1
    except (FileNotFoundError, PanelFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
