"""
Command-line front-end.

    python -m app.cli run --config configs/example1_static.toml
    python -m app.cli design --config configs/design_example1.toml
    python -m app.cli tables --scenario example1 --n-ic 100
    python -m app.cli sweep --scenario example3 --param lam --values 1e-3 1e-2 1e-1 1

Exit codes: 0 all checks pass, 1 check failure or design rejection,
2 configuration error, 3 divergence or Zeno guard.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from app.core.config import settings
from app.core.errors import ScenarioConfigError, SimulationAbort, ToolkitError, ZenoSuspicionError, exit_code_for
from app.core.logger import logger
from app.models.schemas import DesignFile
from app.services import scenario_loader
from app.services.analysis import TABLE_HORIZONS
from app.services.experiments import ExperimentService


def _cmd_run(args: argparse.Namespace, service: ExperimentService) -> int:
    loaded = scenario_loader.load(args.config, seed=args.seed)
    outcome = service.run(loaded, out_dir=Path(args.out) if args.out else None)
    for check in outcome.checks:
        print(f"{check.name:14s} {'pass' if check.passed else 'FAIL'}  {check.detail}")
    print(f"events={outcome.record.n_events} artifacts={outcome.artifacts['trajectory'].parent}")
    return 0 if outcome.passed else 1


def _cmd_design(args: argparse.Namespace, service: ExperimentService) -> int:
    if args.config:
        file = scenario_loader.load_design_file(args.config)
    else:
        file = scenario_loader.parse_model(
            DesignFile, {"scenario": args.scenario, "mode": args.mode}, source="command line"
        )
    out = Path(args.out or file.outputs)
    result = service.design(service.design_inputs(file), file.mode, out_dir=out)
    print(result.to_text(), end="")
    return 0 if result.valid else 1


def _tables_defaults(args: argparse.Namespace):
    params, tolerance, ics = {}, 0.5, args.ic_distribution
    if args.config:
        file = scenario_loader.load_scenario_file(args.config)
        params, tolerance = dict(file.params), file.checks.table_tolerance
        scenario = args.scenario or file.scenario
        n_ic = args.n_ic or file.monte_carlo.n_ic
        seed = args.seed if args.seed is not None else file.monte_carlo.seed
        ics = ics or file.monte_carlo.ic_distribution
    else:
        scenario, n_ic, seed = args.scenario, args.n_ic, args.seed
    if not scenario:
        raise ScenarioConfigError("a scenario is required (--scenario or --config)", field="scenario")
    return scenario, params, tolerance, n_ic, seed, ics


def _cmd_tables(args: argparse.Namespace, service: ExperimentService) -> int:
    scenario, params, tolerance, n_ic, seed, ics = _tables_defaults(args)
    result = service.tables(scenario, horizons=args.horizon or TABLE_HORIZONS, n_ic=n_ic, seed=seed,
                            params=params, out_dir=Path(args.out) if args.out else None, tolerance=tolerance,
                            ic_distribution=ics)
    for row in result.rows:
        gap = "-" if row.min_gap is None else f"{row.min_gap:.4g}"
        ref = "" if row.published_count is None else f"  (published {row.published_count:g} / {row.published_min_gap:g})"
        print(f"{row.rule:11s} {row.horizon:6g}s  count={row.mean_count:8.2f}  min_gap={gap}{ref}")
    print(f"table written to {result.path}")
    return 0 if result.passed else 1


def _cmd_sweep(args: argparse.Namespace, service: ExperimentService) -> int:
    scenario, params, tolerance, n_ic, seed, ics = _tables_defaults(args)
    horizon = args.horizon[0] if args.horizon else TABLE_HORIZONS[0]
    result = service.sweep(scenario, args.param, args.values, horizon=horizon, n_ic=n_ic, seed=seed,
                           params=params, out_dir=Path(args.out) if args.out else None, tolerance=tolerance,
                           ic_distribution=ics)
    for row in result.rows:
        gap = "-" if row.min_gap is None else f"{row.min_gap:.4g}"
        print(f"{args.param}={row.value:<8g} {row.rule:11s} count={row.mean_count:8.2f}  min_gap={gap}")
    print(f"sweep written to {result.path}")
    return 0 if service.static_trend_ok(result) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etc-toolkit", description=settings.PROJECT_NAME)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario file and verify its checks")
    run.add_argument("--config", required=True, help="scenario TOML file")
    run.add_argument("--out", help="artifact directory (overrides the file's 'outputs')")
    run.add_argument("--seed", type=int, help="disturbance seed override")
    run.set_defaults(handler=_cmd_run)

    design = sub.add_parser("design", help="synthesize decaying-trigger parameters")
    source = design.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="design TOML file")
    source.add_argument("--scenario", help="use a corpus scenario's fixture inputs")
    design.add_argument("--mode", choices=("continuous", "discrete", "both"), default="both")
    design.add_argument("--out", help="artifact directory")
    design.set_defaults(handler=_cmd_design)

    for name, helptext in (("tables", "reproduce event-count tables over seeded initial conditions"),
                           ("sweep", "sweep one scenario parameter")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", help="corpus scenario name")
        p.add_argument("--config", help="scenario TOML file supplying params and Monte-Carlo settings")
        p.add_argument("--n-ic", type=int, dest="n_ic", help="number of initial conditions")
        p.add_argument("--seed", type=int, help="Monte-Carlo seed")
        p.add_argument("--ic-distribution", dest="ic_distribution", choices=("uniform_ball", "uniform_interval"),
                       help="initial-condition law (default: the scenario's own)")
        p.add_argument("--horizon", type=float, nargs="+", help="horizon(s) in seconds")
        p.add_argument("--out", help="artifact directory")
        if name == "sweep":
            p.add_argument("--param", required=True, help="constructor parameter, e.g. lam")
            p.add_argument("--values", type=float, nargs="+", required=True)
            p.set_defaults(handler=_cmd_sweep)
        else:
            p.set_defaults(handler=_cmd_tables)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    service = ExperimentService()
    try:
        return args.handler(args, service)
    except ZenoSuspicionError as e:
        logger.error(f"ZENO GUARD: {e} (events={e.event_count}, t={e.t:.9g})")
        print(f"ZENO GUARD: {e}", file=sys.stderr)
        return exit_code_for(e)
    except SimulationAbort as e:
        logger.error(f"DIVERGENCE GUARD: {e}")
        print(f"DIVERGENCE GUARD: {e}", file=sys.stderr)
        return exit_code_for(e)
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
