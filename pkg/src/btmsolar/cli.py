"""Command-line front end.

Subcommands compose through files only: `synth` writes a dataset,
`similarity` and `reconstruct` consume meter plus weather files,
`scenario` and `metrics` build on the reconstruction, `plot` renders the
metric CSVs. Every failure exits nonzero after printing one
machine-parsable ``E_*: detail`` line on stderr. Outputs are byte-stable
for a given configuration; run manifests embed the config hash rather
than a timestamp unless ``--stamp`` is given.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import RunConfig
from .core import Dataset
from .errors import PipelineError
from .metrics import build_validation_report, summary_text, write_report_files
from .meterio import IngestReport, load_dataset
from .reconstruction import reconstruct_all, write_reconstruction_csv
from .scenario import (
    aggregate_profiles,
    annual_pool,
    build_scenario,
    require_feasible,
    write_feeder_csv,
    write_manifest_csv,
    write_monthly_csv,
)
from .similarity import (
    select_all_neighbors,
    similarity_matrix,
    write_matrix_csv,
    write_neighbors_csv,
)
from .synthgen import emit_dataset, generate
from .weather import daily_avg_weight, interval_weights

log = logging.getLogger(__name__)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one configuration key")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel worker cap (results identical for any value)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--stamp", action="store_true",
                        help="embed a wall-clock timestamp in the run manifest")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btmsolar",
        description="Behind-the-meter solar reconstruction and scenario synthesis",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    _common_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("similarity", help="compute the distance matrix and neighbor sets")
    _common_flags(p)
    p.add_argument("--meters", required=True)
    p.add_argument("--weather", required=True)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("reconstruct", help="estimate native load and corrected generation")
    _common_flags(p)
    p.add_argument("--meters", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--neighbors", help="reuse a neighbor CSV instead of recomputing")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("scenario", help="assemble feeder scenarios at target penetration")
    _common_flags(p)
    p.add_argument("--meters", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--target", type=float, action="append", required=True,
                   help="target penetration fraction (repeatable)")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("metrics", help="validate reconstruction against metered truth")
    _common_flags(p)
    p.add_argument("--meters", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--truth", help="ground-truth total generation CSV")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("plot", help="render SVG figures from metric/scenario CSVs")
    _common_flags(p)
    p.add_argument("--annual", help="annual_errors.csv path")
    p.add_argument("--grid", help="hour_month_grid.csv path")
    p.add_argument("--monthly", help="scenario monthly rollup CSV path")
    p.set_defaults(func=cmd_plot)
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(
    args, config: RunConfig, out: Path, extra: list[str]
) -> None:
    lines = [
        f"command: {args.command}",
        f"config_hash: {config.content_hash()}",
        f"workers: {args.workers}",
    ]
    if args.stamp:
        lines.append(f"run_at: {datetime.now(timezone.utc).isoformat()}")
    lines += extra
    lines.append("")
    lines += [f"{k} = {config.values[k]}" for k in sorted(config.values)]
    lines += [f"condition.{n} = {g.value}"
              for n, g in sorted(config.condition_overrides.items())]
    (out / "run_manifest.txt").write_text("\n".join(lines) + "\n")


def _coverage_lines(dataset: Dataset, report: IngestReport) -> list[str]:
    cal = dataset.calendar
    gaps = sum(report.alignment.gap_counts.values())
    return [
        f"customers: {len(dataset.customers)} "
        f"(solar {len(dataset.solar_ids())}, non-solar {len(dataset.nonsolar_ids())})",
        f"calendar: {cal.n_intervals} intervals x {cal.interval}, {cal.n_days} days",
        f"gap_intervals: {gaps}",
    ]


def _load(args, config: RunConfig, truth_path=None):
    return load_dataset(
        args.meters,
        args.weather,
        daytime=config.daytime_spec(),
        convention=config.sign_convention(),
        truth_path=truth_path,
    )


def _similarity_stage(args, config: RunConfig, dataset: Dataset):
    table = config.weather_table()
    weights = interval_weights(dataset.weather, dataset.calendar, table)
    daily = daily_avg_weight(weights, dataset.calendar)
    matrix = similarity_matrix(
        dataset, daily,
        workers=args.workers,
        gap_day_fraction=float(config["gap.day_fraction"]),
    )
    neighbors = select_all_neighbors(matrix, config.selection_rule())
    return matrix, neighbors


def cmd_synth(args, config: RunConfig) -> int:
    out = _out_dir(args)
    dataset, truth = generate(config.synth_config())
    paths = emit_dataset(dataset, truth, out, seed=int(config["synth.seed"]))
    _write_manifest(args, config, out, _coverage_lines(dataset, IngestReport()))
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_similarity(args, config: RunConfig) -> int:
    out = _out_dir(args)
    dataset, report = _load(args, config)
    matrix, neighbors = _similarity_stage(args, config, dataset)
    write_matrix_csv(out / "matrix.csv", matrix)
    write_neighbors_csv(out / "neighbors.csv", neighbors)
    _write_manifest(args, config, out, _coverage_lines(dataset, report))
    print(f"matrix: {out / 'matrix.csv'}")
    print(f"neighbors: {out / 'neighbors.csv'}")
    return 0


def cmd_reconstruct(args, config: RunConfig) -> int:
    out = _out_dir(args)
    dataset, report = _load(args, config)
    path = out / "reconstruction.csv"
    if not dataset.solar_ids():
        log.warning("no solar customers in %s; writing empty reconstruction", args.meters)
        write_reconstruction_csv(path, {}, dataset.calendar)
        _write_manifest(args, config, out, _coverage_lines(dataset, report))
        print(f"reconstruction: {path} (no solar customers)")
        return 0
    if args.neighbors:
        from .similarity import read_neighbors_csv

        neighbors = read_neighbors_csv(args.neighbors)
    else:
        _, neighbors = _similarity_stage(args, config, dataset)
    results = reconstruct_all(dataset, neighbors, workers=args.workers)
    write_reconstruction_csv(path, results, dataset.calendar)
    recovered = sum(r.recovered_kwh for r in results.values())
    _write_manifest(args, config, out,
                    _coverage_lines(dataset, report) + [f"recovered_kwh: {recovered!r}"])
    print(f"reconstruction: {path}")
    print(f"recovered_kwh_total: {recovered!r}")
    return 0


def cmd_scenario(args, config: RunConfig) -> int:
    out = _out_dir(args)
    dataset, report = _load(args, config)
    _, neighbors = _similarity_stage(args, config, dataset)
    results = reconstruct_all(dataset, neighbors, workers=args.workers)
    pool = annual_pool(dataset, results)

    scenarios = []
    aggregates = []
    for target in args.target:
        name = f"p{int(round(target * 100)):02d}"
        sc = build_scenario(
            pool,
            target=target,
            tolerance=float(config["scenario.tolerance"]),
            seed=int(config["scenario.seed"]),
            with_replacement=bool(config["scenario.with_replacement"]),
            max_members=int(config["scenario.max_members"]),
            name=name,
        )
        require_feasible(sc)
        scenarios.append(sc)
        agg = aggregate_profiles(sc, dataset, results)
        aggregates.append(agg)
        write_feeder_csv(out / f"feeder_{name}.csv", agg, dataset.calendar)
        print(f"{name}: achieved {sc.achieved_penetration:.4f} "
              f"(target {target}, members {sc.member_count()})")
    write_manifest_csv(out / "scenario_members.csv", scenarios)
    write_monthly_csv(out / "scenario_monthly.csv", aggregates)
    _write_manifest(args, config, out, _coverage_lines(dataset, report))
    return 0


def cmd_metrics(args, config: RunConfig) -> int:
    out = _out_dir(args)
    dataset, report = _load(args, config, truth_path=args.truth)
    _, neighbors = _similarity_stage(args, config, dataset)
    results = reconstruct_all(dataset, neighbors, workers=args.workers)
    validation = build_validation_report(
        results, dataset.calendar, capacity_norm=bool(config["capacity_norm"])
    )
    write_report_files(validation, out)
    _write_manifest(args, config, out, _coverage_lines(dataset, report))
    sys.stdout.write(summary_text(validation))
    return 0


def cmd_plot(args, config: RunConfig) -> int:
    from . import plots

    out = _out_dir(args)
    made = []
    if args.annual:
        made.append(plots.plot_annual_histogram(args.annual, out / "annual_errors.svg"))
    if args.grid:
        made.append(plots.plot_grid_heatmap(args.grid, out / "hour_month_grid.svg"))
    if args.monthly:
        made.append(plots.plot_monthly_bars(args.monthly, out / "monthly_bars.svg"))
    if not made:
        print("nothing to plot: pass --annual, --grid, and/or --monthly", file=sys.stderr)
        return 2
    for path in made:
        print(f"figure: {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.resolve(args.config, args.overrides)
        return args.func(args, config)
    except PipelineError as err:
        print(f"{err.code}: {err}", file=sys.stderr)
        return err.exit_status


if __name__ == "__main__":
    sys.exit(main())
