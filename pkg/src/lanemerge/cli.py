"""Command-line front end: run scenarios, sweep alpha, dump queue tables.

Subcommands::

    lanemerge run --config cfg.json --alpha 0.25 --seed 1 --mode ocbf \
        --no-noise --horizon 3600 --out results/
    lanemerge case-count 5
    lanemerge dump-tables results/alpha0.25_seed1 --t 120

Exit codes: 0 success, 1 configuration error, 2 simulation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import sim
from .decision import case_count
from .scenario import (
    MODE_CBF_ONLY, MODE_OCBF, ConfigError, ScenarioParams, SimConfig,
    beta_from_alpha, load_config,
)

SUMMARY_HEADER = "mode\talpha\tnoise\tavg_time\tavg_half_u2\tavg_objective\tvehicles"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanemerge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one or more (alpha, seed) cells")
    p_run.add_argument("--config", type=Path, default=None)
    p_run.add_argument("--alpha", type=float, action="append", default=None)
    p_run.add_argument("--seed", type=int, action="append", default=None)
    p_run.add_argument("--mode", choices=[MODE_OCBF, MODE_CBF_ONLY], default=None)
    p_run.add_argument("--noise", action=argparse.BooleanOptionalAction, default=None)
    p_run.add_argument("--horizon", type=float, default=None)
    p_run.add_argument("--out", type=Path, default=None)
    p_run.add_argument("--snapshot-interval", type=float, default=1.0)

    p_case = sub.add_parser("case-count", help="matcher case count for n merge points")
    p_case.add_argument("n", type=int)

    p_dump = sub.add_parser("dump-tables", help="print recorded queue tables")
    p_dump.add_argument("artifact", type=Path, help="run output cell directory")
    p_dump.add_argument("--t", type=float, required=True)
    return parser


def _cell_name(alpha, seed: int) -> str:
    a = "default" if alpha is None else f"{alpha:g}"
    return f"alpha{a}_seed{seed}"


def cmd_run(args) -> int:
    try:
        params, config = load_config(args.config if args.config else {})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    overrides = {}
    if args.mode is not None:
        overrides["controller_mode"] = args.mode
    if args.noise is not None:
        overrides["noise_enabled"] = args.noise
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    config = dataclasses.replace(config, **overrides)

    alphas = args.alpha if args.alpha else [params.alpha]
    seeds = args.seed if args.seed else [config.rng_seed]
    out_dir = args.out
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    summary = [SUMMARY_HEADER]
    try:
        for alpha in alphas:
            if alpha is None:
                cell_params = params
            else:
                beta = beta_from_alpha(alpha, params.u_min, params.u_max)
                cell_params = dataclasses.replace(params, alpha=alpha, beta=beta)
            cell_params.validate()
            for seed in seeds:
                cell_config = dataclasses.replace(config, rng_seed=seed)
                cell_config.validate(cell_params)
                metrics = sim.run(cell_params, cell_config,
                                  snapshot_interval=args.snapshot_interval)
                alpha_txt = "-" if alpha is None else f"{alpha:g}"
                summary.append(
                    f"{cell_config.controller_mode}\t{alpha_txt}\t"
                    f"{'yes' if cell_config.noise_enabled else 'no'}\t"
                    f"{metrics.avg_travel_time:.4f}\t{metrics.avg_energy:.4f}\t"
                    f"{metrics.avg_objective:.4f}\t{metrics.count}")
                if out_dir is not None:
                    _write_cell(out_dir / _cell_name(alpha, seed), metrics)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except sim.SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 2

    text = "\n".join(summary)
    print(text)
    if out_dir is not None:
        (out_dir / "summary.txt").write_text(text + "\n")
    return 0


def _write_cell(cell_dir: Path, metrics: sim.Metrics) -> None:
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / "vehicles.txt").write_text(metrics.vehicles_table())
    (cell_dir / "series.txt").write_text(metrics.series_table())
    (cell_dir / "violations.txt").write_text(metrics.violations_table())
    (cell_dir / "crossings.txt").write_text(metrics.crossings_table())
    with open(cell_dir / "snapshots.txt", "w") as fh:
        for t, dump in metrics.snapshots:
            fh.write(f"#t={t:.4f}\n{dump}\n")


def cmd_case_count(args) -> int:
    try:
        print(case_count(args.n))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def read_snapshots(path: Path) -> list[tuple[float, str]]:
    """Parse a snapshots file back into (time, dump text) blocks."""
    blocks = []
    current_t = None
    current: list[str] = []
    for line in path.read_text().splitlines():
        if line.startswith("#t="):
            if current_t is not None:
                blocks.append((current_t, "\n".join(current).strip("\n")))
            current_t = float(line[3:])
            current = []
        else:
            current.append(line)
    if current_t is not None:
        blocks.append((current_t, "\n".join(current).strip("\n")))
    return blocks


def cmd_dump_tables(args) -> int:
    snap_path = args.artifact / "snapshots.txt"
    if not snap_path.exists():
        print(f"error: no snapshots recorded at {snap_path}", file=sys.stderr)
        return 1
    blocks = read_snapshots(snap_path)
    if not blocks:
        print("error: snapshots file is empty", file=sys.stderr)
        return 1
    t_min, t_max = blocks[0][0], blocks[-1][0]
    if not t_min <= args.t <= t_max:
        print(f"error: t={args.t} outside recorded range [{t_min}, {t_max}]",
              file=sys.stderr)
        return 1
    t, dump = min(blocks, key=lambda b: abs(b[0] - args.t))
    print(f"# tables at t={t:g}")
    print(dump)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "case-count":
        return cmd_case_count(args)
    if args.command == "dump-tables":
        return cmd_dump_tables(args)
    return 1


if __name__ == "__main__":
    sys.exit(main())
