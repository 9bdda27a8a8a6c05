"""Command-line entry point: ``replan-kit {run,bench,diffmap,plot}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DimensionMismatchError, MapFormatError, ScenarioError
from .gridmap import Costmap, cost_diff, load_map
from .replanner import BACKENDS, GATINGS, PROPOSED
from .sim import RunMetrics, Scenario, aggregate, load_scenario, run_scenario, write_traces

EXIT_OK = 0
EXIT_FAILED_RUN = 1
EXIT_BAD_INPUT = 2

OUT_ENV = "REPLAN_KIT_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV) or "out")


def environment_string() -> str:
    return (
        f"{platform.platform()}; {platform.machine() or 'unknown machine'}; "
        f"{platform.processor() or 'unknown cpu'}; {os.cpu_count()} cpus; "
        f"python {platform.python_version()}"
    )


def scenario_ref(path: str | Path) -> dict:
    data = Path(path).read_bytes()
    return {"path": str(path), "sha256": hashlib.sha256(data).hexdigest()}


def fmt_mean_sd(stat: dict, decimals: int) -> str:
    return f"{stat['mean']:.{decimals}f} ±{stat['sd']:.{decimals}f}"


@dataclass
class BenchRow:
    planner: str
    gating: str
    initial_time: dict
    replanning_times: list[dict]
    total_time: dict
    expansions_total: dict
    goal_reached: bool
    runs: list[dict] = field(default_factory=list)

    @classmethod
    def from_runs(cls, planner: str, gating: str, runs: list[RunMetrics]) -> BenchRow:
        agg = aggregate(runs)
        per_run = [
            {
                "outcome_counts": r.outcome_counts,
                "path": [list(c) for c in r.path_travelled],
                "expansions": [t.expansions for t in r.ticks],
                "expansions_total": r.expansions_total,
                "goal_reached": r.goal_reached,
                "failure_reason": r.failure_reason,
            }
            for r in runs
        ]
        return cls(
            planner, gating, agg["initial_planning_time"], agg["replanning_times"],
            agg["total_planning_time"], agg["expansions_total"], agg["goal_reached"], per_run,
        )

    def to_json(self) -> dict:
        return {
            "planner": self.planner,
            "gating": self.gating,
            "initial_time": self.initial_time,
            "replanning_times": self.replanning_times,
            "total_time": self.total_time,
            "expansions_total": self.expansions_total,
            "goal_reached": self.goal_reached,
            "runs": self.runs,
        }


@dataclass
class BenchReport:
    rows: list[BenchRow]
    scenario_ref: dict
    environment: str
    decimals: int = 2

    def n_events(self) -> int:
        return max((len(r.replanning_times) for r in self.rows), default=0)

    def header(self) -> list[str]:
        cols = ["planner", "gating", "initial [s]"]
        cols += [f"replan {i + 1} [s]" for i in range(self.n_events())]
        return cols + ["total [s]", "expansions"]

    def cells(self) -> list[list[str]]:
        """Formatted table body; both the text table and the CSV render these."""
        d = self.decimals
        out = []
        for row in self.rows:
            line = [row.planner, row.gating, fmt_mean_sd(row.initial_time, d)]
            for i in range(self.n_events()):
                line.append(fmt_mean_sd(row.replanning_times[i], d) if i < len(row.replanning_times) else "-")
            line += [fmt_mean_sd(row.total_time, d), fmt_mean_sd(row.expansions_total, 1)]
            out.append(line)
        return out

    def render_table(self) -> str:
        table = [self.header()] + self.cells()
        widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in table]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.cells())
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "scenario_ref": self.scenario_ref,
            "environment": self.environment,
            "decimals": self.decimals,
            "header": self.header(),
            "table": self.cells(),
            "rows": [r.to_json() for r in self.rows],
        }


def _split_list(value: str, allowed: tuple[str, ...], what: str) -> list[str]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    for v in items:
        if v not in allowed:
            raise argparse.ArgumentTypeError(f"unknown {what} {v!r}; expected one of {', '.join(allowed)}")
    return items


def _apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    return scenario.replace(
        planner=getattr(args, "planner", None),
        gating=getattr(args, "gating", None),
        runs=args.runs,
        seed=args.seed,
        planner_frequency=args.frequency,
        noise_threshold=args.threshold,
    )


def _run_exit_code(runs: list[RunMetrics]) -> int:
    return EXIT_OK if all(r.goal_reached for r in runs) else EXIT_FAILED_RUN


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    out_dir = Path(args.out) if args.out else default_out_dir()
    stem = Path(args.scenario).stem
    runs, _ = run_scenario(scenario)
    for i, m in enumerate(runs):
        prefix = f"{stem}_{scenario.planner}_{scenario.gating}_run{i}"
        write_traces(m, out_dir, prefix)
        status = "goal reached" if m.goal_reached else f"failed ({m.failure_reason})"
        counts = " ".join(f"{k}={v}" for k, v in m.outcome_counts.items())
        print(
            f"run {i}: {status}; ticks={len(m.ticks)} expansions={m.expansions_total} "
            f"planning_time={m.total_planning_time:.4f}s sim_time={m.sim_time:.2f}s {counts}"
        )
    print(f"traces written to {out_dir}")
    return _run_exit_code(runs)


def bench(
    scenario_path: str | Path,
    planners: list[str],
    gatings: list[str],
    scenario: Scenario | None = None,
    decimals: int = 2,
) -> tuple[BenchReport, list[RunMetrics]]:
    """Run every planner x gating combination and collect the report."""
    if scenario is None:
        scenario = load_scenario(scenario_path)
    rows, all_runs = [], []
    for planner in planners:
        for gating in gatings:
            runs, _ = run_scenario(scenario.replace(planner=planner, gating=gating))
            rows.append(BenchRow.from_runs(planner, gating, runs))
            all_runs.extend(runs)
    return BenchReport(rows, scenario_ref(scenario_path), environment_string(), decimals), all_runs


def cmd_bench(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    report, runs = bench(args.scenario, args.planners, args.gatings, scenario, args.decimals)
    out_dir = Path(args.out) if args.out else default_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = Path(args.json) if args.json else out_dir / f"{Path(args.scenario).stem}.bench.json"
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    if args.format == "csv":
        sys.stdout.write(report.render_csv())
    else:
        print(report.render_table())
        print(f"scenario: {report.scenario_ref['path']} sha256={report.scenario_ref['sha256'][:12]}")
        print(f"environment: {report.environment}")
    print(f"report written to {json_path}", file=sys.stderr)
    return _run_exit_code(runs)


def read_map(path: str | Path) -> Costmap:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return Costmap.from_json(text) if path.suffix == ".json" else load_map(text)


def describe_delta(delta) -> str:
    n = len(delta)
    noun = "cell" if n == 1 else "cells"
    if n == 0:
        return f"0 changed {noun}"
    (r0, c0), (r1, c1) = delta.bounding_box()
    return f"{n} changed {noun}, magnitude {delta.magnitude}, bounding box ({r0}, {c0})-({r1}, {c1})"


def cmd_diffmap(args: argparse.Namespace) -> int:
    try:
        delta = cost_diff(read_map(args.map_b), read_map(args.map_a), args.threshold)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    print(describe_delta(delta))
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    from .plotting import plot_traces

    scenario = load_scenario(args.scenario)
    try:
        out = plot_traces(scenario, args.prefix, args.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    print(f"plot written to {out}")
    return EXIT_OK


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--runs", type=int, help="repetitions (default: scenario value)")
    p.add_argument("--seed", type=int, help="seed for event placement jitter")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out)")
    p.add_argument("--frequency", type=float, help="planner frequency in Hz")
    p.add_argument("--threshold", type=int, help="costmap noise threshold for change detection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replan-kit", description="Change-gated grid replanning toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write traces")
    p.add_argument("scenario")
    p.add_argument("--planner", choices=BACKENDS)
    p.add_argument("--gating", choices=GATINGS)
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="benchmark planner x gating combinations")
    p.add_argument("scenario")
    p.add_argument(
        "--planners", "--planner", dest="planners", default=",".join(BACKENDS),
        type=lambda v: _split_list(v, BACKENDS, "planner"), help="comma-separated planners",
    )
    p.add_argument(
        "--gatings", "--gating", dest="gatings", default=PROPOSED,
        type=lambda v: _split_list(v, GATINGS, "gating"), help="comma-separated gating modes",
    )
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--json", help="report path (default: OUT/<scenario>.bench.json)")
    p.add_argument("--decimals", type=int, default=2, help="decimals for timing columns")
    _add_overrides(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diffmap", help="summarize the cost difference of two maps")
    p.add_argument("map_a")
    p.add_argument("map_b")
    p.add_argument("--threshold", type=int, default=0)
    p.set_defaults(func=cmd_diffmap)

    p = sub.add_parser("plot", help="draw the plans exported by 'run' over the scenario map")
    p.add_argument("scenario")
    p.add_argument("prefix", help="trace prefix, e.g. out/two_obstacles_dstar_lite_proposed_run0")
    p.add_argument("--output", help="image path (default: <prefix>.png)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, MapFormatError, DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
