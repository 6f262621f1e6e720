"""Command line interface.

Subcommands: map, simulate, compare, calibrate, fsm-export, report.

Exit codes: 0 success, 2 input error (unreadable or malformed documents,
unknown policy names, missing node_mapping), 3 validation error (documents
parse but are semantically inconsistent), 4 calibration residual above
threshold.  The environment variable TOPOMAP_SEED, when set, overrides the
scenario seed for simulate and compare.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .calibrate import TargetError, calibrate, load_targets, result_to_json
from .gateway import transition_table
from .graph import (
    BadAnnotationError,
    DuplicateIdError,
    GraphSyntaxError,
    UnknownEndpointError,
    UnknownTopicError,
    load_document,
)
from .mapping import (
    MappingError,
    MappingPolicy,
    map_communication,
    mapping_report,
)
from .platform_model import PlatformModel, cost_params_from_platform
from .simulator import (
    ScenarioError,
    compare_grid,
    compare_to_csv,
    compute_stats,
    load_scenario,
    simulate,
    stats_to_csv,
    trace_to_csv,
)


class _InputError(Exception):
    pass


def _write_text(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_platform(path: str | None) -> PlatformModel:
    if path is None:
        return PlatformModel()
    return PlatformModel.load(path)


def _policy(name: str) -> MappingPolicy:
    try:
        return MappingPolicy(name)
    except ValueError:
        choices = ", ".join(p.value for p in MappingPolicy)
        raise _InputError(f"unknown policy {name!r} (choose from: {choices})") from None


def _seed_override() -> int | None:
    raw = os.environ.get("TOPOMAP_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise _InputError(f"TOPOMAP_SEED must be an integer, got {raw!r}") from None


# -- subcommands -------------------------------------------------------------


def cmd_map(args) -> int:
    graph, node_mapping = load_document(args.graph)
    if node_mapping is None:
        raise _InputError(f"graph document {args.graph!r}: missing required field 'node_mapping'")
    policy = _policy(args.policy)
    platform = _load_platform(args.platform)
    cost_params = cost_params_from_platform(platform)
    comm_mapping, rationales = map_communication(graph, node_mapping, policy, cost_params)
    report = mapping_report(graph, node_mapping, comm_mapping, rationales)
    _write_text(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    platform = _load_platform(args.platform)
    result = simulate(scenario, platform, seed=_seed_override())
    if args.trace:
        _write_text(args.trace, trace_to_csv(result))
    if args.stats:
        _write_text(args.stats, stats_to_csv(compute_stats(result)))
    print(f"simulated {len(result.trace)} events, {len(result.deliveries)} deliveries")
    return 0


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    platform = _load_platform(args.platform)
    names = [p.strip() for p in args.policies.split(",")]
    if len(names) != 2:
        raise _InputError("--policies expects exactly two comma-separated policy names")
    policy_a, policy_b = (_policy(n) for n in names)
    seed = _seed_override()
    if scenario.grid is not None:
        header, rows = compare_grid(scenario, platform, policy_a, policy_b, seed=seed)
        _write_text(args.out, compare_to_csv(header, rows))
        return 0
    # no grid: compare mean delivery latency per (topic, subscriber)
    per_policy = {}
    for policy in (policy_a, policy_b):
        run = _with_policy(scenario, policy)
        result = simulate(run, platform, seed=seed)
        per_policy[policy.value] = {
            (r["topic"], r["subscriber"]): r["mean_us"] for r in compute_stats(result)
        }
    keys = sorted(set(per_policy[policy_a.value]) | set(per_policy[policy_b.value]))
    header = ["topic", "subscriber", f"mean_us_{policy_a.value}", f"mean_us_{policy_b.value}", "speedup"]
    rows = []
    for key in keys:
        a = per_policy[policy_a.value].get(key)
        b = per_policy[policy_b.value].get(key)
        rows.append([key[0], key[1], a, b, (a / b) if a and b else None])
    _write_text(args.out, compare_to_csv(header, rows))
    return 0


def _with_policy(scenario, policy):
    from dataclasses import replace

    return replace(scenario, comm_mapping=None, policy=policy)


def cmd_calibrate(args) -> int:
    targets, threshold = load_targets(args.targets)
    result = calibrate(targets, threshold=threshold)
    _write_text(args.out, result_to_json(result))
    for row in result.residuals:
        status = "ok" if row["ok"] else "MISS"
        print(
            f"{row['publisher_kind']}->{row['measure']} size={row['size_bytes']} "
            f"hw_subs={row['hw_subs']}: simulated {row['simulated_speedup']:.3f} "
            f"vs target {row['target_speedup']:.3f} ({row['rel_error']:+.1%}) {status}"
        )
    if not result.ok:
        print(f"calibration residual above threshold {threshold:.0%}", file=sys.stderr)
        return 4
    return 0


def cmd_fsm_export(args) -> int:
    _write_text(args.out, json.dumps(transition_table(), indent=2) + "\n")
    return 0


def cmd_report(args) -> int:
    with open(args.infile, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise _InputError(f"{args.infile!r}: empty comparison document")
    required = {"publisher_kind", "size_bytes", "hw_subs", "speedup_hw", "speedup_sw"}
    missing = required - set(rows[0])
    if missing:
        raise _InputError(f"{args.infile!r}: not a grid comparison (missing columns {sorted(missing)})")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for side in ("hw", "sw"):
        col = f"speedup_{side}"
        series: dict[str, dict[int, dict[int, str]]] = {}
        for row in rows:
            if not row[col]:
                continue
            pub = row["publisher_kind"]
            series.setdefault(pub, {}).setdefault(int(row["size_bytes"]), {})[int(row["hw_subs"])] = row[col]
        for pub, by_size in sorted(series.items()):
            ns = sorted({n for cells in by_size.values() for n in cells})
            path = out_dir / f"speedup_{pub}_to_{side}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["size_bytes"] + [f"n{n}" for n in ns])
                for size in sorted(by_size):
                    writer.writerow([size] + [by_size[size].get(n, "") for n in ns])
            written.append(str(path))
    for path in written:
        print(path)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topomap",
        description="Map pub-sub topics onto transports and simulate the result.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="assign every topic a transport implementation")
    p.add_argument("--graph", required=True, help="graph document (JSON, with node_mapping)")
    p.add_argument("--policy", required=True, help="cost | multi-hw-sub | smt")
    p.add_argument("--platform", help="platform document to derive the cost model from")
    p.add_argument("--out", help="mapping report path (default: stdout)")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--platform")
    p.add_argument("--trace", help="write the event trace CSV here")
    p.add_argument("--stats", help="write per-(topic, subscriber) latency stats CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run a scenario under two policies")
    p.add_argument("--scenario", required=True)
    p.add_argument("--platform")
    p.add_argument("--policies", required=True, help="two policy names, comma separated")
    p.add_argument("--out", help="comparison CSV path (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="fit platform parameters to speedup targets")
    p.add_argument("--targets", required=True)
    p.add_argument("--out", help="calibration result JSON path (default: stdout)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fsm-export", help="dump the gateway transition table as JSON")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_fsm_export)

    p = sub.add_parser("report", help="pivot a grid comparison CSV into speedup series")
    p.add_argument("--in", dest="infile", required=True, help="comparison CSV from 'compare'")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (_InputError, GraphSyntaxError, ScenarioError, TargetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2
    except (
        DuplicateIdError,
        UnknownEndpointError,
        BadAnnotationError,
        UnknownTopicError,
        MappingError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
