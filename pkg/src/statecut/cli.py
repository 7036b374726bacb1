"""Command-line surface.

Subcommands: run, plan, checkpoint, restore, verify, sweep, gen, bench.
Exit codes: 0 success, 2 infeasible plan, 3 verification failure,
4 malformed trace or checkpoint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .errors import FormatError, Infeasible, StatecutError
from .gen import GenParams, generate_trace
from .history import HistoryGraph
from .planner import baseline_plans, plan_session, session_cost_model
from .replicator import read_checkpoint, restore, verify, write_checkpoint
from .trace import load_trace, run_trace, save_trace

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VERIFY_FAILED = 3
EXIT_FORMAT = 4


def _ablate(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    flags = tuple(part.strip() for part in value.split(",") if part.strip())
    for flag in flags:
        if flag not in ("no-linked", "no-idgraph"):
            raise FormatError(f"unknown ablation {flag!r}")
    return flags


def _plan_kwargs(args) -> dict:
    return {
        "alpha": args.alpha,
        "bandwidth": args.bandwidth,
        "latency": args.latency,
        "objective": args.objective,
        "ablate": _ablate(args.ablate),
    }


def _add_plan_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=None,
                        help="storage-time discount (overrides --objective)")
    parser.add_argument("--bandwidth", type=float, default=None,
                        help="storage bandwidth, bytes/s")
    parser.add_argument("--latency", type=float, default=None,
                        help="storage latency, seconds")
    parser.add_argument("--objective", choices=["migrate", "restore"], default=None,
                        help="migrate: alpha=1; restore: alpha=0.05")
    parser.add_argument("--ablate", default=None,
                        help="comma-separated: no-linked,no-idgraph")


def cmd_run(args) -> int:
    trace = load_trace(args.trace)
    session, records = run_trace(trace, ablate=_ablate(args.ablate))
    history = session.history
    edges = sum(len(v) for v in history.reads.values()) + sum(
        len(v) for v in history.writes.values()
    )
    print(f"cells executed:   {len(history.cells)}")
    print(f"history graph:    {sum(len(v) for v in history.snapshots.values())} snapshots, "
          f"{len(history.cells)} cell executions, {edges} edges")
    active = history.active_snapshots()
    print(f"active variables: {', '.join(sorted(active)) or '(none)'}")
    for rec in records:
        reads = ",".join(sorted(vs.name for vs in rec.accessed)) or "-"
        writes = ",".join(sorted(rec.written | rec.created)) or "-"
        deletes = ",".join(sorted(rec.deleted)) or "-"
        status = " FAILED" if rec.failed else ""
        print(f"  t={rec.t:<4} {rec.code_ref:<12} reads={reads:<24} "
              f"writes={writes:<24} deletes={deletes}{status}")
    return EXIT_OK


def cmd_plan(args) -> int:
    trace = load_trace(args.trace)
    session, _ = run_trace(trace, ablate=_ablate(args.ablate))
    plan = plan_session(session, **_plan_kwargs(args))
    output = plan.to_json()
    if args.baselines:
        cost = session_cost_model(
            session, alpha=args.alpha, bandwidth=args.bandwidth,
            latency=args.latency, objective=args.objective,
        )
        output["baselines"] = {
            name: {"cost_s": p.cost_s}
            for name, p in baseline_plans(session.history, cost).items()
        }
    text = json.dumps(output, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_checkpoint(args) -> int:
    trace = load_trace(args.trace)
    session, _ = run_trace(trace, ablate=_ablate(args.ablate))
    plan = plan_session(session, **_plan_kwargs(args))
    write_checkpoint(session, plan, args.out)
    size = Path(args.out).stat().st_size
    print(json.dumps({"checkpoint": str(args.out), "bytes": size, "plan": plan.to_json()}, indent=2))
    return EXIT_OK


def cmd_restore(args) -> int:
    checkpoint = read_checkpoint(args.checkpoint)
    trace = load_trace(args.trace)
    result = restore(checkpoint, trace.programs())
    heap = result.session.heap
    summary = {
        "variables": {
            name: {
                "objects": len(heap.reachable(name)),
                "kind": heap.objects[heap.namespace[name]].kind,
            }
            for name in sorted(heap.namespace)
        },
        "fallback_recomputed": result.fallback_recomputed,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    trace = load_trace(args.trace)
    original, _ = run_trace(trace)
    checkpoint = read_checkpoint(args.checkpoint)
    result = restore(checkpoint, trace.programs())
    report = verify(original.heap, result.session.heap)
    print(json.dumps(report.to_json(), indent=2))
    return EXIT_OK if report.isomorphic else EXIT_VERIFY_FAILED


def cmd_sweep(args) -> int:
    trace = load_trace(args.trace)
    bandwidths = [float(b) for b in args.bandwidths.split(",")]
    rows = []
    for bandwidth in bandwidths:
        session, _ = run_trace(trace)
        plan = plan_session(
            session, alpha=args.alpha, bandwidth=bandwidth,
            latency=args.latency, objective=args.objective,
        )
        migrated_bytes = sum(session.cost.var_sizes[n] for n in plan.migrate)
        rows.append({
            "bandwidth_bytes_per_s": bandwidth,
            "cost_s": plan.cost_s,
            "migrate_count": len(plan.migrate),
            "migrated_bytes": migrated_bytes,
        })
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(f"{'bandwidth B/s':>14} {'plan cost s':>12} {'|migrate|':>10} {'migrated B':>12}")
        for row in rows:
            print(f"{row['bandwidth_bytes_per_s']:>14.3g} {row['cost_s']:>12.4f} "
                  f"{row['migrate_count']:>10} {row['migrated_bytes']:>12}")
    return EXIT_OK


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get("STATECUT_SEED", "0"))
    params = GenParams(
        cells=args.cells,
        variables=args.variables,
        alias_density=args.alias_density,
        unserializable_rate=args.unserializable_rate,
        undeserializable_rate=args.undeserializable_rate,
        never_rerun_rate=args.never_rerun_rate,
        nondet_rate=args.nondet_rate,
    )
    trace = generate_trace(params, seed)
    save_trace(trace, args.out)
    print(f"wrote {args.out} ({params.cells} cells, seed {seed})")
    return EXIT_OK


def _deep_bytes(value, seen: set[int]) -> int:
    if id(value) in seen:
        return 0
    seen.add(id(value))
    total = sys.getsizeof(value)
    if isinstance(value, dict):
        for k, v in value.items():
            total += _deep_bytes(k, seen) + _deep_bytes(v, seen)
    elif isinstance(value, (list, tuple, set, frozenset)):
        for item in value:
            total += _deep_bytes(item, seen)
    elif hasattr(value, "__dict__"):
        total += _deep_bytes(vars(value), seen)
    return total


def history_memory_bytes(history: HistoryGraph) -> int:
    """In-memory footprint of the lineage graph, metadata only."""
    return _deep_bytes(history, set())


def run_bench(n_cells: int, seed: int = 0) -> dict:
    """Scalability probe: monitor ``n_cells`` re-executions over a small
    variable pool, then time planning and measure graph memory."""
    params = GenParams(
        cells=n_cells, variables=20, alias_density=0.2,
        unserializable_rate=0.05, delete_rate=0.02,
    )
    trace = generate_trace(params, seed)
    session, _ = run_trace(trace)
    start = time.perf_counter()
    plan = plan_session(session)
    plan_ms = (time.perf_counter() - start) * 1e3
    return {
        "cells": n_cells,
        "ahg_bytes": history_memory_bytes(session.history),
        "plan_ms": plan_ms,
        "plan_cost_s": plan.cost_s,
    }


def cmd_bench(args) -> int:
    result = run_bench(args.cells, args.seed)
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(f"cells:     {result['cells']}")
        print(f"ahg bytes: {result['ahg_bytes']}")
        print(f"plan ms:   {result['plan_ms']:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statecut",
        description="Replicate session state by balancing variable copying against recomputation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replay a trace under monitoring and print lineage stats")
    p.add_argument("trace")
    p.add_argument("--ablate", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plan", help="compute a replication plan for a trace")
    p.add_argument("trace")
    _add_plan_flags(p)
    p.add_argument("--baselines", action="store_true", help="include copy-all/rerun-all costs")
    p.add_argument("-o", "--out", default=None, help="also write the plan JSON here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("checkpoint", help="plan and write a checkpoint file")
    p.add_argument("trace")
    p.add_argument("out")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_checkpoint)

    p = sub.add_parser("restore", help="restore a session from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--trace", required=True, help="trace archive providing rerun cell programs")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("verify", help="restore and compare against the original session")
    p.add_argument("trace")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="re-plan a trace across storage bandwidths")
    p.add_argument("trace")
    p.add_argument("--bandwidths", required=True, help="comma-separated bytes/s values")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--latency", type=float, default=None)
    p.add_argument("--objective", choices=["migrate", "restore"], default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="generate a random session trace")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=None, help="defaults to $STATECUT_SEED or 0")
    p.add_argument("--cells", type=int, default=8)
    p.add_argument("--variables", type=int, default=6)
    p.add_argument("--alias-density", type=float, default=0.3)
    p.add_argument("--unserializable-rate", type=float, default=0.1)
    p.add_argument("--undeserializable-rate", type=float, default=0.0)
    p.add_argument("--never-rerun-rate", type=float, default=0.0)
    p.add_argument("--nondet-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="scalability probe: lineage memory and planning time")
    p.add_argument("--cells", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except Infeasible as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StatecutError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
