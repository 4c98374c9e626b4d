"""Command-line front end: ``pimemb <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 validation or infeasibility,
3 oracle verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import costmodel
from .cache import CacheList, mine_cache_lists, read_cache_list, write_cache_list
from .engine import build_images, simulate_trace, write_matrix, simulate_forward
from .errors import PimError
from .model import EmbeddingTableSpec, ExperimentConfig
from .partition import (
    LEGAL_NC, balance_metrics, evaluate_shapes, optimize_uniform_shape,
    partition_cache_aware, partition_nonuniform, partition_uniform, read_plan,
    uniform_shape, write_plan,
)
from .trace import (
    block_access_histogram, generate_cooccur_trace, load_trace, profile, write_trace,
)

log = logging.getLogger("pimemb")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3
PLANNERS = ("uniform", "nonuniform", "cache-aware")
TIMESTAMP_KEY = "generated_at"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class ExperimentSpec:
    """Resolved inputs of a planning/simulation run."""

    config: ExperimentConfig
    table: EmbeddingTableSpec
    trace_path: Path
    planner: str = "cache-aware"
    n_c: int | None = None  # None = optimize
    out_dir: Path = Path(".")
    seed: int = 0


# ---------------------------------------------------------------- file output

def _atomic_write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _atomic_via(path: Path, writer, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(obj, tmp)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _write_json(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload[TIMESTAMP_KEY] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    _atomic_write(path, text + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------- helpers

def _config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config) if args.config else ExperimentConfig()


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _kv(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"expected key=value pairs, got {text!r}")
        try:
            out[key.strip()] = int(value)
        except ValueError:
            raise UsageError(f"{key.strip()}: expected an integer") from None
    unknown = set(out) - {"top_k", "min_support", "m_max"}
    if unknown:
        raise UsageError(f"unknown mining parameter {sorted(unknown)[0]!r}")
    return out


def _resolve_table(args, cfg: ExperimentConfig, trace) -> EmbeddingTableSpec:
    if cfg.tables:
        table = cfg.table(args.table)
    else:
        rows = args.items if args.items else trace.max_index() + 1
        table = EmbeddingTableSpec(args.table or 0, rows, args.dim,
                                   content_seed=args.seed)
    if trace.max_index() >= table.n_rows:
        raise PimError(f"trace index {trace.max_index()} >= table rows {table.n_rows}")
    return table


def _profile_summary(prof, n_blocks: int = 8) -> dict:
    blocks = block_access_histogram(prof, min(n_blocks, prof.n_items))
    lo = int(blocks.min())
    return {
        "table_id": prof.table_id,
        "n_items": prof.n_items,
        "total_samples": prof.total_samples,
        "total_accesses": prof.total_accesses,
        "avg_red": prof.avg_red,
        "distinct_items_accessed": int(np.count_nonzero(prof.counts)),
        "block_histogram": blocks.tolist(),
        "block_max_min_ratio": float(blocks.max() / lo) if lo else None,
    }


# ---------------------------------------------------------------- commands

def cmd_gen_trace(args) -> int:
    groups = []
    if args.groups:
        groups = [_int_list(g) for g in args.groups.split(";") if g.strip()]
    trace = generate_cooccur_trace(args.items, args.samples, args.avg_red, groups,
                                   args.group_prob, args.seed, zipf_s=args.zipf,
                                   table_id=args.table or 0)
    out = Path(args.out)
    _atomic_via(out / f"{args.name}.txt", write_trace, trace)
    summary = _profile_summary(profile(trace, args.items))
    summary["generator"] = {
        "items": args.items, "samples": args.samples, "avg_red": args.avg_red,
        "zipf": args.zipf, "groups": groups, "group_prob": args.group_prob,
        "seed": args.seed,
    }
    _write_json(out / f"{args.name}.profile.json", summary)
    log.info("wrote %d samples to %s", len(trace), out / f"{args.name}.txt")
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = _config(args)
    trace = load_trace(args.trace, args.table or 0)
    table = _resolve_table(args, cfg, trace)
    summary = _profile_summary(profile(trace, table.n_rows), args.blocks)
    _write_json(Path(args.out) / "profile.json", summary)
    if not args.quiet:
        print(json.dumps({k: summary[k] for k in ("total_samples", "avg_red",
                                                  "block_histogram")}))
    return EXIT_OK


def _mine(trace, prof, params: dict) -> CacheList:
    return mine_cache_lists(trace, prof, top_k=params.get("top_k", 1000),
                            min_support=params.get("min_support", 50),
                            m_max=params.get("m_max", 4))


def cmd_mine_cache(args) -> int:
    cfg = _config(args)
    trace = load_trace(args.trace, args.table or 0)
    table = _resolve_table(args, cfg, trace)
    prof = profile(trace, table.n_rows)
    cl = _mine(trace, prof, {"top_k": args.top_k, "min_support": args.min_support,
                             "m_max": args.m_max})
    out = Path(args.out)
    _atomic_via(out / "cache.txt", write_cache_list, cl)
    _write_json(out / "cache.json", {
        "groups": len(cl), "total_benefit": cl.total_benefit,
        "trace_accesses": prof.total_accesses,
        "saved_fraction": cl.total_benefit / max(prof.total_accesses, 1),
    })
    return EXIT_OK


def _plan(spec: ExperimentSpec, args, trace):
    cfg, table = spec.config, spec.table
    prof = profile(trace, table.n_rows)
    workload = cfg.workload
    if workload.avg_red is None:
        workload = workload.with_avg_red(prof.avg_red)
    report = {"table_id": table.table_id, "planner": spec.planner}
    if spec.n_c is None:
        scores = evaluate_shapes(table, cfg.cluster, workload, cfg.cost)
        shape = optimize_uniform_shape(table, cfg.cluster, workload, cfg.cost)
        log.info("N_c objective values (ns): %s -> chose N_c=%d",
                 {k: v for k, v in scores.items()}, shape.n_c)
        report["nc_candidates_ns"] = {str(k): v for k, v in scores.items()}
    else:
        shape = uniform_shape(table, cfg.cluster, spec.n_c)
    report["shape"] = {"n_r": shape.n_r, "n_c": shape.n_c,
                       "n_row_groups": shape.n_row_groups,
                       "column_shards": shape.column_shards}
    if spec.planner == "uniform":
        plan = partition_uniform(table, shape, cfg.cluster)
    elif spec.planner == "nonuniform":
        plan = partition_nonuniform(prof, shape, cfg.cluster)
    else:
        if args.cache:
            cl = read_cache_list(args.cache)
        else:
            cl = _mine(trace, prof, _kv(args.mine) if args.mine else {})
        plan = partition_cache_aware(prof, cl, shape, cfg.cluster)
        report["cache_groups_offered"] = len(cl)
        report["cache_groups_placed"] = len(plan.placed_groups)
    return plan, report


def cmd_partition(args) -> int:
    if args.planner == "cache-aware" and args.cache and args.mine:
        raise UsageError("--cache and --mine are mutually exclusive")
    cfg = _config(args)
    trace = load_trace(args.trace, args.table or 0)
    spec = ExperimentSpec(cfg, _resolve_table(args, cfg, trace), Path(args.trace),
                          args.planner, None if args.nc == "auto" else _nc(args.nc),
                          Path(args.out), args.seed)
    plan, report = _plan(spec, args, trace)
    report["balance"] = balance_metrics(plan, trace)
    report["per_row_group_bytes"] = plan.per_row_group_bytes
    out = Path(args.out)
    _atomic_via(out / "plan.txt", write_plan, plan)
    _write_json(out / "balance.json", report)
    if not args.quiet:
        b = report["balance"]
        print(f"{plan.planner}: N_c={plan.shape.n_c} groups={plan.n_row_groups} "
              f"accesses={b['total_accesses']} cv={b['cv']:.4f}")
    return EXIT_OK


def _nc(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"--nc expects an integer or 'auto', got {text!r}") from None


def cmd_simulate(args) -> int:
    cfg = _config(args)
    trace = load_trace(args.trace, args.table or 0)
    plan = read_plan(args.plan)
    if not cfg.tables and not args.items:
        args.items = plan.n_items
    table = _resolve_table(args, cfg, trace)
    images = build_images(plan, table)
    batch_size = cfg.workload.batch_size
    window = trace.slice(args.start, len(trace))
    run = simulate_trace(plan, images, window, cfg.cost, batch_size,
                         cfg.cluster.tasklets, n_batches=args.batches,
                         verify_table=table if args.verify else None)
    out = Path(args.out)
    rows = [(b, r.t_cpu_to_dpu, r.t_lookup_max, r.t_dpu_to_cpu, r.total)
            for b, r in enumerate(run.reports)]
    _write_csv(out / "breakdown.csv", ("batch", "stage1", "stage2_max", "stage3", "total"),
               rows)
    summary = {"planner": plan.planner, "n_c": plan.shape.n_c,
               "batch_size": batch_size, **run.stage_sums()}
    if args.verify:
        summary["verified"] = bool(run.verified)
        summary["mismatched_batches"] = run.mismatched_batches
    _write_json(out / "simulate.json", summary)
    if args.dump:
        first = window.slice(0, batch_size)
        res = simulate_forward(plan, images, first, cfg.cost, cfg.cluster.tasklets)
        _atomic_via(Path(args.dump), write_matrix, res.outputs)
    if not args.quiet:
        print(f"{plan.planner}: batches={summary['batches']} "
              f"stage2_share={summary['stage2_share']:.3f} "
              f"total_ns={summary['total_sum_ns']:.0f}")
    if args.verify and not run.verified:
        log.error("oracle mismatch in batches %s", run.mismatched_batches)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if cfg.tables:
        table = cfg.table(args.table)
    else:
        table = EmbeddingTableSpec(args.table or 0, args.items or 2_360_650, args.dim)
    rows = []
    for avg_red in _float_list(args.avg_red):
        workload = cfg.workload.with_avg_red(avg_red)
        for n_c in _int_list(args.nc):
            shape = uniform_shape(table, cfg.cluster, n_c, strict=False)
            accesses = costmodel.uniform_accesses(shape, table, workload)
            t1 = costmodel.cpu_to_dpu_time_uniform(shape, table, cfg.cluster,
                                                   workload, cfg.cost)
            t2 = costmodel.lookup_time_uniform(shape, table, cfg.cluster, workload,
                                               cfg.cost)
            t3 = costmodel.dpu_to_cpu_time(shape, workload, cfg.cost)
            rows.append((f"{avg_red:g}", n_c, n_c * table.elem_bytes,
                         f"{accesses:.6g}", f"{t1:.6g}", f"{t2:.6g}", f"{t3:.6g}",
                         f"{t1 + t2 + t3:.6g}"))
    _write_csv(Path(args.out) / "sweep.csv",
               ("avg_red", "n_c", "read_bytes", "accesses_per_dpu", "stage1_ns",
                "stage2_ns", "stage3_ns", "total_ns"), rows)
    if not args.quiet:
        print(f"wrote {len(rows)} rows to {Path(args.out) / 'sweep.csv'}")
    return EXIT_OK


REPORT_FIELDS = ("source", "planner", "n_c", "batches", "total_accesses",
                 "stage1_sum_ns", "stage2_sum_ns", "stage3_sum_ns", "total_sum_ns",
                 "stage2_share", "cv")


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "balance" in data:
            data = {**data, **data["balance"], "n_c": data["shape"]["n_c"]}
        rows.append([Path(path).as_posix() if f == "source" else data.get(f, "")
                     for f in REPORT_FIELDS])
    _write_csv(Path(args.out) / "report.csv", REPORT_FIELDS, rows)
    if not args.quiet:
        for row in rows:
            print("  ".join(str(v) for v in row))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _global_flags(parser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON config file")
    parser.add_argument("--seed", type=int, default=d(0))
    parser.add_argument("--out", default=d("."), help="output directory")
    parser.add_argument("--verify", action="store_true", default=d(False),
                        help="check engine outputs against the reference oracle")
    parser.add_argument("--quiet", action="store_true", default=d(False))
    parser.add_argument("--table", type=int, default=d(None), help="table id")


def _table_flags(p) -> None:
    p.add_argument("--items", type=int, default=None,
                   help="table rows when no config table is given")
    p.add_argument("--dim", type=int, default=32,
                   help="embedding dimension when no config table is given")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pimemb", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-trace", help="generate a synthetic access trace")
    _global_flags(p, suppress=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--samples", type=int, default=12_800)
    p.add_argument("--avg-red", type=float, required=True)
    p.add_argument("--zipf", type=float, default=0.0)
    p.add_argument("--groups", default="", help="planted groups, e.g. '4,5;7,8,9'")
    p.add_argument("--group-prob", type=float, default=0.0)
    p.add_argument("--name", default="trace")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("profile", help="per-item and per-block access counts")
    _global_flags(p, suppress=True)
    _table_flags(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--blocks", type=int, default=8)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("mine-cache", help="mine co-occurring item groups")
    _global_flags(p, suppress=True)
    _table_flags(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--top-k", type=int, default=1000)
    p.add_argument("--min-support", type=int, default=50)
    p.add_argument("--m-max", type=int, default=4)
    p.set_defaults(func=cmd_mine_cache)

    p = sub.add_parser("partition", help="plan table placement")
    _global_flags(p, suppress=True)
    _table_flags(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--planner", choices=PLANNERS, default="cache-aware")
    p.add_argument("--nc", default="auto", help=f"'auto' or one of {LEGAL_NC}")
    p.add_argument("--cache", help="cache list file (cache-aware planner)")
    p.add_argument("--mine", help="mining parameters, e.g. top_k=1000,min_support=50")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("simulate", help="run batches against a plan")
    _global_flags(p, suppress=True)
    _table_flags(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--batches", type=int, default=200)
    p.add_argument("--start", type=int, default=0, help="first sample of the window")
    p.add_argument("--dump", help="write the first batch's outputs as a matrix file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="modeled stage times over avg_red x N_c")
    _global_flags(p, suppress=True)
    _table_flags(p)
    p.add_argument("--avg-red", default="50,100,150,200,250,300")
    p.add_argument("--nc", default="2,4,8,16,32")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="merge JSON reports into one CSV")
    _global_flags(p, suppress=True)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pimemb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PimError, ValueError, OSError) as exc:
        print(f"pimemb: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
