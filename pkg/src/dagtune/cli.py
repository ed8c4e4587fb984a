"""Command-line frontend: ``run``, ``structure``, ``report``.

Exit codes: 0 success, 2 configuration problem, 3 environment abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time
from dataclasses import replace

from .config import ConfigError, TunerConfig, load_config, serialize_config
from .envs import BuiltinEnv, ProcessEnv, make_builtin
from .optimize import EnvAborted, run_loop
from .structure import export_dot, max_dimension, structure_to_text
from .summarize import summarize
from .trace import CorruptTraceError, TraceStore

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _resolve_env_and_space(cfg: TunerConfig):
    if cfg.env.kind == "builtin":
        env = make_builtin(cfg.env.builtin_name, seed=cfg.env.seed)
        space = cfg.space if cfg.space is not None else env.space
        objective = cfg.objective
        if objective.name == "objective" and env.objective_name != "objective":
            # config left the default name; inherit the env's
            objective = replace(objective, name=env.objective_name)
        return env, space, objective
    env = ProcessEnv(
        command=cfg.env.command,
        annotation=cfg.annotation,
        objective=cfg.objective.name,
        objective_expr=cfg.objective.expr,
        metrics_file=cfg.env.metrics_file,
        timeout=cfg.env.timeout,
    )
    return env, cfg.space, cfg.objective


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.budget is not None:
            cfg.schedule = replace(cfg.schedule, budget=args.budget)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        env, space, objective = _resolve_env_and_space(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))

    structures_dir = os.path.join(out, "structures")
    last = {}

    def on_structure(step, structure):
        os.makedirs(structures_dir, exist_ok=True)
        base = os.path.join(structures_dir, f"step_{step:04d}")
        with open(base + ".txt", "w", encoding="utf-8") as fh:
            fh.write(structure_to_text(structure))
        with open(base + ".dot", "w", encoding="utf-8") as fh:
            fh.write(export_dot(structure))
        last["structure"] = structure

    try:
        store = TraceStore.open(os.path.join(out, "trace.jsonl"))
    except CorruptTraceError as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        run_loop(
            env,
            space,
            cfg.prior,
            cfg.schedule,
            cfg.seed,
            store,
            objective=objective.name,
            direction=objective.direction,
            grouping=cfg.grouping,
            l1=cfg.l1,
            w_threshold=cfg.w_threshold,
            on_structure=on_structure,
        )
    except EnvAborted as e:
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_ABORT
    finally:
        store.close()
    wall = time.perf_counter() - t0

    if "structure" in last:
        with open(os.path.join(out, "structure.dot"), "w", encoding="utf-8") as fh:
            fh.write(export_dot(last["structure"]))

    best, best_step = _best_so_far(store, objective.name, objective.direction)
    print(
        f"done: {len(store)} evaluations, best {objective.name}={best:.6g} "
        f"at step {best_step}, wall {wall:.1f}s, trace {store.path}"
    )
    return EXIT_OK


def _best_so_far(store: TraceStore, objective: str, direction: str):
    best, best_step = None, None
    better = (lambda a, b: a < b) if direction == "min" else (lambda a, b: a > b)
    for rec in store.records:
        if objective in rec.objectives:
            v = rec.objectives[objective]
            if best is None or better(v, best):
                best, best_step = v, rec.step
    return best, best_step


def _trace_paths(arg: str):
    """Accept a trace file or a run directory containing trace.jsonl."""
    if os.path.isdir(arg):
        return os.path.join(arg, "trace.jsonl"), os.path.join(arg, "config.yaml")
    return arg, os.path.join(os.path.dirname(arg), "config.yaml")


def cmd_structure(args) -> int:
    trace_path, default_cfg = _trace_paths(args.trace)
    cfg_path = args.config or default_cfg
    try:
        cfg = load_config(cfg_path)
        env, space, objective = _resolve_env_and_space(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        store = TraceStore.open(trace_path)
    except CorruptTraceError as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if len(store.finalized_records()) < 2:
        print("trace has too few finalized records for structure learning", file=sys.stderr)
        return EXIT_CONFIG

    from .optimize import _learn  # shared with the loop

    table = summarize(store, space, cfg.grouping, objective.name, objective.direction)
    structure = _learn(table, cfg.prior, cfg.l1, cfg.w_threshold)
    dot = export_dot(structure)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dot)
    else:
        print(dot, end="")
    print(f"max_dimension: {max_dimension(structure)}")
    return EXIT_OK


def _report_block(writer, label, store, objective, direction, default_value):
    writer.writerow([f"# trace: {label}"])
    writer.writerow(["step", "best_so_far", "improvement_over_default_x"])
    best = None
    better = (lambda a, b: a < b) if direction == "min" else (lambda a, b: a > b)
    for rec in store.records:
        if objective in rec.objectives:
            v = rec.objectives[objective]
            if best is None or better(v, best):
                best = v
        if best is None:
            writer.writerow([rec.step, "", ""])
            continue
        if default_value is not None and best != 0:
            imp = default_value / best if direction == "min" else best / default_value
            writer.writerow([rec.step, repr(best), f"{imp:.6g}"])
        else:
            writer.writerow([rec.step, repr(best), ""])


def cmd_report(args) -> int:
    blocks = [(p, "trace") for p in args.trace] + [
        (p, "baseline") for p in (args.baseline_trace or [])
    ]
    if not blocks:
        print("no traces given", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    writer = csv.writer(buf)
    for path, kind in blocks:
        trace_path, cfg_path = _trace_paths(path)
        try:
            store = TraceStore.open(trace_path)
        except CorruptTraceError as e:
            print(f"trace error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        if not store.records:
            print(f"trace {trace_path} is empty", file=sys.stderr)
            return EXIT_CONFIG
        objective, direction, default_value = "objective", "min", None
        if os.path.exists(cfg_path):
            try:
                cfg = load_config(cfg_path)
                env, _, obj = _resolve_env_and_space(cfg)
                objective, direction = obj.name, obj.direction
                if isinstance(env, BuiltinEnv):
                    _, objs = env(env.default_config)
                    default_value = objs[objective]
            except ConfigError:
                pass
        else:
            # fall back to the objective names present in the trace
            names = sorted({k for r in store.records for k in r.objectives})
            if names:
                objective = names[0]
        label = os.path.basename(os.path.dirname(trace_path)) or trace_path
        _report_block(writer, f"{label} ({kind})", store, objective, direction, default_value)
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dagtune",
        description="Structured Bayesian-optimization auto-tuner driven by system logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run or resume an optimization")
    p_run.add_argument("config", help="tuner config YAML")
    p_run.add_argument("--budget", type=int, default=None, help="override schedule.budget")
    p_run.add_argument("--seed", type=int, default=None, help="override seed")
    p_run.add_argument("--out", default=None, help="override output_dir")
    p_run.set_defaults(func=cmd_run)

    p_struct = sub.add_parser("structure", help="relearn and export the dependency DAG")
    p_struct.add_argument("--trace", required=True, help="trace file or run directory")
    p_struct.add_argument("--config", default=None, help="config YAML (default: sibling config.yaml)")
    p_struct.add_argument("--out", default=None, help="DOT output path (default: stdout)")
    p_struct.set_defaults(func=cmd_structure)

    p_rep = sub.add_parser("report", help="best-so-far CSV per trace")
    p_rep.add_argument("--trace", action="append", default=[], help="trace file or run directory")
    p_rep.add_argument("--baseline-trace", action="append", default=[], help="baseline trace")
    p_rep.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
