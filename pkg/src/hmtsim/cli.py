"""Command-line driver: run one simulation, sweep a configuration matrix, or
execute the sequential reference interpreter.

Exit codes are a contract: 0 completed, 2 deadlock (or watchdog expiry), 3
model fault, 64 usage or input errors. The env var MGSIM2_SEED is reserved
for future stochastic extensions and currently ignored: the simulator is
deterministic and uses no randomness.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from .errors import SimFault
from .isa import AsmError, assemble, validate
from .kernels import GENERATORS, corpus
from .memory import CacheConfig, dump_image_binary, dump_image_text, load_image_binary, load_image_text
from .oracle import OracleDeadlock, sequential_oracle
from .sim import ChipConfig, Outcome, RunResult, format_trace, run

SCHEMA_VERSION = 1

# stable CSV header; new metrics may only be appended
RECORD_FIELDS = [
    "schema_version", "kernel", "params", "cores", "topology", "hints",
    "coherency", "thread_slots", "line_bytes", "d_lines", "i_lines",
    "d_miss_latency", "i_miss_latency", "hop_latency", "watchdog_cycles",
    "outcome", "diagnostic", "cycles", "commits", "bubbles", "flushes",
    "switch_events", "utilization", "propagation_messages",
    "control_messages", "hop_traversals", "loads", "stores", "d_misses",
    "i_misses", "max_pending_cells", "memory_hash",
]

EXIT_OK = 0
EXIT_DEADLOCK = 2
EXIT_FAULT = 3
EXIT_USAGE = 64


def _config_from_args(args) -> ChipConfig:
    cache = CacheConfig(
        line_bytes=args.line_bytes, d_lines=args.d_lines, i_lines=args.i_lines,
        d_miss_latency=args.d_miss_latency, i_miss_latency=args.i_miss_latency)
    return ChipConfig(
        p=args.cores, topology=args.topology, thread_slots=args.thread_slots,
        cache=cache, hints=args.hints == "on", coherency=args.coherency,
        hop_latency=args.hop_latency, watchdog_cycles=args.watchdog,
        mem_bytes=args.mem_bytes, trace=args.trace is not None)


def _record(kernel: str, params: str, config: ChipConfig,
            result: RunResult) -> dict:
    m = result.metrics
    cache = config.cache
    return {
        "schema_version": SCHEMA_VERSION,
        "kernel": kernel,
        "params": params,
        "cores": config.p,
        "topology": config.topology,
        "hints": "on" if config.hints else "off",
        "coherency": config.coherency,
        "thread_slots": config.thread_slots,
        "line_bytes": cache.line_bytes,
        "d_lines": cache.d_lines,
        "i_lines": cache.i_lines,
        "d_miss_latency": cache.d_miss_latency,
        "i_miss_latency": cache.i_miss_latency,
        "hop_latency": config.hop_latency,
        "watchdog_cycles": config.watchdog_cycles,
        "outcome": result.outcome.value,
        "diagnostic": result.diagnostic or "",
        "cycles": m.cycles,
        "commits": m.commits,
        "bubbles": sum(c.bubbles for c in m.per_core),
        "flushes": m.flushes,
        "switch_events": sum(c.switch_events for c in m.per_core),
        "utilization": f"{m.utilization:.6f}",
        "propagation_messages": m.propagation_messages,
        "control_messages": m.control_messages,
        "hop_traversals": m.hop_traversals,
        "loads": m.loads,
        "stores": m.stores,
        "d_misses": m.d_misses,
        "i_misses": m.i_misses,
        "max_pending_cells": m.max_pending_cells,
        "memory_hash": result.memory_hash(),
    }


def emit_records(records: list[dict], fmt: str, out=None) -> str:
    if fmt == "json":
        text = json.dumps(records, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
        text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def _exit_code(outcome: Outcome) -> int:
    if outcome is Outcome.COMPLETED:
        return EXIT_OK
    if outcome is Outcome.FAULT:
        return EXIT_FAULT
    return EXIT_DEADLOCK


def _load_program(path: str):
    try:
        with open(path) as fh:
            source = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read program file: {exc}")
    try:
        program = assemble(source, name=path.rsplit("/", 1)[-1].removesuffix(".masm"))
    except AsmError as exc:
        raise UsageError(f"{path}: {exc}")
    diags = validate(program)
    if diags:
        raise UsageError(f"{path}: " + "; ".join(diags))
    return program


def _load_init_mem(path: str, size: int):
    try:
        if path.endswith(".bin"):
            with open(path, "rb") as fh:
                return bytes(load_image_binary(fh.read(), size))
        with open(path) as fh:
            return bytes(load_image_text(fh.read(), size))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load memory image: {exc}")


def _dump_mem(path: str, image: bytes):
    if path.endswith(".bin"):
        with open(path, "wb") as fh:
            fh.write(dump_image_binary(image))
    else:
        with open(path, "w") as fh:
            fh.write(dump_image_text(image))


class UsageError(Exception):
    pass


def cmd_run(args) -> int:
    program = _load_program(args.program)
    config = _config_from_args(args)
    init = _load_init_mem(args.init_mem, config.mem_bytes) if args.init_mem else None
    result = run(config, program, init)
    record = _record(program.name, "", config, result)
    emit_records([record], args.format, sys.stdout)
    if args.trace and result.trace is not None:
        with open(args.trace, "w") as fh:
            fh.write(format_trace(result.trace))
    if args.dump_mem and result.final_memory is not None:
        _dump_mem(args.dump_mem, result.final_memory)
    return _exit_code(result.outcome)


def _sweep_cells(args):
    kernels = args.kernels.split(",")
    cores = [int(c) for c in args.cores.split(",")]
    hints = args.hints.split(",")
    coherency = args.coherency.split(",")
    for kname in kernels:
        if kname not in GENERATORS:
            raise UsageError(f"unknown kernel '{kname}' "
                             f"(choose from {', '.join(sorted(GENERATORS))})")
        for p in cores:
            gen = GENERATORS[kname]
            spec = gen(p, satisfiable=True) if kname == "starvation" else gen()
            for h in hints:
                for c in coherency:
                    yield spec, p, h, c


def cmd_sweep(args) -> int:
    records = []
    traces = []
    for spec, p, h, c in _sweep_cells(args):
        config = ChipConfig(
            p=p, topology=args.topology, thread_slots=args.thread_slots,
            cache=CacheConfig(
                line_bytes=args.line_bytes, d_lines=args.d_lines,
                i_lines=args.i_lines, d_miss_latency=args.d_miss_latency,
                i_miss_latency=args.i_miss_latency),
            hints=h == "on", coherency=c, hop_latency=args.hop_latency,
            watchdog_cycles=args.watchdog, mem_bytes=args.mem_bytes,
            trace=args.trace_dir is not None)
        result = run(config, spec.program)
        params = ";".join(f"{k}={v}" for k, v in spec.params.items())
        records.append(_record(spec.name, params, config, result))
        if args.trace_dir is not None and result.trace is not None:
            traces.append((f"{spec.name}_p{p}_hints_{h}_{c}.trace", result.trace))
    emit_records(records, args.format, sys.stdout)
    for fname, trace in traces:
        with open(f"{args.trace_dir}/{fname}", "w") as fh:
            fh.write(format_trace(trace))
    return EXIT_OK


def cmd_oracle(args) -> int:
    program = _load_program(args.program)
    init = _load_init_mem(args.init_mem, args.mem_bytes) if args.init_mem else None
    try:
        result = sequential_oracle(program, args.mem_bytes, init)
    except OracleDeadlock as exc:
        print(f"oracle deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    if args.dump_mem:
        _dump_mem(args.dump_mem, result.final_memory)
    else:
        sys.stdout.write(dump_image_text(result.final_memory))
    return EXIT_OK


def cmd_gen(args) -> int:
    import os
    os.makedirs(args.out_dir, exist_ok=True)
    specs = corpus(args.starvation_cores)
    for spec in specs:
        with open(f"{args.out_dir}/{spec.name}.masm", "w") as fh:
            fh.write(spec.source + "\n")
        with open(f"{args.out_dir}/{spec.name}.expected", "w") as fh:
            fh.write(dump_image_text(spec.expected_image()))
    # the deadlocking probe has no expected image: it never completes
    from .kernels import kernel_starvation
    probe = kernel_starvation(args.starvation_cores)
    with open(f"{args.out_dir}/{probe.name}.masm", "w") as fh:
        fh.write(probe.source + "\n")
    print(f"wrote {args.out_dir}/<name>.masm for {len(specs) + 1} kernels "
          f"(.expected for the {len(specs)} that complete)")
    return EXIT_OK


def _add_machine_flags(sp, cores_list=False):
    if cores_list:
        sp.add_argument("--cores", default="1,2,4,8",
                        help="comma list of core counts")
    else:
        sp.add_argument("--cores", type=int, default=1, help="core count")
    sp.add_argument("--topology", choices=["ring", "line"], default="ring")
    sp.add_argument("--thread-slots", type=int, default=64,
                    help="hardware thread slots per core")
    sp.add_argument("--line-bytes", type=int, default=16)
    sp.add_argument("--d-lines", type=int, default=64)
    sp.add_argument("--i-lines", type=int, default=32)
    sp.add_argument("--d-miss-latency", type=int, default=20)
    sp.add_argument("--i-miss-latency", type=int, default=10)
    sp.add_argument("--hop-latency", type=int, default=2)
    sp.add_argument("--watchdog", type=int, default=10_000_000,
                    help="cycle limit before WATCHDOG_TIMEOUT")
    sp.add_argument("--mem-bytes", type=int, default=1 << 20)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hmtsim",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("run", help="simulate one program on one configuration")
    rp.add_argument("--program", required=True, help="assembly source file")
    _add_machine_flags(rp)
    rp.add_argument("--hints", choices=["on", "off"], default="on",
                    help="automatic switch-hint annotation")
    rp.add_argument("--coherency", choices=["eager", "bulk"], default="eager")
    rp.add_argument("--format", choices=["csv", "json"], default="csv")
    rp.add_argument("--trace", help="write one line per commit to this file")
    rp.add_argument("--dump-mem",
                    help="write final memory (addr=value text, or .bin raw)")
    rp.add_argument("--init-mem", help="preload memory from an image file")
    rp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="cross-product of kernels and configs")
    sp.add_argument("--kernels", default="regular,heterogeneous,chain,loaduse",
                    help="comma list of generated kernels")
    _add_machine_flags(sp, cores_list=True)
    sp.add_argument("--hints", default="on,off", help="comma list: on,off")
    sp.add_argument("--coherency", default="eager,bulk",
                    help="comma list: eager,bulk")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--trace-dir", help="directory for per-cell trace files")
    sp.set_defaults(func=cmd_sweep)

    op = sub.add_parser("oracle",
                        help="run the sequential reference interpreter")
    op.add_argument("--program", required=True)
    op.add_argument("--mem-bytes", type=int, default=1 << 20)
    op.add_argument("--dump-mem", help="write image here instead of stdout")
    op.add_argument("--init-mem")
    op.set_defaults(func=cmd_oracle)

    gp = sub.add_parser("gen", help="write the kernel corpus to a directory")
    gp.add_argument("--out-dir", default="kernels")
    gp.add_argument("--starvation-cores", type=int, default=2)
    gp.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; the contract says 64
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, SimFault) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
