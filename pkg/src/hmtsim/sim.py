"""Deterministic cycle-synchronous kernel composing cores, TMUs, control NoC
and the memory system.

Each cycle runs the components in one fixed order: memory fill completions,
NoC deliveries, TMU steps (ascending core id), then core pipelines (ascending
core id). Effects aimed at a component earlier in that order land the next
cycle, giving a single total order equivalent to a two-phase commit; two runs
over identical inputs are bit-identical.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .core import Core, SUSPENDED, CHANNEL_CELL
from .errors import SimFault
from .isa import Program, annotate_hints, validate
from .memory import CacheConfig, MemorySystem
from .noc import Noc, Topology
from .tmu import Family, SpanPool, Tmu, _LocalFam


@dataclass(frozen=True)
class ChipConfig:
    p: int = 1
    topology: str = "ring"              # ring | line
    thread_slots: int = 64
    cache: CacheConfig = field(default_factory=CacheConfig)
    hints: bool = True
    coherency: str = "eager"            # eager | bulk
    hop_latency: int = 2
    watchdog_cycles: int = 10_000_000
    mem_bytes: int = 1 << 20
    starvation_window: int = 2000
    starvation_check: int = 128
    trace: bool = False

    def __post_init__(self):
        assert self.p >= 1 and self.watchdog_cycles > 0
        assert self.topology in ("ring", "line")
        assert self.coherency in ("eager", "bulk")


class Outcome(enum.Enum):
    COMPLETED = "completed"
    DEADLOCK_STARVATION = "deadlock_starvation"
    DEADLOCK_DATAFLOW = "deadlock_dataflow"
    WATCHDOG_TIMEOUT = "watchdog_timeout"
    FAULT = "fault"


@dataclass
class PerCoreMetrics:
    commits: int
    bubbles: int
    flushes: int
    switch_events: int
    utilization: float


@dataclass
class Metrics:
    cycles: int
    per_core: list[PerCoreMetrics]
    propagation_messages: int
    control_messages: int
    hop_traversals: int
    hop_log: dict[tuple[int, int], int]
    loads: int
    stores: int
    d_misses: int
    i_misses: int
    max_pending_cells: int
    # waiter-ledger audit: threads still parked on a cell when the run ended
    suspended_at_end: int = 0

    @property
    def commits(self) -> int:
        return sum(c.commits for c in self.per_core)

    @property
    def flushes(self) -> int:
        return sum(c.flushes for c in self.per_core)

    @property
    def utilization(self) -> float:
        if self.cycles == 0:
            return 0.0
        return self.commits / (self.cycles * len(self.per_core))


@dataclass
class RunResult:
    outcome: Outcome
    metrics: Metrics
    final_memory: bytes | None = None
    diagnostic: str | None = None
    trace: list[tuple] | None = None

    def memory_hash(self) -> str:
        if self.final_memory is None:
            return ""
        return hashlib.sha256(self.final_memory).hexdigest()

    def result_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.outcome.value, self.diagnostic,
                       self.metrics)).encode())
        if self.final_memory is not None:
            h.update(self.final_memory)
        if self.trace is not None:
            h.update(repr(self.trace).encode())
        return h.hexdigest()


class Chip:
    def __init__(self, config: ChipConfig, program: Program,
                 init_mem: bytes | None = None):
        self.config = config
        self.program = program
        self.topology = Topology(config.topology, config.p, config.hop_latency)
        self.noc = Noc(self.topology)
        self.memory = MemorySystem(config.p, config.cache, config.mem_bytes,
                                   bulk=config.coherency == "bulk")
        if init_mem:
            self.memory.mem[:len(init_mem)] = init_mem
        self.span_pool = SpanPool(config.p)
        self.cores = [Core(c, self, config.thread_slots) for c in range(config.p)]
        self.tmus = [Tmu(c, self) for c in range(config.p)]
        self.families: dict[int, Family] = {}
        self.allocations: dict = {}
        self._fid = 0
        self._aid = 0
        self._req = 0
        self._open_reqs: set[int] = set()
        self.root_fid = None
        self.root_completed = False
        self.cycle = 0
        self.last_effect = 0
        self.max_pending = 0
        self.trace = [] if config.trace else None

    def core(self, cid: int) -> Core:
        return self.cores[cid]

    def tmu(self, cid: int) -> Tmu:
        return self.tmus[cid]

    def new_family(self, owner, aid, entry, start, limit, step, n, span,
                   creator) -> Family:
        self._fid += 1
        fid = self._fid
        fam = Family(fid, owner, aid, entry, start, limit, step, n,
                     epoch=fid, span=tuple(span), ranges={}, outstanding=n,
                     creator=creator)
        self.families[fid] = fam
        self.memory.open_epoch(fam.epoch)
        return fam

    def next_aid(self) -> int:
        self._aid += 1
        return self._aid

    def next_req_id(self) -> int:
        self._req += 1
        self._open_reqs.add(self._req)
        return self._req

    def pair_response(self, req_id: int):
        self._open_reqs.discard(req_id)

    def note_effect(self, cycle: int):
        self.last_effect = cycle

    # -- progress analysis ----------------------------------------------------

    def quiescent(self) -> bool:
        if self.noc.in_flight or self.memory.busy:
            return False
        if any(t.requests for t in self.tmus):
            return False
        return not any(c.busy for c in self.cores)

    def live_threads_of(self, fid: int):
        out = []
        for core in self.cores:
            for ctx in core.contexts.values():
                if ctx.fid == fid:
                    out.append(ctx)
        return out

    def suspended_threads(self):
        out = []
        for core in self.cores:
            for ctx in core.contexts.values():
                if ctx.state == SUSPENDED:
                    out.append(ctx)
        return out


def detect_deadlock(chip: Chip) -> tuple[str, str] | None:
    """Classify a stalled system via the waits-for graph over suspended
    threads. Returns (classification, diagnostic) or None."""
    suspended = chip.suspended_threads()
    if not suspended:
        return None
    ids = {id(ctx): f"family {ctx.fid} index {ctx.logical_index}"
           for ctx in suspended}
    edges: dict[int, list[int]] = {id(ctx): [] for ctx in suspended}

    def link(a, b_ctx):
        if b_ctx is not None and id(b_ctx) in edges:
            edges[id(a)].append(id(b_ctx))

    def thread_at(fam, pos):
        for ctx in chip.live_threads_of(fam.fid):
            if ctx.position == pos:
                return ctx
        return None

    for ctx in suspended:
        fam = chip.families[ctx.fid]
        for idx, cell in enumerate(ctx.cells):
            if not cell.waiters:
                continue
            if idx == CHANNEL_CELL:
                if ctx.position > 0:
                    link(ctx, thread_at(fam, ctx.position - 1))
                else:
                    link(ctx, fam.creator)
            elif isinstance(cell.producer, tuple):
                tag, target_fid = cell.producer
                target = chip.families.get(target_fid)
                if target is not None:
                    for member in chip.live_threads_of(target_fid):
                        link(ctx, member)
    # cycle search
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in edges}
    cycle_node = None

    def dfs(n, stack):
        nonlocal cycle_node
        color[n] = GREY
        for m in edges[n]:
            if color[m] == GREY:
                cycle_node = m
                return stack[stack.index(m):]
            if color[m] == WHITE:
                found = dfs(m, stack + [m])
                if found:
                    return found
        color[n] = BLACK
        return None

    for n in edges:
        if color[n] == WHITE:
            cyc = dfs(n, [n])
            if cyc:
                names = " -> ".join(ids[x] for x in cyc)
                return ("dataflow", f"waits-for cycle: {names}")
    waiting = ", ".join(ids[id(c)] for c in suspended)
    return ("dataflow", f"unsatisfiable waits: {waiting}")


def _check_starvation(chip: Chip, cycle: int) -> str | None:
    if cycle - chip.last_effect < chip.config.starvation_window:
        return None
    runnable = []
    for core in chip.cores:
        for ctx in core.contexts.values():
            if ctx.state != SUSPENDED:
                runnable.append(ctx)
    if not runnable:
        return None
    if all(ctx.last_denial > chip.last_effect for ctx in runnable):
        return (f"{len(runnable)} runnable thread(s) spinning on denied "
                f"allocations since cycle {chip.last_effect}")
    return None


def _bootstrap_root(chip: Chip):
    fam = chip.new_family(owner=0, aid=None, entry="main", start=0, limit=1,
                          step=1, n=1, span=(0,), creator=None)
    fam.ranges[0] = (0, 1)
    chip.root_fid = fam.fid
    tmu0 = chip.tmus[0]
    lf = _LocalFam(0, 1)
    tmu0.local_fams[fam.fid] = lf
    slot = chip.cores[0].take_free_slot()
    tmu0._start_position(fam.fid, lf, slot, 0)


def run(config: ChipConfig, program: Program,
        init_mem: bytes | None = None) -> RunResult:
    """Execute a program to completion, deadlock, fault or watchdog expiry."""
    diags = validate(program)
    if diags:
        raise ValueError("program failed validation: " + "; ".join(diags))
    if "main" not in program.entries:
        raise ValueError("program has no 'main' thread body")
    if config.hints:
        program = annotate_hints(program)

    chip = Chip(config, program, init_mem)
    _bootstrap_root(chip)

    outcome = None
    diagnostic = None
    cycle = 0
    try:
        while cycle < config.watchdog_cycles:
            chip.cycle = cycle
            for cb, value in chip.memory.step(cycle):
                cb(value)
            for msg in chip.noc.step(cycle):
                chip.tmus[msg.dst].handle_message(msg, cycle)
            for tmu in chip.tmus:
                tmu.step(cycle)
            for core in chip.cores:
                core.step(cycle)
            cycle += 1
            if chip.root_completed:
                outcome = Outcome.COMPLETED
                break
            if chip.quiescent():
                found = detect_deadlock(chip)
                if found is None:
                    raise SimFault("quiescent system with no suspended "
                                   "threads and unfinished root family")
                kind, diagnostic = found
                outcome = (Outcome.DEADLOCK_DATAFLOW if kind == "dataflow"
                           else Outcome.DEADLOCK_STARVATION)
                break
            if cycle % config.starvation_check == 0:
                why = _check_starvation(chip, cycle)
                if why is not None:
                    outcome = Outcome.DEADLOCK_STARVATION
                    diagnostic = why
                    break
        else:
            outcome = Outcome.WATCHDOG_TIMEOUT
            diagnostic = f"no completion within {config.watchdog_cycles} cycles"

        if outcome is Outcome.COMPLETED:
            # drain stragglers (release acknowledgements and the like), then
            # audit that every allocate request got exactly one response
            drain_limit = cycle + 4 * config.p * config.hop_latency + 8
            while chip.noc.in_flight and cycle < drain_limit:
                chip.cycle = cycle
                for msg in chip.noc.step(cycle):
                    chip.tmus[msg.dst].handle_message(msg, cycle)
                for tmu in chip.tmus:
                    tmu.step(cycle)
                cycle += 1
            if chip._open_reqs:
                raise SimFault(f"unpaired allocation requests at end of run: "
                               f"{sorted(chip._open_reqs)}")
    except SimFault as fault:
        outcome = Outcome.FAULT
        diagnostic = str(fault)

    per_core = [
        PerCoreMetrics(c.metrics.commits, c.metrics.bubbles, c.metrics.flushes,
                       c.metrics.switch_events,
                       c.metrics.commits / cycle if cycle else 0.0)
        for c in chip.cores
    ]
    hop_log = chip.noc.hop_log()
    stats = chip.memory.stats
    metrics = Metrics(
        cycles=cycle,
        per_core=per_core,
        propagation_messages=stats.propagation_messages,
        control_messages=chip.noc.injected,
        hop_traversals=sum(hop_log.values()),
        hop_log=hop_log,
        loads=stats.loads,
        stores=stats.stores,
        d_misses=stats.d_misses,
        i_misses=stats.i_misses,
        max_pending_cells=chip.max_pending,
        suspended_at_end=len(chip.suspended_threads()),
    )
    final_memory = bytes(chip.memory.mem) if outcome is Outcome.COMPLETED else None
    return RunResult(outcome, metrics, final_memory, diagnostic, chip.trace)


def format_trace(trace: list[tuple]) -> str:
    """One line per commit: cycle core slot family index pc opcode."""
    return "".join(" ".join(str(x) for x in row) + "\n" for row in trace)
