"""One in-order single-issue core: six pipeline stages, hardware-multithreaded
fetch coupled to the I-cache, and dataflow scheduling with the register file
as the matching store.

Stage work runs back to front each cycle (writeback, memory, execute, read,
decode, then fetch), so a value produced by a one-cycle operation in execute
is visible to a dependent instruction sitting in read the same cycle; that
stands in for the usual bypass network. Operand availability is only tested
at the read stage: an instruction whose source is still PENDING suspends
there, parks itself on the cell, and its younger same-thread instructions are
flushed from the front of the pipe. The thread rejoins the schedule queue
when the cell is written and the parked instruction is re-injected without an
I-cache probe.
"""

from __future__ import annotations

from collections import deque
from heapq import heappop, heappush

from .errors import SimFault
from .isa import Opcode, s32

# register cell states
EMPTY, FULL, PENDING = 0, 1, 2

CHANNEL_CELL = 32       # the thread's input channel sits after r0..r31

# thread states
ACTIVE, WAITING, SUSPENDED, KILLED = "active", "waiting", "suspended", "killed"


class RegisterCell:
    __slots__ = ("state", "value", "waiters", "producer")

    def __init__(self, state=FULL, value=0):
        self.state = state
        self.value = value
        self.waiters = []
        self.producer = None    # why the cell is PENDING/EMPTY, for diagnostics

    def __repr__(self):
        names = {EMPTY: "EMPTY", FULL: "FULL", PENDING: "PENDING"}
        return f"<cell {names[self.state]} {self.value} w={len(self.waiters)}>"


class ThreadContext:
    __slots__ = ("slot", "fid", "position", "logical_index", "pc", "cells",
                 "state", "fetch_blocked", "resume", "epoch", "pending_cells",
                 "last_denial")

    def __init__(self, slot, fid, position, logical_index, pc, epoch,
                 channel_value=None):
        self.slot = slot
        self.fid = fid
        self.position = position
        self.logical_index = logical_index
        self.pc = pc
        self.epoch = epoch
        self.cells = [RegisterCell() for _ in range(32)]
        chan = RegisterCell(EMPTY)
        if channel_value is not None:
            chan.state, chan.value = FULL, channel_value
        self.cells.append(chan)
        self.state = ACTIVE
        self.fetch_blocked = False
        self.resume = None
        self.pending_cells = 0
        self.last_denial = -1


class InFlight:
    """One instruction occupying a pipeline latch."""

    __slots__ = ("ctx", "instr", "pc", "vals")

    def __init__(self, ctx, instr, pc):
        self.ctx = ctx
        self.instr = instr
        self.pc = pc
        self.vals = None


class CoreMetrics:
    __slots__ = ("commits", "bubbles", "flushes", "switch_events")

    def __init__(self):
        self.commits = 0
        self.bubbles = 0
        self.flushes = 0
        self.switch_events = 0


class Core:
    def __init__(self, cid: int, chip, thread_slots: int):
        self.cid = cid
        self.chip = chip
        self.contexts: dict[int, ThreadContext] = {}
        self._free_slots = list(range(thread_slots))    # heap, ascending reuse
        self.queue: deque[int] = deque()
        self.metrics = CoreMetrics()
        self._rotate_pending = None
        # latches: fetch, decode, read, execute, memory, writeback
        self.f = self.d = self.r = self.e = self.m = self.w = None

    # -- slot management (driven by the TMU) -----------------------------------

    def take_free_slot(self):
        return heappop(self._free_slots) if self._free_slots else None

    def release_slot(self, slot: int):
        heappush(self._free_slots, slot)

    def start_context(self, slot, fid, position, logical_index, pc, epoch,
                      channel_value=None):
        ctx = ThreadContext(slot, fid, position, logical_index, pc, epoch,
                            channel_value)
        self.contexts[slot] = ctx
        self.queue.append(slot)
        return ctx

    # -- dataflow cell writes ----------------------------------------------------

    def writeback(self, ctx: ThreadContext, reg: int, value: int) -> list:
        """Split-phase completion into a PENDING or EMPTY cell; wakes waiters."""
        if reg == 0:
            return []
        cell = ctx.cells[reg]
        if cell.state == FULL:
            raise SimFault(
                f"double write to full cell r{reg} of thread "
                f"(family {ctx.fid}, index {ctx.logical_index})")
        if cell.state == PENDING:
            ctx.pending_cells -= 1
        cell.state = FULL
        cell.value = value
        cell.producer = None
        woken = cell.waiters
        cell.waiters = []
        for inf in woken:
            self._wake(inf)
        return woken

    def write_channel(self, slot: int, value: int):
        self.writeback(self.contexts[slot], CHANNEL_CELL, value)

    def _set_reg(self, ctx, reg, value):
        # same-cycle completion of a one-cycle result; overwriting FULL is the
        # ordinary architectural register write
        if reg == 0:
            return
        cell = ctx.cells[reg]
        if cell.state == PENDING:
            ctx.pending_cells -= 1
        cell.state = FULL
        cell.value = value
        if cell.waiters:
            woken, cell.waiters = cell.waiters, []
            for inf in woken:
                self._wake(inf)

    def _mark_pending(self, ctx, reg, why):
        if reg == 0:
            return
        cell = ctx.cells[reg]
        cell.state = PENDING
        cell.producer = why
        ctx.pending_cells += 1
        if ctx.pending_cells > self.chip.max_pending:
            self.chip.max_pending = ctx.pending_cells

    def _wake(self, inf: InFlight):
        ctx = inf.ctx
        ctx.state = WAITING if ctx.fetch_blocked else ACTIVE
        ctx.resume = inf
        self.queue.append(ctx.slot)

    # -- fetch ---------------------------------------------------------------------

    def fetch_select(self, cycle: int):
        """Pick the thread to fetch from this cycle, honoring switch hints and
        I-cache residency. Rotates the queue so the chosen thread stays in
        front for subsequent cycles."""
        if self._rotate_pending is not None:
            slot = self._rotate_pending
            self._rotate_pending = None
            try:
                self.queue.remove(slot)
            except ValueError:
                pass
            else:
                self.queue.append(slot)
        for k, slot in enumerate(self.queue):
            ctx = self.contexts[slot]
            if ctx.resume is not None:
                self.queue.rotate(-k)
                return slot
            if ctx.fetch_blocked:
                continue
            if self.chip.memory.icache_probe(self.cid, ctx.pc, cycle):
                self.queue.rotate(-k)
                return slot
            # miss: the probe has requested the fill; try the next thread
        return None

    def _remove_from_queue(self, slot):
        try:
            self.queue.remove(slot)
        except ValueError:
            pass
        if self._rotate_pending == slot:
            self._rotate_pending = None

    # -- read stage --------------------------------------------------------------

    def _source_cells(self, instr) -> tuple:
        op = instr.opcode
        if op is Opcode.GETSH and instr.src1 is None:
            return (CHANNEL_CELL,)
        return instr.regs_read()

    def read_operands(self, inf: InFlight):
        """Return operand values, or None after suspending the thread on the
        first cell that is not FULL (sources first, then a busy destination)."""
        ctx = inf.ctx
        cells = ctx.cells
        srcs = self._source_cells(inf.instr)
        blocked = None
        for idx in srcs:
            if cells[idx].state != FULL:
                blocked = idx
                break
        dst = inf.instr.dst
        if blocked is None and dst is not None and dst != 0 \
                and cells[dst].state == PENDING:
            blocked = dst
        if blocked is not None:
            cells[blocked].waiters.append(inf)
            ctx.state = SUSPENDED
            self._remove_from_queue(ctx.slot)
            self.flush_younger(ctx, inf.pc + 1)
            # a fetch block imposed by a younger, now-flushed control transfer
            # must not outlive it; a suspended branch keeps its own block
            if inf.instr.opcode not in (Opcode.BEQ, Opcode.BNE):
                ctx.fetch_blocked = False
            return None
        return tuple(cells[i].value for i in srcs)

    def flush_younger(self, ctx, restart_pc: int) -> int:
        """Drop this thread's younger instructions from fetch/decode and point
        its pc at the suspended instruction's successor (the suspended
        instruction itself re-enters at wakeup)."""
        n = 0
        if self.f is not None and self.f.ctx is ctx:
            self.f = None
            n += 1
        if self.d is not None and self.d.ctx is ctx:
            self.d = None
            n += 1
        ctx.pc = restart_pc
        self.metrics.flushes += n
        return n

    # -- execute stage -------------------------------------------------------------

    def _execute(self, inf: InFlight, cycle: int):
        instr = inf.instr
        ctx = inf.ctx
        op = instr.opcode
        v = inf.vals
        tmu = self.chip.tmu(self.cid)
        if op is Opcode.ADD:
            self._set_reg(ctx, instr.dst, s32(v[0] + v[1]))
        elif op is Opcode.SUB:
            self._set_reg(ctx, instr.dst, s32(v[0] - v[1]))
        elif op is Opcode.MUL:
            self._set_reg(ctx, instr.dst, s32(v[0] * v[1]))
        elif op is Opcode.ADDI:
            self._set_reg(ctx, instr.dst, s32(v[0] + instr.imm))
        elif op is Opcode.LD:
            self._mark_pending(ctx, instr.dst, "load")
        elif op is Opcode.ST:
            pass    # the memory stage performs the store
        elif op in (Opcode.BEQ, Opcode.BNE):
            taken = (v[0] == v[1]) if op is Opcode.BEQ else (v[0] != v[1])
            ctx.pc = instr.imm if taken else inf.pc + 1
            ctx.fetch_blocked = False
            if ctx.state == WAITING:
                ctx.state = ACTIVE
        elif op is Opcode.JMP:
            pass    # resolved in decode
        elif op is Opcode.HALT:
            pass    # retirement drives termination
        elif op is Opcode.GETIDX:
            self._set_reg(ctx, instr.dst, ctx.logical_index)
        elif op is Opcode.GETSH:
            if instr.src1 is None:
                self._set_reg(ctx, instr.dst, v[0])
            else:
                self._mark_pending(ctx, instr.dst, ("tail", v[0]))
                tmu.enqueue(("getsh_tail", ctx, instr.dst, v[0]))
        elif op is Opcode.PUTSH:
            if instr.src2 is None:
                tmu.enqueue(("putsh", ctx, v[0]))
            else:
                tmu.enqueue(("putsh_head", ctx, v[1], v[0]))
        elif op is Opcode.ALLOCATE:
            self._mark_pending(ctx, instr.dst, "allocate")
            hint = v[0] if instr.src1 is not None else None
            tmu.enqueue(("allocate", ctx, instr.dst, instr.imm, hint))
        elif op is Opcode.CREATE:
            self._mark_pending(ctx, instr.dst, "create")
            seed = v[1] if instr.src2 is not None else None
            tmu.enqueue(("create", ctx, instr.dst, v[0], instr.entry,
                         instr.create_range, seed))
        elif op is Opcode.SYNC:
            self._mark_pending(ctx, instr.dst, ("sync", v[0]))
            tmu.enqueue(("sync", ctx, instr.dst, v[0]))
        elif op is Opcode.RELEASE:
            tmu.enqueue(("release", ctx, v[0]))
        else:
            raise AssertionError(f"unhandled opcode {op}")

    # -- memory stage ---------------------------------------------------------------

    def _memory(self, inf: InFlight, cycle: int):
        instr = inf.instr
        ctx = inf.ctx
        if instr.opcode is Opcode.LD:
            addr = s32(inf.vals[0] + instr.imm)
            dst = instr.dst

            def deliver(value, ctx=ctx, dst=dst):
                self.writeback(ctx, dst, value)
                self.chip.note_effect(self.chip.cycle)

            if dst == 0:
                deliver = lambda value: None
            self.chip.memory.load(self.cid, addr, ctx.epoch, cycle, deliver)
        elif instr.opcode is Opcode.ST:
            addr = s32(inf.vals[1] + instr.imm)
            self.chip.memory.store(self.cid, addr, inf.vals[0], ctx.epoch, cycle)

    # -- retirement -------------------------------------------------------------------

    def _retire(self, inf: InFlight, cycle: int):
        self.metrics.commits += 1
        ctx = inf.ctx
        chip = self.chip
        if chip.trace is not None:
            chip.trace.append((cycle, self.cid, ctx.slot, ctx.fid,
                               ctx.logical_index, inf.pc, inf.instr.mnemonic))
        if inf.instr.opcode is Opcode.HALT:
            ctx.state = KILLED
            self._remove_from_queue(ctx.slot)
            del self.contexts[ctx.slot]
            chip.tmu(self.cid).enqueue(("terminated", ctx.slot, ctx.fid,
                                        ctx.position))

    # -- one cycle ----------------------------------------------------------------------

    def step(self, cycle: int):
        if self.w is not None:
            self._retire(self.w, cycle)
        if self.m is not None:
            self._memory(self.m, cycle)
        if self.e is not None:
            self._execute(self.e, cycle)
        ready = None
        if self.r is not None:
            vals = self.read_operands(self.r)
            if vals is not None:
                self.r.vals = vals
                ready = self.r
        if self.d is not None and self.d.instr.opcode is Opcode.JMP:
            ctx = self.d.ctx
            ctx.pc = self.d.instr.imm
            ctx.fetch_blocked = False
            if ctx.state == WAITING:
                ctx.state = ACTIVE

        # advance the latches one stage
        self.w, self.m, self.e, self.r, self.d = self.m, self.e, ready, self.d, self.f
        self.f = None

        slot = self.fetch_select(cycle)
        if slot is None:
            if self.contexts:
                self.metrics.bubbles += 1
            return
        ctx = self.contexts[slot]
        if ctx.resume is not None:
            inf, ctx.resume = ctx.resume, None
        else:
            instr = self.chip.program.instructions[ctx.pc]
            inf = InFlight(ctx, instr, ctx.pc)
            if instr.opcode in (Opcode.BEQ, Opcode.BNE, Opcode.JMP, Opcode.HALT):
                ctx.fetch_blocked = True
                ctx.state = WAITING
            else:
                ctx.pc += 1
        if inf.instr.switch_hint:
            self._rotate_pending = slot
            self.metrics.switch_events += 1
        self.f = inf

    # -- introspection -------------------------------------------------------------------

    @property
    def busy(self) -> bool:
        if self.queue:
            return True
        return any(latch is not None for latch in
                   (self.f, self.d, self.r, self.e, self.m, self.w))

    def live_contexts(self):
        return list(self.contexts.values())
