"""Shared-memory hierarchy: per-core L1 instruction/data caches over one
flat backing store, with two store-propagation policies.

EAGER propagates every store to the backing store as it commits and
invalidates remote copies of the line, one message per event. BULK buffers a
family's stores in a per-core epoch write-set; the set is published when the
family's epoch is flushed, one message per dirty line. Cached lines carry no
data of their own (they are kept coherent with the backing store by
invalidation), so tags are all the caches track.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from .errors import SimFault


@dataclass(frozen=True)
class CacheConfig:
    line_bytes: int = 16
    d_lines: int = 64
    i_lines: int = 32
    d_miss_latency: int = 20
    i_miss_latency: int = 10

    def __post_init__(self):
        assert self.line_bytes > 0 and self.line_bytes & (self.line_bytes - 1) == 0
        assert self.d_lines > 0 and self.i_lines > 0
        assert self.d_miss_latency > 0 and self.i_miss_latency > 0


@dataclass
class MemoryStats:
    loads: int = 0
    stores: int = 0
    d_misses: int = 0
    i_misses: int = 0
    propagation_messages: int = 0


class _Fill:
    __slots__ = ("core", "line", "waiters")

    def __init__(self, core, line):
        self.core = core
        self.line = line
        self.waiters = []   # (addr, callback) in issue order


class MemorySystem:
    def __init__(self, n_cores: int, config: CacheConfig, mem_bytes: int = 1 << 20,
                 bulk: bool = False):
        self.config = config
        self.bulk = bulk
        self.mem = bytearray(mem_bytes)
        self.stats = MemoryStats()
        # tag-only caches: line index -> True, LRU order
        self._dtags = [OrderedDict() for _ in range(n_cores)]
        self._itags = [OrderedDict() for _ in range(n_cores)]
        self._n_cores = n_cores
        # epoch -> core -> {addr: value}, populated only under BULK
        self._write_sets: dict[int, dict[int, dict[int, int]]] = {}
        self._d_fills: dict[int, list[_Fill]] = {}   # completion cycle -> fills
        self._d_pending: dict[tuple[int, int], _Fill] = {}
        self._i_fills: dict[int, list[tuple[int, int]]] = {}
        self._i_pending: set[tuple[int, int]] = set()
        self.fill_log: list[tuple[int, int, int]] = []  # (issue cycle, core, line)

    # -- word access ---------------------------------------------------------

    def _check(self, addr: int):
        if addr % 4 != 0:
            raise SimFault(f"memory fault: unaligned access at 0x{addr:x}")
        if not 0 <= addr <= len(self.mem) - 4:
            raise SimFault(f"memory fault: address 0x{addr:x} out of bounds")

    def _read_word(self, addr: int) -> int:
        return int.from_bytes(self.mem[addr:addr + 4], "little", signed=True)

    def _write_word(self, addr: int, value: int):
        self.mem[addr:addr + 4] = (value & 0xFFFFFFFF).to_bytes(4, "little")

    def _line(self, addr: int) -> int:
        return addr // self.config.line_bytes

    # -- epochs ---------------------------------------------------------------

    def open_epoch(self, epoch: int):
        self._write_sets[epoch] = {}

    def load(self, core: int, addr: int, epoch: int, cycle: int, on_value):
        """Returns 'hit' (on_value already called) or 'miss' (called later)."""
        self._check(addr)
        self.stats.loads += 1
        if self.bulk:
            per_core = self._write_sets.get(epoch)
            if per_core is not None:
                buffered = per_core.get(core)
                if buffered is not None and addr in buffered:
                    on_value(buffered[addr])
                    return "hit"
        line = self._line(addr)
        tags = self._dtags[core]
        if line in tags:
            tags.move_to_end(line)
            on_value(self._read_word(addr))
            return "hit"
        key = (core, line)
        fill = self._d_pending.get(key)
        if fill is None:
            fill = _Fill(core, line)
            self._d_pending[key] = fill
            self.stats.d_misses += 1
            self.fill_log.append((cycle, core, line))
            done = cycle + self.config.d_miss_latency
            self._d_fills.setdefault(done, []).append(fill)
        fill.waiters.append((addr, on_value))
        return "miss"

    def store(self, core: int, addr: int, value: int, epoch: int, cycle: int):
        self._check(addr)
        self.stats.stores += 1
        if self.bulk:
            sets = self._write_sets.get(epoch)
            if sets is None:
                raise SimFault(f"store into unknown epoch {epoch}")
            sets.setdefault(core, {})[addr] = value   # last write wins
            return
        self._write_word(addr, value)
        self.stats.propagation_messages += 1
        line = self._line(addr)
        for other in range(self._n_cores):
            if other != core and self._dtags[other].pop(line, None) is not None:
                self.stats.propagation_messages += 1

    def flush_epoch(self, epoch: int, close: bool = False) -> int:
        """Publish an epoch's buffered stores, one message per dirty line.

        The epoch stays open for further stores unless close is set (done
        when its family terminates, as opposed to a sub-family creation).
        """
        if close:
            per_core = self._write_sets.pop(epoch, None)
        else:
            per_core = self._write_sets.get(epoch)
            if per_core is not None:
                self._write_sets[epoch] = {}
        if per_core is None:
            raise SimFault(f"flush of unknown epoch {epoch}")
        messages = 0
        for core in sorted(per_core):
            buffered = per_core[core]
            lines = []
            for addr, value in buffered.items():
                self._write_word(addr, value)
                line = self._line(addr)
                if line not in lines:
                    lines.append(line)
            messages += len(lines)
            for line in lines:
                # the writer's own cached copy is stale too: drop silently
                self._dtags[core].pop(line, None)
                for other in range(self._n_cores):
                    if other != core and self._dtags[other].pop(line, None) is not None:
                        messages += 1
        self.stats.propagation_messages += messages
        return messages

    # -- instruction fetch side ------------------------------------------------

    # Fetch-ahead distance: enough lines in flight that straight-line code
    # streams at one instruction per cycle (line consumption takes
    # line_bytes/4 cycles against i_miss_latency of fill time).
    PREFETCH_LINES = 3

    def _request_i_fill(self, core: int, line: int, cycle: int):
        key = (core, line)
        if key in self._i_pending or line in self._itags[core]:
            return
        self._i_pending.add(key)
        self.stats.i_misses += 1
        done = cycle + self.config.i_miss_latency
        self._i_fills.setdefault(done, []).append(key)

    def icache_probe(self, core: int, pc: int, cycle: int) -> bool:
        """True if the line holding pc is resident; otherwise start a fill.
        Either way, fetch-ahead keeps the next few lines on the way in."""
        line = (pc * 4) // self.config.line_bytes
        tags = self._itags[core]
        resident = line in tags
        if resident:
            tags.move_to_end(line)
        else:
            self._request_i_fill(core, line, cycle)
        for ahead in range(1, self.PREFETCH_LINES + 1):
            self._request_i_fill(core, line + ahead, cycle)
        return resident

    # -- split-phase completion -------------------------------------------------

    def step(self, cycle: int) -> list:
        """Complete fills due this cycle; returns (callback, value) pairs to run."""
        for key in self._i_fills.pop(cycle, ()):
            self._i_pending.discard(key)
            core, line = key
            self._install(self._itags[core], line, self.config.i_lines)
        out = []
        for fill in self._d_fills.pop(cycle, ()):
            del self._d_pending[(fill.core, fill.line)]
            self._install(self._dtags[fill.core], fill.line, self.config.d_lines)
            for addr, cb in fill.waiters:
                out.append((cb, self._read_word(addr)))
        return out

    @staticmethod
    def _install(tags: OrderedDict, line: int, capacity: int):
        tags[line] = True
        tags.move_to_end(line)
        if len(tags) > capacity:
            tags.popitem(last=False)

    @property
    def busy(self) -> bool:
        return bool(self._d_fills or self._i_fills)

    def unflushed_epochs(self) -> list[int]:
        return [e for e, per_core in self._write_sets.items()
                if any(per_core.values())]


# -- image formats ----------------------------------------------------------

def dump_image_text(mem: bytes) -> str:
    """Sparse `addr=value` rendering of the nonzero words, one per line."""
    lines = []
    for addr in range(0, len(mem) - 3, 4):
        word = int.from_bytes(mem[addr:addr + 4], "little", signed=True)
        if word:
            lines.append(f"0x{addr:08x}={word}")
    return "\n".join(lines) + "\n"


def load_image_text(text: str, size: int) -> bytearray:
    mem = bytearray(size)
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        addr_s, _, val_s = line.partition("=")
        addr, value = int(addr_s, 0), int(val_s, 0)
        mem[addr:addr + 4] = (value & 0xFFFFFFFF).to_bytes(4, "little")
    return mem


def dump_image_binary(mem: bytes) -> bytes:
    return bytes(mem)


def load_image_binary(blob: bytes, size: int) -> bytearray:
    mem = bytearray(size)
    mem[:len(blob)] = blob
    return mem
