"""Control network-on-chip: hop-by-hop messaging between per-core TMUs.

Physically separate from the memory network. Messages travel along adjacent
cores only; delivery takes hops * hop_latency cycles (min 1 cycle for a
core messaging itself). There is no contention or buffering model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class MsgKind(enum.Enum):
    ALLOCATE_REQ = "allocate_req"
    ALLOCATE_RSP = "allocate_rsp"
    CREATE = "create"
    TERMINATED = "terminated"
    SYNC_DONE = "sync_done"
    RELEASE = "release"
    CHANNEL = "channel"     # forward-only shared-channel transfer


@dataclass
class ControlMessage:
    kind: MsgKind
    src: int
    dst: int
    payload: tuple
    injected_at: int = 0
    seq: int = 0
    arrives_at: int = 0


@dataclass(frozen=True)
class Topology:
    kind: str = "ring"          # "ring" or "line"
    p: int = 1
    hop_latency: int = 2

    def adjacent(self, a: int, b: int) -> bool:
        d = abs(a - b)
        if self.kind == "ring":
            return d == 1 or d == self.p - 1 and self.p > 2
        return d == 1

    def path(self, src: int, dst: int) -> list[int]:
        """Cores visited from src to dst, inclusive, along the shorter side."""
        if src == dst:
            return [src]
        if self.kind == "line":
            step = 1 if dst > src else -1
            return list(range(src, dst + step, step))
        fwd = (dst - src) % self.p
        bwd = (src - dst) % self.p
        # ties go clockwise (ascending core ids)
        step = 1 if fwd <= bwd else -1
        out = [src]
        c = src
        while c != dst:
            c = (c + step) % self.p
            out.append(c)
        return out

    def hops(self, src: int, dst: int) -> int:
        return len(self.path(src, dst)) - 1


class Noc:
    def __init__(self, topology: Topology):
        self.topology = topology
        self._in_flight: dict[int, list[ControlMessage]] = {}  # arrival cycle -> msgs
        self._seq = 0
        self.injected = 0
        self.delivered = 0
        self._hop_counts: dict[tuple[int, int], int] = {}

    def send(self, kind: MsgKind, src: int, dst: int, payload: tuple,
             cycle: int) -> ControlMessage:
        route = self.topology.path(src, dst)
        hops = len(route) - 1
        msg = ControlMessage(kind, src, dst, payload, injected_at=cycle,
                             seq=self._seq,
                             arrives_at=cycle + max(1, hops * self.topology.hop_latency))
        self._seq += 1
        self.injected += 1
        for a, b in zip(route, route[1:]):
            link = (a, b) if a < b else (b, a)
            self._hop_counts[link] = self._hop_counts.get(link, 0) + 1
        self._in_flight.setdefault(msg.arrives_at, []).append(msg)
        return msg

    def step(self, cycle: int) -> list[ControlMessage]:
        """Messages arriving this cycle, ordered by (dst core, injection seq)."""
        due = self._in_flight.pop(cycle, [])
        due.sort(key=lambda m: (m.dst, m.seq))
        self.delivered += len(due)
        return due

    @property
    def in_flight(self) -> int:
        return self.injected - self.delivered

    def hop_log(self) -> dict[tuple[int, int], int]:
        """Traversal count for every adjacent (low core, high core) link."""
        topo = self.topology
        out = {}
        for a in range(topo.p):
            for b in range(a + 1, topo.p):
                if topo.adjacent(a, b):
                    out[(a, b)] = self._hop_counts.get((a, b), 0)
        return out
