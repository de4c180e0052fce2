from hypothesis import given, strategies as st

from hmtsim.noc import MsgKind, Noc, Topology


def bfs_distance(p, kind, src, dst):
    """All-pairs shortest path oracle over the adjacency relation."""
    adj = {c: [] for c in range(p)}
    for a in range(p):
        for b in range(p):
            if a == b:
                continue
            d = abs(a - b)
            if d == 1 or (kind == "ring" and p > 2 and d == p - 1):
                adj[a].append(b)
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for c in frontier:
            for n in adj[c]:
                if n not in dist:
                    dist[n] = dist[c] + 1
                    nxt.append(n)
        frontier = nxt
    return dist[dst]


def test_self_message_next_cycle():
    noc = Noc(Topology("ring", 4))
    msg = noc.send(MsgKind.CREATE, 2, 2, (), cycle=10)
    assert msg.arrives_at == 11
    assert noc.step(10) == []
    assert noc.step(11) == [msg]
    assert all(v == 0 for v in noc.hop_log().values())   # zero hops


def test_ring_three_hops():
    noc = Noc(Topology("ring", 8))
    msg = noc.send(MsgKind.CREATE, 0, 3, (), cycle=0)
    assert msg.arrives_at == 6  # 3 hops at latency 2
    traversed = {k: v for k, v in noc.hop_log().items() if v}
    assert traversed == {(0, 1): 1, (1, 2): 1, (2, 3): 1}


def test_ring_routes_short_way():
    noc = Noc(Topology("ring", 8))
    msg = noc.send(MsgKind.CREATE, 0, 6, (), cycle=0)
    assert msg.arrives_at == 4  # 2 hops via core 7
    traversed = {k: v for k, v in noc.hop_log().items() if v}
    assert traversed == {(6, 7): 1, (0, 7): 1}


@given(st.sampled_from(["ring", "line"]), st.integers(1, 16),
       st.integers(0, 15), st.integers(0, 15))
def test_hops_match_bfs_oracle(kind, p, src, dst):
    src, dst = src % p, dst % p
    topo = Topology(kind, p)
    assert topo.hops(src, dst) == bfs_distance(p, kind, src, dst)
    path = topo.path(src, dst)
    assert path[0] == src and path[-1] == dst
    for a, b in zip(path, path[1:]):
        assert topo.adjacent(a, b)


def test_same_cycle_delivery_fifo_per_destination():
    noc = Noc(Topology("line", 4))
    m1 = noc.send(MsgKind.TERMINATED, 1, 0, ("a",), cycle=0)
    m2 = noc.send(MsgKind.TERMINATED, 1, 0, ("b",), cycle=0)
    m3 = noc.send(MsgKind.TERMINATED, 3, 2, ("c",), cycle=0)
    out = noc.step(2)
    assert out == [m1, m2, m3]  # dst order, then injection order


def test_saturation_conservation():
    noc = Noc(Topology("ring", 8))
    for i in range(100):
        noc.send(MsgKind.CREATE, i % 8, (i * 3) % 8, (i,), cycle=i % 5)
    got = 0
    for cycle in range(40):
        assert noc.injected == got + noc.in_flight + (noc.injected - 100)
        got += len(noc.step(cycle))
    assert got == 100 and noc.in_flight == 0


def test_hop_log_only_adjacent_pairs():
    topo = Topology("ring", 8)
    noc = Noc(topo)
    for s in range(8):
        for d in range(8):
            noc.send(MsgKind.CREATE, s, d, (), cycle=0)
    log = noc.hop_log()
    assert all(topo.adjacent(a, b) for a, b in log)
    assert set(log) == {(a, b) for a in range(8) for b in range(a + 1, 8)
                        if topo.adjacent(a, b)}
