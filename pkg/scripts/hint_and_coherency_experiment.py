#!/usr/bin/env python3
"""Desk-scale experiment: the headline architectural comparisons.

Prints four small tables:
  1. switch hints on/off on the load-use probe (flushes, utilization),
  2. eager vs bulk store propagation traffic on the regular kernel,
  3. per-core imbalance of the even N/P split on the heterogeneous kernel,
  4. cycles vs core count for the dependent chain (functional portability
     with non-portable performance).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from hmtsim.kernels import (
    kernel_chain,
    kernel_heterogeneous,
    kernel_loaduse,
    kernel_regular,
)
from hmtsim.sim import ChipConfig, run


def table(title, header, rows):
    print(f"\n== {title} ==")
    widths = [max(len(str(r[i])) for r in [header] + rows)
              for i in range(len(header))]
    for row in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))


def main():
    lu = kernel_loaduse()
    rows = []
    for threads in (1, 4):
        spec = kernel_loaduse(threads=threads)
        for hints in (True, False):
            m = run(ChipConfig(p=1, hints=hints), spec.program).metrics
            rows.append([threads, "on" if hints else "off", m.flushes,
                         f"{m.utilization:.4f}", m.cycles])
    table("switch hints, load-use probe (1 core)",
          ["threads", "hints", "flushes", "utilization", "cycles"], rows)

    reg = kernel_regular()
    rows = []
    for coh in ("eager", "bulk"):
        m = run(ChipConfig(p=4, coherency=coh), reg.program).metrics
        rows.append([coh, m.propagation_messages, m.stores, m.cycles])
    table("store propagation, regular kernel (n=256, 4 cores)",
          ["coherency", "propagation msgs", "stores", "cycles"], rows)

    het = kernel_heterogeneous()
    res = run(ChipConfig(p=4), het.program)
    rows = [[c, pc.commits, f"{pc.utilization:.4f}"]
            for c, pc in enumerate(res.metrics.per_core)]
    rows.append(["makespan", res.metrics.cycles,
                 f"ideal {res.metrics.commits / 4:.0f}"])
    table("even N/P split, heterogeneous kernel (n=64, scale=16, 4 cores)",
          ["core", "commits", "utilization"], rows)

    chain = kernel_chain()
    rows = []
    for p in (1, 2, 4, 8):
        res = run(ChipConfig(p=p), chain.program)
        rows.append([p, res.metrics.cycles, res.memory_hash()[:12]])
    table("dependent chain across core counts (n=100)",
          ["cores", "cycles", "memory hash[0:12]"], rows)


if __name__ == "__main__":
    main()
