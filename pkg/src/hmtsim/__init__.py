"""Cycle-level simulator of a hardware-multithreaded many-core: dataflow
scheduling from the register file, switch-hinted fetch, bulk thread creation
over adjacent cores, a control NoC, and eager vs bulk store coherency."""

from .isa import AsmError, Instruction, Opcode, Program, annotate_hints, assemble, validate
from .kernels import (
    KernelSpec,
    corpus,
    kernel_chain,
    kernel_heterogeneous,
    kernel_loaduse,
    kernel_regular,
    kernel_starvation,
)
from .memory import CacheConfig, MemorySystem
from .noc import ControlMessage, MsgKind, Noc, Topology
from .oracle import OracleDeadlock, OracleResult, sequential_oracle
from .sim import ChipConfig, Metrics, Outcome, RunResult, detect_deadlock, format_trace, run
from .tmu import Allocation, Family, SpanPool, distribute

__all__ = [
    "AsmError", "Instruction", "Opcode", "Program", "annotate_hints",
    "assemble", "validate", "KernelSpec", "corpus", "kernel_chain",
    "kernel_heterogeneous", "kernel_loaduse", "kernel_regular",
    "kernel_starvation", "CacheConfig", "MemorySystem", "ControlMessage",
    "MsgKind", "Noc", "Topology", "OracleDeadlock", "OracleResult",
    "sequential_oracle", "ChipConfig", "Metrics", "Outcome", "RunResult",
    "detect_deadlock", "format_trace", "run", "Allocation", "Family",
    "SpanPool", "distribute",
]
