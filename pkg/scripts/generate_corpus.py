#!/usr/bin/env python3
"""Regenerate the kernel corpus under kernels/.

Writes <name>.masm (assembly source) and <name>.expected (the sequential
interpreter's sparse memory image) for every corpus kernel, then re-runs the
interpreter on the written sources as a self-check before the corpus is
considered frozen.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from hmtsim.isa import assemble, validate
from hmtsim.kernels import corpus
from hmtsim.memory import dump_image_text
from hmtsim.oracle import sequential_oracle


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "kernels"
    out_dir.mkdir(exist_ok=True)
    for spec in corpus():
        masm = out_dir / f"{spec.name}.masm"
        expected = out_dir / f"{spec.name}.expected"
        masm.write_text(spec.source + "\n")
        expected.write_text(dump_image_text(spec.expected_image()))
        # self-check: the written artifacts round-trip through the oracle
        program = assemble(masm.read_text(), name=spec.name)
        assert validate(program) == []
        image = sequential_oracle(program).final_memory
        assert dump_image_text(image) == expected.read_text(), spec.name
        print(f"{spec.name}: {len(program)} instructions, "
              f"params {spec.params}")
    # the deadlocking starvation probe never completes: source only
    from hmtsim.kernels import kernel_starvation
    probe = kernel_starvation(2)
    (out_dir / f"{probe.name}.masm").write_text(probe.source + "\n")
    print(f"{probe.name}: deadlock probe, no expected image")
    print(f"corpus frozen under {out_dir}")


if __name__ == "__main__":
    main()
