"""
Guarding an addition in place
=============================

A token contract adds an untrusted amount to a 16-bit counter.  We infer the
counter's width from the bytecode, insert a bounds check in front of the
``ADD`` and watch every later jump move by the size of the check.
"""

from ctxpatch import corpus
from ctxpatch.asm import disassemble, split_anatomy
from ctxpatch.cfg import build_cfg
from ctxpatch.harness import differential_run
from ctxpatch.inference import bounds_of, infer_integer_type
from ctxpatch.pipeline import patch_contract

fx = corpus.fixture("overflow_uint16")
print(fx.description)
print("bug report:", fx.bug_report())

###############################################################################
# The instructions around the vulnerable ``ADD``.

runtime = fx.runtime
for ins in disassemble(runtime):
    if fx.bug_pc - 12 <= ins.address <= fx.bug_pc + 4:
        print(f"  {ins.address:#06x}  {ins}")

###############################################################################
# The operands are masked with ``0xffff`` on their way to the ``ADD``, so the
# taint pass settles on ``uint16``.  The guard is built around that bound.

g = build_cfg(disassemble(runtime))
t = infer_integer_type(g, fx.bug_pc)
print(t, "max =", hex(bounds_of(t).max))

###############################################################################
# Patch, then disassemble the same window of the new runtime.  The guard
# takes the ``ADD``'s old address and the ``ADD`` itself lands 16 bytes later.

out, report = patch_contract(fx.code, fx.bugs)
new_runtime = split_anatomy(out).runtime
print("bytes inserted:", report.entries[0].bytes_inserted)
for ins in disassemble(new_runtime):
    if fx.bug_pc - 2 <= ins.address <= fx.bug_pc + 18:
        print(f"  {ins.address:#06x}  {ins}")

###############################################################################
# Jump pushes that pointed past the anchor now point 16 bytes further on.

old = [i for i in disassemble(runtime) if i.mnemonic.startswith("PUSH")]
new = [i for i in disassemble(new_runtime) if i.mnemonic.startswith("PUSH")]
targets = {i.address for i in disassemble(runtime) if i.mnemonic == "JUMPDEST"}
for a, b in zip(old, [i for i in new if i.address < fx.bug_pc or i.address >= fx.bug_pc + 16]):
    if a.value in targets and a.value != b.value:
        print(f"  push at {a.address:#06x}: {a.value:#x} -> {b.value:#x}")

###############################################################################
# Finally replay the recorded transactions against both versions.

verdict = differential_run(fx.code, out, fx.scenario,
                           excluded_slots=report.allocated_slots)
print(verdict.table())
