"""
Reading integer widths from bytecode
====================================

Solidity compiles ``uint32`` arithmetic to a full-width ``ADD`` followed by a
``0xffffffff`` mask, and ``int32`` arithmetic to ``SIGNEXTEND`` with byte
index 3.  Those idioms are all the type inference has to go on.
"""

from ctxpatch import corpus
from ctxpatch.asm import disassemble
from ctxpatch.cfg import build_cfg
from ctxpatch.inference import bounds_of, infer_integer_type
from ctxpatch.lasm import assemble_source

for name in ("overflow_uint32", "overflow_int32", "overflow_uint16", "overflow_mul"):
    fx = corpus.fixture(name)
    g = build_cfg(disassemble(fx.runtime))
    t = infer_integer_type(g, fx.bug_pc)
    b = bounds_of(t)
    print(f"{name:16s} {str(t):8s} [{b.min}, {b.max}]")

###############################################################################
# A hand-written snippet.  ``SIGNEXTEND`` with ``x = 1`` is a 16-bit signed
# value, since the width is 8 * (x + 1).

code, labels = assemble_source("""
    PUSH1 0x04 CALLDATALOAD PUSH1 0x01 SIGNEXTEND
    PUSH1 0x24 CALLDATALOAD PUSH1 0x01 SIGNEXTEND
    =bug ADD PUSH1 0x00 SSTORE STOP
""")
print(infer_integer_type(build_cfg(disassemble(code)), labels["bug"]))

###############################################################################
# With no mask and no ``SIGNEXTEND`` in reach the value is a plain word.

code, labels = assemble_source("PUSH1 0x04 CALLDATALOAD DUP1 =bug ADD PUSH1 0x00 SSTORE STOP")
print(infer_integer_type(build_cfg(disassemble(code)), labels["bug"]))
