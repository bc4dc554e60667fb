"""Abstract shadow execution with taint tracking.

Every abstract value records the set of source instructions that flowed
into it. Two views are kept: ``sources`` follows every consumed operand
(so taint is never dropped), while ``lineage`` only follows the data
operands of an instruction and skips address-like operands such as storage
keys, memory offsets and hash inputs. Type inference uses the latter so that
an address mask feeding a mapping key is not mistaken for the integer width
of the loaded value.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import TaintError

WORD = 1 << 256
MASK = WORD - 1
STACK_LIMIT = 1024


@dataclass(frozen=True)
class TaintedValue:
    concrete: Optional[int] = None
    sources: frozenset = frozenset()
    lineage: frozenset = frozenset()
    # Storage slot constant that seeded a hash-derived key (mapping/array base).
    seed: Optional[int] = None

    @property
    def known(self):
        return self.concrete is not None


UNKNOWN = TaintedValue()


def _signed(x):
    return x - WORD if x >> 255 else x


def _sdiv(a, b):
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    q = abs(sa) // abs(sb)
    return (-q if (sa < 0) != (sb < 0) else q) & MASK


def _smod(a, b):
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    r = abs(sa) % abs(sb)
    return (-r if sa < 0 else r) & MASK


def _signextend(b, x):
    if b >= 31:
        return x
    bit = 8 * b + 7
    low = x & ((1 << (bit + 1)) - 1)
    return (low | (MASK ^ ((1 << (bit + 1)) - 1))) if (x >> bit) & 1 else low


def _byte(i, x):
    return (x >> (8 * (31 - i))) & 0xFF if i < 32 else 0


def _sar(shift, x):
    if shift >= 256:
        return MASK if x >> 255 else 0
    return (_signed(x) >> shift) & MASK


# Operands are given top-of-stack first, in the usual
# mu_s[0], mu_s[1], ... order.
CONCRETE_OPS = {
    "ADD": lambda a, b: (a + b) & MASK,
    "MUL": lambda a, b: (a * b) & MASK,
    "SUB": lambda a, b: (a - b) & MASK,
    "DIV": lambda a, b: a // b if b else 0,
    "SDIV": _sdiv,
    "MOD": lambda a, b: a % b if b else 0,
    "SMOD": _smod,
    "ADDMOD": lambda a, b, n: (a + b) % n if n else 0,
    "MULMOD": lambda a, b, n: (a * b) % n if n else 0,
    "EXP": lambda a, b: pow(a, b, WORD),
    "SIGNEXTEND": _signextend,
    "LT": lambda a, b: int(a < b),
    "GT": lambda a, b: int(a > b),
    "SLT": lambda a, b: int(_signed(a) < _signed(b)),
    "SGT": lambda a, b: int(_signed(a) > _signed(b)),
    "EQ": lambda a, b: int(a == b),
    "ISZERO": lambda a: int(a == 0),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "XOR": lambda a, b: a ^ b,
    "NOT": lambda a: MASK ^ a,
    "BYTE": _byte,
    "SHL": lambda s, x: (x << s) & MASK if s < 256 else 0,
    "SHR": lambda s, x: x >> s if s < 256 else 0,
    "SAR": _sar,
}

# Instructions whose result is fresh environment data: operands contribute to
# ``sources`` but not to ``lineage``.
_ENV_RESULT = frozenset({
    "BALANCE", "CALLDATALOAD", "EXTCODESIZE", "EXTCODEHASH", "BLOCKHASH",
    "CALL", "CALLCODE", "DELEGATECALL", "STATICCALL", "CREATE", "CREATE2",
})
# (offset operand index, length operand index) of memory regions written
# with data the analysis does not model.
_MEMORY_WRITERS = {
    "CALLDATACOPY": (0, 2),
    "CODECOPY": (0, 2),
    "RETURNDATACOPY": (0, 2),
    "EXTCODECOPY": (1, 3),
    "CALL": (5, 6),
    "CALLCODE": (5, 6),
    "DELEGATECALL": (4, 5),
    "STATICCALL": (4, 5),
}


@dataclass
class ShadowState:
    stack: List[TaintedValue] = field(default_factory=list)
    memory: Dict[int, TaintedValue] = field(default_factory=dict)
    storage: Dict[int, TaintedValue] = field(default_factory=dict)
    # Summary cells absorbing writes at non-concrete offsets/keys.
    unknown_memory: TaintedValue = UNKNOWN
    unknown_storage: TaintedValue = UNKNOWN

    def copy(self):
        return ShadowState(list(self.stack), dict(self.memory), dict(self.storage),
                           self.unknown_memory, self.unknown_storage)


def _union(values, attr="sources"):
    out = frozenset()
    for v in values:
        out |= getattr(v, attr)
    return out


def _merge(a, b):
    return TaintedValue(None, a.sources | b.sources, a.lineage | b.lineage)


def _overlapping(memory, start, length):
    return [v for off, v in memory.items() if off < start + length and start < off + 32]


def _apply(state, ins, taint_sources):
    """Execute ``ins`` on ``state`` in place; return the consumed operands."""
    op = ins.opcode
    name = op.mnemonic
    pc = ins.original_address
    st = state.stack
    if len(st) < op.stack_pops:
        raise TaintError(f"stack underflow at {pc:#x} ({name})", pc)
    own = frozenset({(pc, name)}) if taint_sources(ins) else frozenset()

    if op.is_push:
        value = None if ins.truncated else ins.value
        st.append(TaintedValue(value, own, own))
        consumed = []
    elif op.is_dup:
        n = op.stack_pops
        v = st[-n]
        if own:
            v = TaintedValue(v.concrete, v.sources | own, v.lineage | own, v.seed)
        st.append(v)
        consumed = [st[-n - 1]]
    elif op.is_swap:
        n = op.stack_pops
        st[-1], st[-n] = st[-n], st[-1]
        consumed = []
    else:
        consumed = [st.pop() for _ in range(op.stack_pops)]
        sources = _union(consumed) | own
        result = _result(state, name, pc, consumed, sources, own)
        if result is not None:
            st.append(result)
        elif op.stack_pushes:
            st.extend([TaintedValue(None, sources, own)] * op.stack_pushes)
    if len(st) > STACK_LIMIT:
        raise TaintError(f"stack overflow at {pc:#x}", pc)
    return consumed


def _result(state, name, pc, args, sources, own):
    if name in CONCRETE_OPS:
        values = [a.concrete for a in args]
        concrete = CONCRETE_OPS[name](*values) if None not in values else None
        seed = None
        if name == "ADD":
            seeds = [a.seed for a in args if a.seed is not None]
            if len(seeds) == 1:
                seed = seeds[0]
        return TaintedValue(concrete, sources, _union(args, "lineage") | own, seed)
    if name == "PC":
        return TaintedValue(pc, sources, own)
    if name == "MLOAD":
        off = args[0].concrete
        if off is not None and off in state.memory:
            v = state.memory[off]
            return TaintedValue(v.concrete, v.sources | sources, v.lineage | own, v.seed)
        if off is not None:
            cells = _overlapping(state.memory, off, 32) + [state.unknown_memory]
        else:
            cells = list(state.memory.values()) + [state.unknown_memory]
        return TaintedValue(None, sources | _union(cells), _union(cells, "lineage") | own)
    if name in ("MSTORE", "MSTORE8"):
        off, value = args[0].concrete, args[1]
        if off is None:
            state.unknown_memory = _merge(state.unknown_memory, value)
            return None
        width = 32 if name == "MSTORE" else 1
        for k in [k for k in state.memory if k < off + width and off < k + 32]:
            old = state.memory[k]
            if k != off or width == 1:
                state.memory[k] = TaintedValue(None, old.sources, old.lineage)
        if width == 32:
            state.memory[off] = value
        else:
            state.memory[off] = TaintedValue(None, value.sources, value.lineage)
        return None
    if name == "SHA3":
        off, length = args[0].concrete, args[1].concrete
        seed = None
        if off is not None and length is not None:
            cells = _overlapping(state.memory, off, length) if length else []
            last = state.memory.get(off + length - 32) if length >= 32 else None
            if last is not None:
                seed = last.concrete if last.concrete is not None else last.seed
        else:
            cells = list(state.memory.values()) + [state.unknown_memory]
        return TaintedValue(None, sources | _union(cells), own, seed)
    if name == "SLOAD":
        key = args[0].concrete
        if key is not None:
            v = state.storage.get(key)
            if v is not None:
                return TaintedValue(v.concrete, v.sources | sources, v.lineage | own)
            return TaintedValue(None, sources, own)
        cell = state.unknown_storage
        return TaintedValue(None, sources | cell.sources, cell.lineage | own)
    if name == "SSTORE":
        key, value = args[0].concrete, args[1]
        if key is None:
            state.unknown_storage = _merge(state.unknown_storage, value)
        else:
            state.storage[key] = value
        return None
    if name in _MEMORY_WRITERS:
        oi, li = _MEMORY_WRITERS[name]
        off, length = args[oi].concrete, args[li].concrete
        if off is not None and length is not None:
            for k in [k for k in state.memory if k < off + length and off < k + 32]:
                del state.memory[k]
        if name in _ENV_RESULT:
            return TaintedValue(None, sources, own)
        return None
    if name in _ENV_RESULT:
        return TaintedValue(None, sources, own)
    return None


def step(state, instr, taint_sources):
    """Return the state after abstractly executing ``instr``."""
    new = state.copy()
    _apply(new, instr, taint_sources)
    return new


def trace_path(path, taint_sources, state=None):
    """Execute ``path``; return ``[(instruction, consumed operands), ...]``."""
    state = state or ShadowState()
    out = []
    for ins in path:
        out.append((ins, _apply(state, ins, taint_sources)))
    return out


def run_path(path, taint_sources):
    """Map each instruction address on ``path`` to the operands it consumed
    (the last visit wins for addresses seen more than once)."""
    return {ins.original_address: ops for ins, ops in trace_path(path, taint_sources)}


def mnemonics(*names):
    """Taint-source predicate matching the given mnemonics; ``PUSH`` matches
    every PUSHn."""
    names = {n.upper() for n in names}
    want_push = "PUSH" in names

    def pred(ins):
        return ins.mnemonic in names or (want_push and ins.opcode.is_push)

    return pred
