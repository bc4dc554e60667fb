"""Context inference: integer types, free storage and owner variables."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Set

from . import cfg as cfglib
from .errors import LocationError, TaintError
from .taint import mnemonics, trace_path

log = logging.getLogger(__name__)

ARITHMETIC = frozenset({"ADD", "SUB", "MUL"})
# Opcodes whose results carry caller-controlled or environment data; used to
# decide whether a stored value depends on CALLER alone.
INPUT_OPCODES = frozenset({
    "CALLER", "ORIGIN", "CALLVALUE", "CALLDATALOAD", "CALLDATASIZE", "BALANCE",
    "SELFBALANCE", "TIMESTAMP", "NUMBER", "COINBASE", "BLOCKHASH", "DIFFICULTY",
    "GASLIMIT", "GASPRICE", "GAS", "RETURNDATASIZE", "EXTCODESIZE", "EXTCODEHASH",
    "CALL", "CALLCODE", "DELEGATECALL", "STATICCALL", "ADDRESS", "CHAINID",
    "BASEFEE", "MLOAD",
})


@dataclass(frozen=True)
class IntegerType:
    bits: int = 256
    signed: bool = False

    def __post_init__(self):
        if self.bits <= 0 or self.bits % 8 or self.bits > 256:
            raise ValueError(f"invalid integer width {self.bits}")

    def __str__(self):
        return f"{'int' if self.signed else 'uint'}{self.bits}"


@dataclass(frozen=True)
class IntegerBounds:
    max: int
    min: int
    bits: int

    @property
    def min_word(self):
        """``min`` as a 256-bit two's-complement word."""
        return self.min % (1 << 256)


def bounds_of(t):
    if t.signed:
        return IntegerBounds((1 << (t.bits - 1)) - 1, -(1 << (t.bits - 1)), t.bits)
    return IntegerBounds((1 << t.bits) - 1, 0, t.bits)


def _mask_width(value):
    """k when value == 2**k - 1 with k a positive multiple of 8, else None."""
    if value is None or value <= 0 or value & (value + 1):
        return None
    k = value.bit_length()
    return k if k % 8 == 0 else None


def instruction_at(cfg, pc):
    block = cfglib.find_block_containing(cfg, pc)
    return block.instructions[block.index_of(pc)]


def infer_integer_type(cfg, bug_pc, max_depth=cfglib.DEFAULT_MAX_DEPTH):
    ins = instruction_at(cfg, bug_pc)
    if ins.mnemonic not in ARITHMETIC:
        raise LocationError(f"pc {bug_pc:#x} is {ins.mnemonic}, not ADD/SUB/MUL")
    path = cfglib.path_to_root(cfg, bug_pc, max_depth)
    trace = trace_path(path, mnemonics("PUSH", "AND", "SIGNEXTEND"))

    last_ops = {}
    order = {}
    for i, (step_ins, ops) in enumerate(trace[:-1]):
        last_ops[step_ins.original_address] = ops
        order[step_ins.original_address] = i
    operands = trace[-1][1]
    reaching = frozenset().union(*(op.lineage for op in operands))

    candidates = []
    for addr, name in reaching:
        ops = last_ops.get(addr)
        if not ops:
            continue
        if name == "AND":
            widths = [w for w in (_mask_width(op.concrete) for op in ops) if w]
            if widths:
                candidates.append((addr, IntegerType(max(widths), False)))
        elif name == "SIGNEXTEND":
            x = ops[0].concrete
            if x is not None and x < 31:
                candidates.append((addr, IntegerType(8 * (x + 1), True)))
    if not candidates:
        return IntegerType(256, False)
    before = [c for c in candidates if c[0] <= bug_pc]
    if before:
        return max(before, key=lambda c: c[0])[1]
    # Masks emitted in code laid out after the bug: take the latest executed.
    return max(candidates, key=lambda c: order.get(c[0], -1))[1]


@dataclass
class StorageLayout:
    used_keys: Set[int] = field(default_factory=set)
    warnings: List[str] = field(default_factory=list)

    @property
    def next_free(self):
        return max(self.used_keys) + 1 if self.used_keys else 0

    def merge(self, other):
        return StorageLayout(self.used_keys | other.used_keys, self.warnings + other.warnings)

    def to_json(self):
        return {
            "used_keys": [hex(k) for k in sorted(self.used_keys)],
            "next_free": hex(self.next_free),
            "warnings": list(self.warnings),
        }


def _traces(cfg, pred, max_paths, max_depth):
    """Taint-trace every enumerated path; failing paths are reported, not raised."""
    paths = cfglib.enumerate_paths(cfg, max_paths, max_depth)
    traces, errors = [], []
    for path in paths:
        try:
            traces.append(trace_path(path, pred))
        except TaintError as exc:
            errors.append(str(exc))
    return traces, errors, paths.truncated


def key_identity(value):
    """Identity of a storage key: a concrete slot, or the seed slot of a
    hash-derived key, or None when nothing is known."""
    if value.concrete is not None:
        return ("slot", value.concrete)
    if value.seed is not None:
        return ("seed", value.seed)
    return None


def infer_storage_layout(cfg, max_paths=cfglib.DEFAULT_MAX_PATHS,
                         max_depth=cfglib.DEFAULT_MAX_DEPTH):
    traces, errors, truncated = _traces(cfg, mnemonics("PUSH"), max_paths, max_depth)
    layout = StorageLayout()
    seen = set()
    opaque = set()
    for trace in traces:
        for ins, ops in trace:
            if ins.mnemonic not in ("SLOAD", "SSTORE"):
                continue
            seen.add(ins.original_address)
            ident = key_identity(ops[0])
            if ident is None:
                opaque.add(ins.original_address)
            else:
                layout.used_keys.add(ident[1])
    if opaque:
        layout.warnings.append(
            f"{len(opaque)} storage access(es) with non-inferable key: "
            + ", ".join(f"{a:#x}" for a in sorted(opaque)))
    reach = cfg.reachable()
    missed = sorted(
        ins.original_address
        for s in reach for ins in cfg.blocks[s].instructions
        if ins.mnemonic in ("SLOAD", "SSTORE") and ins.original_address not in seen
    )
    if missed:
        layout.warnings.append(
            "storage access(es) not covered by any analysed path: "
            + ", ".join(f"{a:#x}" for a in missed))
    if truncated:
        layout.warnings.append("path enumeration truncated")
    if errors:
        layout.warnings.append(f"{len(errors)} path(s) skipped: {errors[0]}")
    return layout


def owner_candidates(cfg, max_paths=cfglib.DEFAULT_MAX_PATHS,
                     max_depth=cfglib.DEFAULT_MAX_DEPTH):
    """Concrete keys of SSTOREs whose value derives from CALLER and no other input."""
    pred = mnemonics(*INPUT_OPCODES)
    traces, _, _ = _traces(cfg, pred, max_paths, max_depth)
    keys = set()
    for trace in traces:
        for ins, ops in trace:
            if ins.mnemonic != "SSTORE" or ops[0].concrete is None:
                continue
            names = {name for _, name in ops[1].sources}
            if names == {"CALLER"}:
                keys.add(ops[0].concrete)
    return keys


def find_owner_variable(cfg, **kwargs) -> Optional[int]:
    """Storage key holding ``msg.sender`` written by the analysed code, or None
    when there is no candidate or more than one."""
    keys = owner_candidates(cfg, **kwargs)
    return next(iter(keys)) if len(keys) == 1 else None


def _storage_traces(cfg, max_paths, max_depth):
    traces, _, _ = _traces(cfg, mnemonics("PUSH"), max_paths, max_depth)
    return traces


def find_shared_state_writes(cfg, reentrant_pc, max_paths=cfglib.DEFAULT_MAX_PATHS,
                             max_depth=cfglib.DEFAULT_MAX_DEPTH):
    """Addresses of every SSTORE writing a key that is read or written on a
    path through the CALL at ``reentrant_pc``."""
    return set(shared_state_sites(cfg, reentrant_pc, max_paths, max_depth))


def shared_state_sites(cfg, reentrant_pc, max_paths=cfglib.DEFAULT_MAX_PATHS,
                       max_depth=cfglib.DEFAULT_MAX_DEPTH):
    """Like :func:`find_shared_state_writes`, but map each SSTORE address to
    True when it can execute without first passing the CALL (so a lock taken
    before the CALL does not already cover it)."""
    ins = instruction_at(cfg, reentrant_pc)
    if ins.mnemonic != "CALL":
        raise LocationError(f"pc {reentrant_pc:#x} is {ins.mnemonic}, not CALL")
    traces = _storage_traces(cfg, max_paths, max_depth)
    touched = set()
    for trace in traces:
        if not any(i.original_address == reentrant_pc for i, _ in trace):
            continue
        for i, ops in trace:
            if i.mnemonic in ("SLOAD", "SSTORE"):
                ident = key_identity(ops[0])
                if ident is not None:
                    touched.add(ident)
    sites = {}
    for trace in traces:
        passed = False
        for i, ops in trace:
            if i.original_address == reentrant_pc:
                passed = True
            if i.mnemonic == "SSTORE" and key_identity(ops[0]) in touched:
                exposed = sites.get(i.original_address, False) or not passed
                sites[i.original_address] = exposed
    return sites
