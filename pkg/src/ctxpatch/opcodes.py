"""EVM opcode table (pre-Shanghai instruction set).

Each entry carries the static base gas cost only; dynamic components
(memory expansion, storage, calls, copies) are added by the interpreter.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Opcode:
    mnemonic: str
    byte_value: int
    immediate_width: int = 0
    stack_pops: int = 0
    stack_pushes: int = 0
    base_gas: int = 0
    assigned: bool = True

    @property
    def is_push(self):
        return 0x60 <= self.byte_value <= 0x7F

    @property
    def is_dup(self):
        return 0x80 <= self.byte_value <= 0x8F

    @property
    def is_swap(self):
        return 0x90 <= self.byte_value <= 0x9F

    def __repr__(self):
        return f"Opcode({self.mnemonic})"


# (byte, mnemonic, pops, pushes, base gas)
_TABLE = [
    (0x00, "STOP", 0, 0, 0),
    (0x01, "ADD", 2, 1, 3),
    (0x02, "MUL", 2, 1, 5),
    (0x03, "SUB", 2, 1, 3),
    (0x04, "DIV", 2, 1, 5),
    (0x05, "SDIV", 2, 1, 5),
    (0x06, "MOD", 2, 1, 5),
    (0x07, "SMOD", 2, 1, 5),
    (0x08, "ADDMOD", 3, 1, 8),
    (0x09, "MULMOD", 3, 1, 8),
    (0x0A, "EXP", 2, 1, 10),
    (0x0B, "SIGNEXTEND", 2, 1, 5),
    (0x10, "LT", 2, 1, 3),
    (0x11, "GT", 2, 1, 3),
    (0x12, "SLT", 2, 1, 3),
    (0x13, "SGT", 2, 1, 3),
    (0x14, "EQ", 2, 1, 3),
    (0x15, "ISZERO", 1, 1, 3),
    (0x16, "AND", 2, 1, 3),
    (0x17, "OR", 2, 1, 3),
    (0x18, "XOR", 2, 1, 3),
    (0x19, "NOT", 1, 1, 3),
    (0x1A, "BYTE", 2, 1, 3),
    (0x1B, "SHL", 2, 1, 3),
    (0x1C, "SHR", 2, 1, 3),
    (0x1D, "SAR", 2, 1, 3),
    (0x20, "SHA3", 2, 1, 30),
    (0x30, "ADDRESS", 0, 1, 2),
    (0x31, "BALANCE", 1, 1, 700),
    (0x32, "ORIGIN", 0, 1, 2),
    (0x33, "CALLER", 0, 1, 2),
    (0x34, "CALLVALUE", 0, 1, 2),
    (0x35, "CALLDATALOAD", 1, 1, 3),
    (0x36, "CALLDATASIZE", 0, 1, 2),
    (0x37, "CALLDATACOPY", 3, 0, 3),
    (0x38, "CODESIZE", 0, 1, 2),
    (0x39, "CODECOPY", 3, 0, 3),
    (0x3A, "GASPRICE", 0, 1, 2),
    (0x3B, "EXTCODESIZE", 1, 1, 700),
    (0x3C, "EXTCODECOPY", 4, 0, 700),
    (0x3D, "RETURNDATASIZE", 0, 1, 2),
    (0x3E, "RETURNDATACOPY", 3, 0, 3),
    (0x3F, "EXTCODEHASH", 1, 1, 700),
    (0x40, "BLOCKHASH", 1, 1, 20),
    (0x41, "COINBASE", 0, 1, 2),
    (0x42, "TIMESTAMP", 0, 1, 2),
    (0x43, "NUMBER", 0, 1, 2),
    (0x44, "DIFFICULTY", 0, 1, 2),
    (0x45, "GASLIMIT", 0, 1, 2),
    (0x46, "CHAINID", 0, 1, 2),
    (0x47, "SELFBALANCE", 0, 1, 5),
    (0x48, "BASEFEE", 0, 1, 2),
    (0x50, "POP", 1, 0, 2),
    (0x51, "MLOAD", 1, 1, 3),
    (0x52, "MSTORE", 2, 0, 3),
    (0x53, "MSTORE8", 2, 0, 3),
    (0x54, "SLOAD", 1, 1, 2100),
    (0x55, "SSTORE", 2, 0, 0),
    (0x56, "JUMP", 1, 0, 8),
    (0x57, "JUMPI", 2, 0, 10),
    (0x58, "PC", 0, 1, 2),
    (0x59, "MSIZE", 0, 1, 2),
    (0x5A, "GAS", 0, 1, 2),
    (0x5B, "JUMPDEST", 0, 0, 1),
    (0xF0, "CREATE", 3, 1, 32000),
    (0xF1, "CALL", 7, 1, 700),
    (0xF2, "CALLCODE", 7, 1, 700),
    (0xF3, "RETURN", 2, 0, 0),
    (0xF4, "DELEGATECALL", 6, 1, 700),
    (0xF5, "CREATE2", 4, 1, 32000),
    (0xFA, "STATICCALL", 6, 1, 700),
    (0xFD, "REVERT", 2, 0, 0),
    (0xFE, "INVALID", 0, 0, 0),
    (0xFF, "SELFDESTRUCT", 1, 0, 5000),
]

OPCODES = {}
for _byte, _name, _pops, _pushes, _gas in _TABLE:
    OPCODES[_byte] = Opcode(_name, _byte, 0, _pops, _pushes, _gas)
for _n in range(1, 33):
    OPCODES[0x5F + _n] = Opcode(f"PUSH{_n}", 0x5F + _n, _n, 0, 1, 3)
for _n in range(1, 17):
    OPCODES[0x7F + _n] = Opcode(f"DUP{_n}", 0x7F + _n, 0, _n, _n + 1, 3)
    OPCODES[0x8F + _n] = Opcode(f"SWAP{_n}", 0x8F + _n, 0, _n + 1, _n + 1, 3)
for _n in range(5):
    OPCODES[0xA0 + _n] = Opcode(f"LOG{_n}", 0xA0 + _n, 0, _n + 2, 0, 375 * (_n + 1))
for _b in range(256):
    if _b not in OPCODES:
        OPCODES[_b] = Opcode(f"UNASSIGNED_0x{_b:02x}", _b, assigned=False)

BY_MNEMONIC = {op.mnemonic: op for op in OPCODES.values() if op.assigned}
# Historical names used by older tooling and bug detectors.
ALIASES = {"SUICIDE": "SELFDESTRUCT", "KECCAK256": "SHA3", "ASSERTFAIL": "INVALID"}

TERMINATORS = frozenset({"STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT"})
JUMPS = frozenset({"JUMP", "JUMPI"})


def by_mnemonic(name):
    """Look up an opcode by mnemonic (case-insensitive, aliases accepted)."""
    key = name.upper()
    key = ALIASES.get(key, key)
    try:
        return BY_MNEMONIC[key]
    except KeyError:
        raise KeyError(f"unknown mnemonic {name!r}") from None


def push_for_width(width):
    if not 1 <= width <= 32:
        raise ValueError(f"no PUSH opcode of width {width}")
    return OPCODES[0x5F + width]


def minimal_width(value):
    """Smallest PUSH width able to hold ``value`` (PUSH1 for zero)."""
    if value < 0 or value >= 1 << 256:
        raise ValueError(f"value {value} is not a 256-bit word")
    return max(1, (value.bit_length() + 7) // 8)


def ends_block(op):
    """True when control never falls through to the next instruction
    unconditionally (terminators, jumps, unassigned bytes)."""
    return op.mnemonic in TERMINATORS or op.mnemonic in JUMPS or not op.assigned


def halts(op):
    return op.mnemonic in TERMINATORS or not op.assigned
