"""A small EVM interpreter for replaying transactions against fixtures.

It covers the opcodes the fixture corpus and the patch templates use, plus
the usual environment, memory, storage, log and message-call instructions.
CREATE/CREATE2 and precompiles are not supported and halt as invalid.

The gas model is deliberately simple: static costs from the opcode table,
memory expansion, copy and hashing surcharges, 20,000 for setting a zero
slot and 5,000 for any other store, 700 plus value-transfer costs for calls
with a 2,300 stipend and all-but-1/64th forwarding. No refunds, no access
lists.
"""

import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from Crypto.Hash import keccak

from .opcodes import OPCODES

WORD = 2 ** 256
MAX_WORD = WORD - 1
SIGN_BIT = 2 ** 255
ADDRESS_MASK = 2 ** 160 - 1
CALL_DEPTH_LIMIT = 1024
STACK_LIMIT = 1024
STIPEND = 2300
TX_BASE_GAS = 21000

SUCCESS = "success"
REVERT = "revert"
OUT_OF_GAS = "out_of_gas"
INVALID = "invalid"


def keccak256(data):
    return keccak.new(digest_bits=256, data=bytes(data)).digest()


def to_signed(x):
    return x - WORD if x & SIGN_BIT else x


def to_word(x):
    return x % WORD


# Arithmetic written against Python's signed integers; operands are given
# top of stack first.
def op_add(a, b): return to_word(a + b)
def op_mul(a, b): return to_word(a * b)
def op_sub(a, b): return to_word(a - b)
def op_div(a, b): return 0 if b == 0 else a // b
def op_mod(a, b): return 0 if b == 0 else a % b
def op_exp(a, b): return pow(a, b, WORD)
def op_lt(a, b): return 1 if a < b else 0
def op_gt(a, b): return 1 if a > b else 0
def op_eq(a, b): return 1 if a == b else 0
def op_and(a, b): return a & b
def op_or(a, b): return a | b
def op_xor(a, b): return a ^ b
def op_not(a): return MAX_WORD - a
def op_iszero(a): return 1 if a == 0 else 0
def op_slt(a, b): return 1 if to_signed(a) < to_signed(b) else 0
def op_sgt(a, b): return 1 if to_signed(a) > to_signed(b) else 0


def op_sdiv(a, b):
    sa, sb = to_signed(a), to_signed(b)
    if sb == 0:
        return 0
    q = abs(sa) // abs(sb)
    if (sa < 0) ^ (sb < 0):
        q = -q
    return to_word(q)


def op_smod(a, b):
    sa, sb = to_signed(a), to_signed(b)
    if sb == 0:
        return 0
    r = abs(sa) % abs(sb)
    return to_word(-r if sa < 0 else r)


def op_addmod(a, b, n): return 0 if n == 0 else (a + b) % n
def op_mulmod(a, b, n): return 0 if n == 0 else (a * b) % n


def op_signextend(k, x):
    if k > 30:
        return x
    bits = 8 * (k + 1)
    low = x % (1 << bits)
    if low >= 1 << (bits - 1):
        low -= 1 << bits
    return to_word(low)


def op_byte(i, x):
    if i > 31:
        return 0
    return x.to_bytes(32, "big")[i]


def op_shl(s, x): return 0 if s > 255 else to_word(x << s)
def op_shr(s, x): return 0 if s > 255 else x >> s


def op_sar(s, x):
    v = to_signed(x)
    if s > 255:
        return MAX_WORD if v < 0 else 0
    return to_word(v >> s)


ARITHMETIC = {
    "ADD": op_add, "MUL": op_mul, "SUB": op_sub, "DIV": op_div, "SDIV": op_sdiv,
    "MOD": op_mod, "SMOD": op_smod, "ADDMOD": op_addmod, "MULMOD": op_mulmod,
    "EXP": op_exp, "SIGNEXTEND": op_signextend, "LT": op_lt, "GT": op_gt,
    "SLT": op_slt, "SGT": op_sgt, "EQ": op_eq, "ISZERO": op_iszero, "AND": op_and,
    "OR": op_or, "XOR": op_xor, "NOT": op_not, "BYTE": op_byte, "SHL": op_shl,
    "SHR": op_shr, "SAR": op_sar,
}


@dataclass
class Account:
    balance: int = 0
    code: bytes = b""
    storage: Dict[int, int] = field(default_factory=dict)

    def copy(self):
        return Account(self.balance, self.code, dict(self.storage))


@dataclass
class WorldState:
    accounts: Dict[int, Account] = field(default_factory=dict)

    def copy(self):
        return WorldState({a: acct.copy() for a, acct in self.accounts.items()})

    def account(self, addr):
        addr &= ADDRESS_MASK
        if addr not in self.accounts:
            self.accounts[addr] = Account()
        return self.accounts[addr]

    def get(self, addr):
        return self.accounts.get(addr & ADDRESS_MASK)

    def storage_of(self, addr):
        acct = self.get(addr)
        return dict(acct.storage) if acct else {}

    def balance_of(self, addr):
        acct = self.get(addr)
        return acct.balance if acct else 0

    def set_balance(self, addr, value):
        self.account(addr).balance = value

    def restore(self, snapshot):
        self.accounts = snapshot.accounts


@dataclass
class Transaction:
    sender: int
    to: int
    value: int = 0
    data: bytes = b""
    gas_limit: int = 3_000_000
    origin: Optional[int] = None

    def __post_init__(self):
        if self.gas_limit <= 0:
            raise ValueError("gas_limit must be positive")
        if self.origin is None:
            self.origin = self.sender


@dataclass
class ExecutionResult:
    status: str
    return_data: bytes = b""
    gas_used: int = 0
    storage_delta: Dict[int, Dict[int, int]] = field(default_factory=dict)
    trace: Optional[List[tuple]] = None
    logs: List[tuple] = field(default_factory=list)
    # Per address: how many of its frames were active, at most, when one of
    # them issued a message call (2 or more means it was re-entered and the
    # inner frame got as far as calling out again).
    max_nesting: Dict[int, int] = field(default_factory=dict)

    @property
    def success(self):
        return self.status == SUCCESS


class _Halt(Exception):
    def __init__(self, status):
        super().__init__(status)
        self.status = status


@dataclass
class _Message:
    caller: int
    address: int        # account whose storage/balance the code uses
    code_address: int
    value: int
    data: bytes
    gas: int
    depth: int
    static: bool = False
    transfer: bool = True
    code: Optional[bytes] = None


def _jumpdests(code):
    out = set()
    pc = 0
    while pc < len(code):
        op = code[pc]
        if op == 0x5B:
            out.add(pc)
        pc += 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
    return out


def _mem_cost(words):
    return 3 * words + words * words // 512


class Interpreter:
    """Runs one transaction; holds per-transaction bookkeeping."""

    def __init__(self, world, tx, trace=False):
        self.world = world
        self.tx = tx
        self.trace = [] if trace else None
        self.logs = []
        self.active = Counter()
        self.max_nesting = Counter()
        self._jd_cache = {}

    def jumpdests(self, code):
        if code not in self._jd_cache:
            self._jd_cache[code] = _jumpdests(code)
        return self._jd_cache[code]

    def call(self, msg):
        """Execute a message; returns ``(status, gas_left, output)`` and rolls
        the world back unless the status is success."""
        snapshot = self.world.copy()
        logs_mark = len(self.logs)
        if msg.transfer and msg.value:
            src = self.world.account(msg.caller)
            if src.balance < msg.value:
                return REVERT, msg.gas, b""
            src.balance -= msg.value
            self.world.account(msg.address).balance += msg.value
        code = msg.code if msg.code is not None else self.world.account(msg.code_address).code
        if not code:
            return SUCCESS, msg.gas, b""
        self.active[msg.address] += 1
        try:
            status, gas_left, out = self._run(msg, code)
        finally:
            self.active[msg.address] -= 1
        if status != SUCCESS:
            self.world.restore(snapshot)
            del self.logs[logs_mark:]
        return status, gas_left, out

    def _run(self, msg, code):
        world = self.world
        stack = []
        memory = bytearray()
        gas = msg.gas
        pc = 0
        returndata = b""
        valid = self.jumpdests(code)
        n = len(code)

        def use(amount):
            nonlocal gas
            if amount > gas:
                raise _Halt(OUT_OF_GAS)
            gas -= amount

        def expand(offset, length):
            if length == 0:
                return
            end = offset + length
            if end > 2 ** 32:
                raise _Halt(OUT_OF_GAS)
            if end > len(memory):
                old = (len(memory) + 31) // 32
                new = (end + 31) // 32
                use(_mem_cost(new) - _mem_cost(old))
                memory.extend(b"\x00" * (new * 32 - len(memory)))

        def pop():
            if not stack:
                raise _Halt(INVALID)
            return stack.pop()

        def push(v):
            if len(stack) >= STACK_LIMIT:
                raise _Halt(INVALID)
            stack.append(v)

        def read_mem(offset, length):
            expand(offset, length)
            return bytes(memory[offset:offset + length]) if length else b""

        def copy_to_mem(dest, src_bytes, src_off, length):
            expand(dest, length)
            use(3 * ((length + 31) // 32))
            if length:
                chunk = src_bytes[src_off:src_off + length] if src_off < len(src_bytes) else b""
                memory[dest:dest + length] = chunk + b"\x00" * (length - len(chunk))

        try:
            while True:
                if pc >= n:
                    return SUCCESS, gas, b""
                byte = code[pc]
                op = OPCODES[byte]
                name = op.mnemonic
                if self.trace is not None:
                    self.trace.append((msg.address, pc, name))
                if not op.assigned or name == "INVALID":
                    raise _Halt(INVALID)
                use(op.base_gas)
                if len(stack) < op.stack_pops:
                    raise _Halt(INVALID)
                nxt = pc + 1

                if op.is_push:
                    w = op.immediate_width
                    push(int.from_bytes(code[pc + 1:pc + 1 + w].ljust(w, b"\x00"), "big"))
                    nxt = pc + 1 + w
                elif op.is_dup:
                    push(stack[-op.stack_pops])
                elif op.is_swap:
                    k = op.stack_pops
                    stack[-1], stack[-k] = stack[-k], stack[-1]
                elif name in ARITHMETIC:
                    args = [pop() for _ in range(op.stack_pops)]
                    if name == "EXP" and args[1]:
                        use(50 * ((args[1].bit_length() + 7) // 8))
                    push(ARITHMETIC[name](*args))
                elif name == "STOP":
                    return SUCCESS, gas, b""
                elif name == "JUMP":
                    dest = pop()
                    if dest not in valid:
                        raise _Halt(INVALID)
                    nxt = dest
                elif name == "JUMPI":
                    dest, cond = pop(), pop()
                    if cond:
                        if dest not in valid:
                            raise _Halt(INVALID)
                        nxt = dest
                elif name == "JUMPDEST":
                    pass
                elif name == "POP":
                    pop()
                elif name == "PC":
                    push(pc)
                elif name == "GAS":
                    push(gas)
                elif name == "MSIZE":
                    push(len(memory))
                elif name == "MLOAD":
                    off = pop()
                    push(int.from_bytes(read_mem(off, 32), "big"))
                elif name == "MSTORE":
                    off, val = pop(), pop()
                    expand(off, 32)
                    memory[off:off + 32] = val.to_bytes(32, "big")
                elif name == "MSTORE8":
                    off, val = pop(), pop()
                    expand(off, 1)
                    memory[off] = val & 0xFF
                elif name == "SHA3":
                    off, length = pop(), pop()
                    data = read_mem(off, length)
                    use(6 * ((length + 31) // 32))
                    push(int.from_bytes(keccak256(data), "big"))
                elif name == "SLOAD":
                    push(world.account(msg.address).storage.get(pop(), 0))
                elif name == "SSTORE":
                    if msg.static:
                        raise _Halt(INVALID)
                    key, val = pop(), pop()
                    store = world.account(msg.address).storage
                    use(20000 if store.get(key, 0) == 0 and val != 0 else 5000)
                    if val:
                        store[key] = val
                    else:
                        store.pop(key, None)
                elif name == "ADDRESS":
                    push(msg.address)
                elif name == "BALANCE":
                    push(world.balance_of(pop()))
                elif name == "SELFBALANCE":
                    push(world.balance_of(msg.address))
                elif name == "ORIGIN":
                    push(self.tx.origin)
                elif name == "CALLER":
                    push(msg.caller)
                elif name == "CALLVALUE":
                    push(msg.value)
                elif name == "CALLDATALOAD":
                    off = pop()
                    chunk = msg.data[off:off + 32] if off < len(msg.data) else b""
                    push(int.from_bytes(chunk.ljust(32, b"\x00"), "big"))
                elif name == "CALLDATASIZE":
                    push(len(msg.data))
                elif name == "CALLDATACOPY":
                    dest, src, length = pop(), pop(), pop()
                    copy_to_mem(dest, msg.data, src, length)
                elif name == "CODESIZE":
                    push(n)
                elif name == "CODECOPY":
                    dest, src, length = pop(), pop(), pop()
                    copy_to_mem(dest, code, src, length)
                elif name == "EXTCODESIZE":
                    acct = world.get(pop())
                    push(len(acct.code) if acct else 0)
                elif name == "EXTCODECOPY":
                    addr, dest, src, length = pop(), pop(), pop(), pop()
                    acct = world.get(addr)
                    copy_to_mem(dest, acct.code if acct else b"", src, length)
                elif name == "EXTCODEHASH":
                    acct = world.get(pop())
                    push(int.from_bytes(keccak256(acct.code), "big") if acct else 0)
                elif name == "RETURNDATASIZE":
                    push(len(returndata))
                elif name == "RETURNDATACOPY":
                    dest, src, length = pop(), pop(), pop()
                    if src + length > len(returndata):
                        raise _Halt(INVALID)
                    copy_to_mem(dest, returndata, src, length)
                elif name in ("GASPRICE", "COINBASE", "DIFFICULTY", "BASEFEE", "BLOCKHASH"):
                    if name == "BLOCKHASH":
                        pop()
                    push(0)
                elif name == "TIMESTAMP":
                    push(1_600_000_000)
                elif name == "NUMBER":
                    push(10_000_000)
                elif name == "GASLIMIT":
                    push(30_000_000)
                elif name == "CHAINID":
                    push(1)
                elif name.startswith("LOG"):
                    if msg.static:
                        raise _Halt(INVALID)
                    off, length = pop(), pop()
                    topics = [pop() for _ in range(op.stack_pops - 2)]
                    use(8 * length)
                    self.logs.append((msg.address, tuple(topics), read_mem(off, length)))
                elif name in ("RETURN", "REVERT"):
                    off, length = pop(), pop()
                    out = read_mem(off, length)
                    return (SUCCESS if name == "RETURN" else REVERT), gas, out
                elif name == "SELFDESTRUCT":
                    if msg.static:
                        raise _Halt(INVALID)
                    beneficiary = pop() & ADDRESS_MASK
                    me = world.account(msg.address)
                    amount = me.balance
                    me.balance = 0
                    world.account(beneficiary).balance += amount
                    me.code = b""
                    me.storage = {}
                    return SUCCESS, gas, b""
                elif name in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"):
                    req_gas = pop()
                    to = pop() & ADDRESS_MASK
                    value = pop() if name in ("CALL", "CALLCODE") else 0
                    in_off, in_len, out_off, out_len = pop(), pop(), pop(), pop()
                    if name == "CALL" and value and msg.static:
                        raise _Halt(INVALID)
                    data = read_mem(in_off, in_len)
                    expand(out_off, out_len)
                    self.max_nesting[msg.address] = max(self.max_nesting[msg.address],
                                                        self.active[msg.address])
                    if value:
                        use(9000)
                    forward = min(req_gas, gas - gas // 64)
                    use(forward)
                    if value:
                        forward += STIPEND
                    if msg.depth + 1 > CALL_DEPTH_LIMIT or \
                            world.balance_of(msg.address) < value:
                        status, left, out = REVERT, forward - (STIPEND if value else 0), b""
                    else:
                        if name == "CALL":
                            sub = _Message(msg.address, to, to, value, data, forward,
                                           msg.depth + 1, msg.static)
                        elif name == "CALLCODE":
                            sub = _Message(msg.address, msg.address, to, value, data,
                                           forward, msg.depth + 1, msg.static, transfer=False)
                        elif name == "DELEGATECALL":
                            sub = _Message(msg.caller, msg.address, to, msg.value, data,
                                           forward, msg.depth + 1, msg.static, transfer=False)
                        else:
                            sub = _Message(msg.address, to, to, 0, data, forward,
                                           msg.depth + 1, True)
                        status, left, out = self.call(sub)
                    gas += left
                    returndata = out
                    if out_len:
                        k = min(out_len, len(out))
                        memory[out_off:out_off + k] = out[:k]
                    push(1 if status == SUCCESS else 0)
                else:
                    # CREATE, CREATE2 and anything else outside the subset.
                    raise _Halt(INVALID)
                pc = nxt
        except _Halt as halt:
            return halt.status, 0, b""


def _storage_delta(before, after):
    delta = {}
    for addr in set(before.accounts) | set(after.accounts):
        old = before.accounts.get(addr)
        new = after.accounts.get(addr)
        s_old = old.storage if old else {}
        s_new = new.storage if new else {}
        changed = {k: s_new.get(k, 0) for k in set(s_old) | set(s_new)
                   if s_old.get(k, 0) != s_new.get(k, 0)}
        if changed:
            delta[addr] = changed
    return delta


def intrinsic_gas(data):
    return TX_BASE_GAS + sum(16 if b else 4 for b in data)


def execute(state, tx, trace=False):
    """Run ``tx`` on a copy of ``state``; returns ``(new_state, result)``.

    Non-success results return ``state`` itself (bit-identical) and an empty
    storage delta.
    """
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20_000))
    try:
        base = intrinsic_gas(tx.data)
        if base > tx.gas_limit:
            return state, ExecutionResult(OUT_OF_GAS, b"", tx.gas_limit)
        world = state.copy()
        interp = Interpreter(world, tx, trace)
        msg = _Message(tx.sender, tx.to, tx.to, tx.value, bytes(tx.data),
                       tx.gas_limit - base, 0)
        status, left, out = interp.call(msg)
    finally:
        sys.setrecursionlimit(limit)
    gas_used = tx.gas_limit - left
    result = ExecutionResult(status, out, gas_used, trace=interp.trace,
                             max_nesting=dict(interp.max_nesting))
    if status != SUCCESS:
        return state, result
    result.storage_delta = _storage_delta(state, world)
    result.logs = list(interp.logs)
    return world, result


def deploy(state, sender, init_code, address, value=0, gas_limit=10_000_000):
    """Run ``init_code`` as a constructor at ``address``; returns
    ``(new_state, result)`` with the runtime code installed on success."""
    world = state.copy()
    tx = Transaction(sender, address, value, b"", gas_limit)
    interp = Interpreter(world, tx)
    world.account(address)
    msg = _Message(sender, address, address, value, b"", gas_limit, 0, code=bytes(init_code))
    status, left, out = interp.call(msg)
    result = ExecutionResult(status, out, gas_limit - left)
    if status != SUCCESS:
        return state, result
    world.account(address).code = out
    result.storage_delta = _storage_delta(state, world)
    return world, result
