"""Hand-assembled fixture contracts with bug reports and transaction scenarios.

Every fixture follows the shape of solc 0.5 output: a free-memory-pointer
prologue, a selector dispatcher, callvalue checks on non-payable functions,
argument masks, internal functions reached through pushed return labels and
a ``CODECOPY`` deployment stub followed by CBOR metadata.  The ``=bug``
marker in each runtime listing names the instruction the bug report points
at.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .asm import write_bytecode
from .evm import Transaction, keccak256
from .harness import AccountSpec, Scenario
from .inference import IntegerType
from .lasm import assemble_source
from .reports import BugEntry

ETHER = 10 ** 18

TARGET = 0xC0DE
DEPLOYER = 0xD0
ALICE = 0xA11CE
BOB = 0xB0B
MALLORY = 0x6A11
ATTACKER = 0xA77AC
ACCOMPLICE = 0xACC0
HELPER = 0x11B0

GAS = 1_000_000

MASK20 = "PUSH20 0xffffffffffffffffffffffffffffffffffffffff"


# --- assembly snippets --------------------------------------------------------

def selector(signature):
    return keccak256(signature.encode())[:4]


def metadata(name):
    """solc 0.5.17 style CBOR trailer (bzzr1 hash + compiler version)."""
    digest = keccak256(name.encode())
    body = bytes.fromhex("a265627a7a72315820") + digest + bytes.fromhex("64736f6c6343000511")
    return body + len(body).to_bytes(2, "big")


def dispatcher(functions, fallback="PUSH1 0x00 DUP1 REVERT"):
    """Prologue plus ``DUP1 PUSH4 sel EQ @label JUMPI`` per function."""
    lines = ["PUSH1 0x80 PUSH1 0x40 MSTORE",
             "PUSH1 0x04 CALLDATASIZE LT @fallback JUMPI",
             "PUSH1 0x00 CALLDATALOAD PUSH1 0xe0 SHR"]
    for sig, label in functions:
        lines.append(f"DUP1 PUSH4 0x{selector(sig).hex()} EQ @{label} JUMPI")
    lines.append(f"fallback: {fallback}")
    return "\n".join(lines)


def nonpayable(name):
    return f"CALLVALUE DUP1 ISZERO @{name}_np JUMPI PUSH1 0x00 DUP1 REVERT {name}_np: POP"


def mapping_key(slot):
    """Key on the stack → ``keccak256(key . slot)``."""
    return (f"{MASK20} AND PUSH1 0x00 MSTORE PUSH1 {slot:#x} PUSH1 0x20 MSTORE "
            "PUSH1 0x40 PUSH1 0x00 SHA3")


RETURN_WORD = "PUSH1 0x00 MSTORE PUSH1 0x20 PUSH1 0x00 RETURN"
REVERT0 = "PUSH1 0x00 DUP1 REVERT"


def call_target(signature, value="PUSH1 0x00", args=(), to=TARGET):
    """Attacker-side call of ``signature`` on ``to``; leaves the success flag."""
    lines = [f"PUSH4 0x{selector(signature).hex()} PUSH1 0xe0 SHL PUSH1 0x00 MSTORE"]
    for i, arg in enumerate(args):
        lines.append(f"{arg} PUSH1 {4 + 32 * i:#x} MSTORE")
    lines.append(f"PUSH1 0x00 PUSH1 0x00 PUSH1 {4 + 32 * len(args):#x} PUSH1 0x00 "
                 f"{value} PUSH3 {to:#x} GAS CALL")
    return "\n".join(lines)


def word(v):
    return (v % (1 << 256)).to_bytes(32, "big")


def calldata(signature, *args):
    return selector(signature) + b"".join(word(a) for a in args)


def build_contract(ctor_asm, runtime_asm, name, payable_ctor=False):
    """Assemble deployment bytes; returns ``(code, runtime, runtime labels)``."""
    runtime, labels = assemble_source(runtime_asm)
    copied = runtime + metadata(name)
    check = "" if payable_ctor else nonpayable("ctor")
    ctor = f"""
        PUSH1 0x80 PUSH1 0x40 MSTORE
        {check}
        {ctor_asm}
        PUSH2 {len(copied):#x} DUP1 PUSH2 @ctor_end PUSH1 0x00 CODECOPY
        PUSH1 0x00 RETURN INVALID =ctor_end
    """
    deployment, _ = assemble_source(ctor)
    return deployment + copied, runtime, labels


def owner_ctor(slot=0):
    """``owner = msg.sender`` with solc's read-modify-write of a packed slot."""
    return (f"CALLER PUSH1 {slot:#x} DUP1 PUSH2 0x0100 EXP DUP2 SLOAD DUP2 {MASK20} MUL "
            f"NOT AND SWAP1 DUP4 {MASK20} AND MUL OR SWAP1 SSTORE POP")


# --- fixtures ----------------------------------------------------------------

@dataclass
class Fixture:
    name: str
    code: bytes
    runtime: bytes
    bugs: List[BugEntry]
    scenario: Scenario
    labels: Dict[str, int] = field(default_factory=dict)
    expected_type: Optional[IntegerType] = None
    description: str = ""

    @property
    def bug_pc(self):
        return self.bugs[0].pc

    def bug_report(self):
        return [b.to_json() for b in self.bugs]

    def write(self, directory):
        """Write ``<name>.hex``, ``<name>.json`` (bugs) and ``<name>.scenario.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_bytecode(d / f"{self.name}.hex", self.code)
        (d / f"{self.name}.json").write_text(json.dumps(self.bug_report(), indent=2) + "\n")
        (d / f"{self.name}.scenario.json").write_text(
            json.dumps(self.scenario.to_json(), indent=2) + "\n")
        return d / f"{self.name}.hex"


def _eoas(*extra):
    accts = [AccountSpec(a, 100 * ETHER) for a in (DEPLOYER, ALICE, BOB, MALLORY)]
    return accts + list(extra)


def _scenario(txs, accounts=None, deploy_value=0):
    sc = Scenario(TARGET, DEPLOYER, deploy_value, accounts or _eoas())
    for sender, data, value, label, *to in txs:
        sc.transactions.append(Transaction(sender, to[0] if to else TARGET, value, data, GAS))
        sc.labels.append(label)
    return sc


def _fixture(name, ctor, runtime_asm, vuln, opcode, txs, accounts=None, description="",
             expected_type=None, deploy_value=0, payable_ctor=False):
    code, runtime, labels = build_contract(ctor, runtime_asm, name, payable_ctor)
    bugs = [BugEntry(labels["bug"], opcode, vuln)]
    sc = _scenario(txs, accounts, deploy_value)
    return Fixture(name, code, runtime, bugs, sc, labels, expected_type, description)


# Balances bank shared by the two reentrancy fixtures.
_BANK_FUNCTIONS = [("deposit()", "deposit"), ("withdrawBalance()", "withdraw"),
                   ("userBalances(address)", "balance_of")]

_BANK_BODY = f"""
deposit:
    @deposit_ret CALLVALUE CALLER @deposit_body JUMP
deposit_ret: STOP
withdraw:
    {nonpayable("withdraw")}
    @withdraw_ret @withdraw_body JUMP
withdraw_ret: STOP
balance_of:
    {nonpayable("balance_of")}
    PUSH1 0x04 CALLDATALOAD {mapping_key(0)} SLOAD {RETURN_WORD}
deposit_body:
    {mapping_key(0)}
    DUP1 SLOAD DUP3 ADD SWAP1 SSTORE POP JUMP
withdraw_body:
    CALLER {mapping_key(0)}
    DUP1 SLOAD
    PUSH1 0x00 PUSH1 0x80 PUSH1 0x00 PUSH1 0x80 DUP5 CALLER GAS =bug CALL
    POP POP
    PUSH1 0x00 SWAP1 SSTORE JUMP
"""


def reentrancy_same():
    runtime = dispatcher(_BANK_FUNCTIONS) + _BANK_BODY
    attacker = f"""
        CALLDATASIZE ISZERO @receive JUMPI
        {call_target("deposit()", "CALLVALUE")} ISZERO @fail JUMPI
        {call_target("withdrawBalance()")} POP
        CALLVALUE SELFBALANCE GT ISZERO @fail JUMPI STOP
    fail: {REVERT0}
    receive:
        PUSH1 0x00 SLOAD PUSH1 0x02 GT ISZERO @done JUMPI
        PUSH1 0x00 SLOAD PUSH1 0x01 ADD PUSH1 0x00 SSTORE
        {call_target("withdrawBalance()")} ISZERO @fail JUMPI
    done: STOP
    """
    accounts = _eoas(AccountSpec(ATTACKER, 0, assemble_source(attacker)[0]))
    txs = [
        (ALICE, calldata("deposit()"), 5 * ETHER, "benign"),
        (BOB, calldata("deposit()"), 2 * ETHER, "benign"),
        (BOB, calldata("withdrawBalance()"), 0, "benign"),
        (ALICE, calldata("userBalances(address)", ALICE), 0, "benign"),
        (MALLORY, calldata("attack()"), 1 * ETHER, "attack", ATTACKER),
    ]
    return _fixture("reentrancy_same", "", runtime, "reentrancy", "CALL", txs, accounts,
                    "withdrawBalance sends before zeroing the balance")


def reentrancy_cross():
    functions = _BANK_FUNCTIONS + [("transfer(address,uint256)", "transfer")]
    runtime = dispatcher(functions) + _BANK_BODY + f"""
transfer:
    {nonpayable("transfer")}
    PUSH1 0x24 CALLDATALOAD
    CALLER {mapping_key(0)}
    DUP1 SLOAD
    DUP3 DUP2 LT @transfer_fail JUMPI
    DUP3 SWAP1 SUB SWAP1 SSTORE
    PUSH1 0x04 CALLDATALOAD {mapping_key(0)}
    DUP1 SLOAD DUP3 ADD SWAP1 SSTORE POP STOP
transfer_fail: {REVERT0}
"""
    attacker = f"""
        CALLDATASIZE ISZERO @receive JUMPI
        {call_target("deposit()", "CALLVALUE")} ISZERO @fail JUMPI
        {call_target("withdrawBalance()")} POP
        PUSH1 0x00 SLOAD ISZERO @fail JUMPI STOP
    fail: {REVERT0}
    receive:
        {call_target("transfer(address,uint256)", args=(f"PUSH2 {ACCOMPLICE:#x}", "CALLVALUE"))}
        ISZERO @fail JUMPI
        PUSH1 0x01 PUSH1 0x00 SSTORE STOP
    """
    accounts = _eoas(AccountSpec(ATTACKER, 0, assemble_source(attacker)[0]))
    txs = [
        (ALICE, calldata("deposit()"), 3 * ETHER, "benign"),
        (ALICE, calldata("transfer(address,uint256)", BOB, ETHER), 0, "benign"),
        (BOB, calldata("withdrawBalance()"), 0, "benign"),
        (BOB, calldata("userBalances(address)", ALICE), 0, "benign"),
        (MALLORY, calldata("attack()"), 1 * ETHER, "attack", ATTACKER),
    ]
    return _fixture("reentrancy_cross", "", runtime, "reentrancy", "CALL", txs, accounts,
                    "the attacker re-enters transfer() while its balance is still set")


def tx_origin():
    runtime = dispatcher([("withdraw(address)", "withdraw"), ("owner()", "owner")],
                         fallback="STOP") + f"""
withdraw:
    {nonpayable("withdraw")}
    PUSH1 0x00 SLOAD {MASK20} AND =bug ORIGIN {MASK20} AND EQ ISZERO @withdraw_fail JUMPI
    PUSH1 0x04 CALLDATALOAD {MASK20} AND
    SELFBALANCE
    PUSH1 0x00 PUSH1 0x80 PUSH1 0x00 PUSH1 0x80 DUP5 DUP7 DUP2 ISZERO PUSH2 0x08fc MUL CALL
    ISZERO @withdraw_fail JUMPI POP POP STOP
withdraw_fail: {REVERT0}
owner:
    {nonpayable("owner")}
    PUSH1 0x00 SLOAD {MASK20} AND {RETURN_WORD}
"""
    phisher = f"""
        {call_target("withdraw(address)", args=(f"PUSH2 {HELPER:#x}",))}
        ISZERO @fail JUMPI STOP
    fail: {REVERT0}
    """
    accounts = _eoas(AccountSpec(ATTACKER, 0, assemble_source(phisher)[0]))
    txs = [
        (ALICE, b"", 3 * ETHER, "benign"),
        (DEPLOYER, calldata("withdraw(address)", DEPLOYER), 0, "benign"),
        (MALLORY, calldata("withdraw(address)", MALLORY), 0, "benign"),
        (BOB, b"", 2 * ETHER, "benign"),
        (BOB, calldata("owner()"), 0, "benign"),
        (DEPLOYER, calldata("claimAirdrop()"), 0, "attack", ATTACKER),
    ]
    return _fixture("tx_origin", owner_ctor(0), runtime, "tx_origin", "ORIGIN", txs,
                    accounts, "authorisation through tx.origin lets a phishing contract "
                    "act for the owner")


_VALUE_STORE = f"""
set:
    {nonpayable("set")}
    PUSH1 0x04 CALLDATALOAD PUSH1 0x00 SSTORE STOP
get:
    {nonpayable("get")}
    PUSH1 0x00 SLOAD {RETURN_WORD}
"""


def suicidal():
    runtime = dispatcher([("set(uint256)", "set"), ("get()", "get"),
                          ("kill()", "kill")]) + _VALUE_STORE + f"""
kill:
    {nonpayable("kill")}
    CALLER {MASK20} AND =bug SELFDESTRUCT
"""
    txs = [
        (ALICE, calldata("set(uint256)", 5), 0, "benign"),
        (BOB, calldata("get()"), 0, "benign"),
        (BOB, calldata("set(uint256)", 9), 0, "benign"),
        (MALLORY, calldata("kill()"), 0, "attack"),
    ]
    return _fixture("suicidal", "PUSH1 0x07 PUSH1 0x00 SSTORE", runtime, "suicidal",
                    "SELFDESTRUCT", txs, description="kill() has no owner check and the "
                    "contract has no owner variable", deploy_value=ETHER,
                    payable_ctor=True)


def leaking():
    runtime = dispatcher([("withdrawAll()", "withdraw"), ("owner()", "owner")],
                         fallback="STOP") + f"""
withdraw:
    {nonpayable("withdraw")}
    SELFBALANCE CALLER
    PUSH1 0x00 PUSH1 0x80 PUSH1 0x00 PUSH1 0x80 DUP6 DUP6 DUP2 ISZERO PUSH2 0x08fc MUL =bug CALL
    ISZERO @withdraw_fail JUMPI POP POP STOP
withdraw_fail: {REVERT0}
owner:
    {nonpayable("owner")}
    PUSH1 0x00 SLOAD {MASK20} AND {RETURN_WORD}
"""
    txs = [
        (ALICE, b"", 2 * ETHER, "benign"),
        (DEPLOYER, calldata("withdrawAll()"), 0, "benign"),
        (BOB, b"", 1 * ETHER, "benign"),
        (BOB, calldata("owner()"), 0, "benign"),
        (MALLORY, calldata("withdrawAll()"), 0, "attack"),
    ]
    return _fixture("leaking", owner_ctor(0), runtime, "leaking", "CALL", txs,
                    description="withdrawAll() pays any caller; the constructor already "
                    "records an owner")


def unsafe_delegatecall():
    runtime = dispatcher([("execute(address)", "execute"), ("version()", "version")]) + f"""
execute:
    {nonpayable("execute")}
    PUSH1 0x04 CALLDATALOAD {MASK20} AND
    PUSH1 0x00 PUSH1 0x80 PUSH1 0x00 PUSH1 0x80 DUP5 GAS =bug DELEGATECALL
    POP POP STOP
version:
    {nonpayable("version")}
    PUSH1 0x00 SLOAD {RETURN_WORD}
"""
    good = assemble_source("PUSH1 0x2a PUSH1 0x00 SSTORE STOP")[0]
    evil = assemble_source("CALLER PUSH1 0x00 SSTORE STOP")[0]
    accounts = _eoas(AccountSpec(HELPER, 0, good), AccountSpec(ATTACKER, 0, evil))
    txs = [
        (DEPLOYER, calldata("execute(address)", HELPER), 0, "benign"),
        (BOB, calldata("version()"), 0, "benign"),
        (ALICE, calldata("version()"), 0, "benign"),
        (MALLORY, calldata("execute(address)", ATTACKER), 0, "attack"),
    ]
    return _fixture("unsafe_delegatecall", "PUSH1 0x01 PUSH1 0x00 SSTORE", runtime,
                    "unsafe_delegatecall", "DELEGATECALL", txs, accounts,
                    "anyone may delegatecall into an arbitrary library")


def _token_counter(name, width, signed, pad=""):
    """``mapping(address => [u]int<width>)`` with an unchecked ``+=``."""
    mask = f"PUSH{width // 8} {(1 << width) - 1:#x}"
    if signed:
        narrow = f"PUSH1 {width // 8 - 1:#x} SIGNEXTEND"
    else:
        narrow = f"{mask} AND"
    sig = f"buy({'int' if signed else 'uint'}{width})"
    getter = "tokens(address)"
    runtime = dispatcher([(sig, "buy"), (getter, "tokens")]) + f"""
buy:
    {nonpayable("buy")}
    @buy_ret PUSH1 0x04 CALLDATALOAD {narrow} @buy_body JUMP
buy_ret: STOP
buy_body:
    {pad}
    CALLER {mapping_key(0)}
    DUP1 SLOAD {narrow}
    DUP3 =bug ADD {mask} AND SWAP1 SSTORE POP JUMP
tokens:
    {nonpayable("tokens")}
    PUSH1 0x04 CALLDATALOAD {mapping_key(0)} SLOAD {narrow} {RETURN_WORD}
"""
    top = (1 << (width - 1)) - 1 if signed else (1 << width) - 1
    txs = [
        (ALICE, calldata(sig, 10), 0, "benign"),
        (BOB, calldata(sig, top), 0, "benign"),
        (BOB, calldata(getter, ALICE), 0, "benign"),
        (ALICE, calldata(sig, top), 0, "attack"),
    ]
    return _fixture(name, "", runtime, "overflow_add", "ADD", txs,
                    description=f"unchecked += on a {'' if signed else 'u'}int{width} balance",
                    expected_type=IntegerType(width, signed))


def overflow_uint32():
    return _token_counter("overflow_uint32", 32, False)


def overflow_int32():
    return _token_counter("overflow_int32", 32, True)


UINT16_ANCHOR = 0xA5


def _padding(n):
    """``n`` (at least 2) bytes of stack-neutral filler."""
    out = []
    while n:
        piece = n if n <= 34 else (34 if n - 34 >= 2 else 33)
        out.append("GAS POP" if piece == 2 else f"PUSH{piece - 2} 0x00 POP")
        n -= piece
    return " ".join(out)


def overflow_uint16():
    """uint16 counter whose ADD sits at runtime offset 0xa5."""
    probe = _token_counter("overflow_uint16", 16, False)
    missing = UINT16_ANCHOR - probe.bug_pc
    if missing < 2:
        raise AssertionError(f"fixture too long for the 0xa5 anchor ({probe.bug_pc:#x})")
    fx = _token_counter("overflow_uint16", 16, False, pad=_padding(missing))
    assert fx.bug_pc == UINT16_ANCHOR, hex(fx.bug_pc)
    fx.description = "uint16 add at 0xa5 for the 16-byte relocation example"
    return fx


def overflow_mul():
    runtime = dispatcher([("order(uint256)", "order"), ("total()", "total")]) + f"""
order:
    {nonpayable("order")}
    PUSH1 0x04 CALLDATALOAD PUSH1 0x00 SLOAD =bug MUL
    DUP1 PUSH1 0x01 SSTORE {RETURN_WORD}
total:
    {nonpayable("total")}
    PUSH1 0x01 SLOAD {RETURN_WORD}
"""
    txs = [
        (ALICE, calldata("order(uint256)", 3), 0, "benign"),
        (BOB, calldata("order(uint256)", 0), 0, "benign"),
        (BOB, calldata("total()"), 0, "benign"),
        (MALLORY, calldata("order(uint256)", 1 << 255), 0, "attack"),
    ]
    return _fixture("overflow_mul", "PUSH2 0x03e8 PUSH1 0x00 SSTORE", runtime,
                    "overflow_mul", "MUL", txs, description="unchecked quantity * price",
                    expected_type=IntegerType(256, False))


def underflow_sub():
    runtime = dispatcher([("transfer(address,uint256)", "transfer"),
                          ("balanceOf(address)", "balance_of")]) + f"""
transfer:
    {nonpayable("transfer")}
    PUSH1 0x24 CALLDATALOAD
    CALLER {mapping_key(0)}
    DUP1 SLOAD DUP3 SWAP1 =bug SUB SWAP1 SSTORE
    PUSH1 0x04 CALLDATALOAD {mapping_key(0)}
    DUP1 SLOAD DUP3 ADD SWAP1 SSTORE POP STOP
balance_of:
    {nonpayable("balance_of")}
    PUSH1 0x04 CALLDATALOAD {mapping_key(0)} SLOAD {RETURN_WORD}
"""
    ctor = f"PUSH2 0x03e8 CALLER {mapping_key(0)} SSTORE"
    txs = [
        (DEPLOYER, calldata("transfer(address,uint256)", ALICE, 100), 0, "benign"),
        (ALICE, calldata("transfer(address,uint256)", BOB, 30), 0, "benign"),
        (BOB, calldata("balanceOf(address)", ALICE), 0, "benign"),
        (MALLORY, calldata("transfer(address,uint256)", BOB, 1), 0, "attack"),
    ]
    return _fixture("underflow_sub", ctor, runtime, "underflow_sub", "SUB", txs,
                    description="transfer() subtracts without a balance check")


def unhandled_exception():
    runtime = dispatcher([("setWinner(address)", "set_winner"),
                          ("claimPrize()", "claim"), ("prize()", "prize")],
                         fallback="STOP") + f"""
set_winner:
    {nonpayable("set_winner")}
    PUSH1 0x04 CALLDATALOAD {MASK20} AND PUSH1 0x01 SSTORE STOP
claim:
    {nonpayable("claim")}
    PUSH1 0x02 SLOAD PUSH1 0xff AND ISZERO ISZERO @claim_fail JUMPI
    PUSH1 0x01 SLOAD {MASK20} AND CALLER {MASK20} AND EQ ISZERO @claim_fail JUMPI
    PUSH1 0x00 SLOAD
    PUSH1 0x00 PUSH1 0x80 PUSH1 0x00 PUSH1 0x80 DUP5 CALLER DUP7 ISZERO PUSH2 0x08fc MUL =bug CALL
    POP POP
    PUSH1 0x02 SLOAD PUSH1 0xff NOT AND PUSH1 0x01 OR PUSH1 0x02 SSTORE STOP
claim_fail: {REVERT0}
prize:
    {nonpayable("prize")}
    PUSH1 0x00 SLOAD {RETURN_WORD}
"""
    winner = f"""
        CALLDATASIZE ISZERO @reject JUMPI
        {call_target("claimPrize()")} ISZERO @reject JUMPI STOP
    reject: {REVERT0}
    """
    accounts = _eoas(AccountSpec(ATTACKER, 0, assemble_source(winner)[0]))
    ctor = f"PUSH2 0x03e8 PUSH1 0x00 SSTORE {owner_ctor(1)}"
    txs = [
        (ALICE, calldata("claimPrize()"), 0, "benign"),
        (DEPLOYER, calldata("setWinner(address)", ATTACKER), 0, "benign"),
        (BOB, calldata("prize()"), 0, "benign"),
        (BOB, b"", ETHER, "benign"),
        (MALLORY, calldata("claim()"), 0, "attack", ATTACKER),
    ]
    return _fixture("unhandled_exception", ctor, runtime, "unhandled_exception", "CALL",
                    txs, accounts, "claimPrize() ignores a failed send and marks the "
                    "prize claimed", deploy_value=2000, payable_ctor=True)


TRACE_MASK, TRACE_AND, TRACE_ADD = 0x9C, 0xA1, 0xA6


def mask_trace_runtime():
    """Runtime whose mask PUSH4 sits at 0x9c, its AND at 0xa1 and the
    doubling ADD at 0xa6; returns ``(code, labels)``."""
    head = dispatcher([("double(uint32)", "double")]) + f"""
double:
    {nonpayable("double")}
    PUSH1 0x04 CALLDATALOAD
"""
    tail = """
    =mask PUSH4 0xffffffff =and AND
    DUP1 DUP1 POP SWAP1 =bug ADD
    PUSH4 0xffffffff AND PUSH1 0x00 SSTORE STOP
"""
    _, probe = assemble_source(head + tail)
    code, labels = assemble_source(head + _padding(TRACE_MASK - probe["mask"]) + tail)
    assert (labels["mask"], labels["and"], labels["bug"]) == (TRACE_MASK, TRACE_AND, TRACE_ADD)
    return code, labels


BUILDERS = {
    "reentrancy_same": reentrancy_same,
    "reentrancy_cross": reentrancy_cross,
    "tx_origin": tx_origin,
    "suicidal": suicidal,
    "leaking": leaking,
    "unsafe_delegatecall": unsafe_delegatecall,
    "overflow_uint32": overflow_uint32,
    "overflow_int32": overflow_int32,
    "overflow_uint16": overflow_uint16,
    "overflow_mul": overflow_mul,
    "underflow_sub": underflow_sub,
    "unhandled_exception": unhandled_exception,
}


def fixture(name):
    return BUILDERS[name]()


def all_fixtures():
    return [build() for build in BUILDERS.values()]
