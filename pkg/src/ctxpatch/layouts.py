"""Storage-layout fixtures: declarations, Solidity packing rules, and contracts
whose code touches every declared variable.

``solidity_layout`` applies the compiler's rules for statically sized state
variables: variables are laid out in declaration order starting at slot 0,
value types share a slot while they fit in its 32 bytes (lower-order bytes
first), and mappings always start a fresh slot and occupy it alone.
"""

import re
from dataclasses import dataclass
from typing import List

from .corpus import (RETURN_WORD, build_contract, dispatcher, mapping_key, nonpayable)

_INT = re.compile(r"^u?int(\d+)$")
_BYTES = re.compile(r"^bytes(\d+)$")


def type_size(typ):
    """Byte size of a statically sized value type; mappings report 32."""
    if typ.startswith("mapping"):
        return 32
    if typ in ("address", "address payable"):
        return 20
    if typ == "bool":
        return 1
    m = _INT.match(typ)
    if m:
        return int(m.group(1)) // 8
    m = _BYTES.match(typ)
    if m:
        return int(m.group(1))
    raise ValueError(f"unsupported type {typ!r}")


@dataclass(frozen=True)
class Variable:
    name: str
    type: str
    slot: int
    offset: int

    @property
    def size(self):
        return type_size(self.type)

    @property
    def is_mapping(self):
        return self.type.startswith("mapping")


def solidity_layout(decls):
    """``[(type, name)]`` → list of :class:`Variable` with slot and byte offset."""
    out = []
    slot = offset = 0
    for typ, name in decls:
        size = type_size(typ)
        whole = typ.startswith("mapping")
        if offset and (whole or offset + size > 32):
            slot, offset = slot + 1, 0
        out.append(Variable(name, typ, slot, offset))
        if whole:
            slot, offset = slot + 1, 0
        else:
            offset += size
    return out


def _mask(size):
    return (1 << (8 * size)) - 1


def _getter(v):
    if v.is_mapping:
        return f"PUSH1 0x04 CALLDATALOAD {mapping_key(v.slot)} SLOAD {RETURN_WORD}"
    code = f"PUSH1 {v.slot:#x} SLOAD"
    if v.offset:
        code += f" PUSH {256 ** v.offset:#x} SWAP1 DIV"
    code += f" PUSH {_mask(v.size):#x} AND"
    if v.type.startswith("int"):
        code += f" PUSH1 {v.size - 1:#x} SIGNEXTEND"
    return f"{code} {RETURN_WORD}"


def _setter(v):
    if v.is_mapping:
        return (f"PUSH1 0x24 CALLDATALOAD PUSH1 0x04 CALLDATALOAD {mapping_key(v.slot)} "
                "SSTORE STOP")
    shift = 256 ** v.offset
    return (f"PUSH1 0x04 CALLDATALOAD PUSH1 {v.slot:#x} SLOAD "
            f"PUSH {_mask(v.size) * shift:#x} NOT AND SWAP1 PUSH {_mask(v.size):#x} AND "
            f"PUSH {shift:#x} MUL OR PUSH1 {v.slot:#x} SSTORE STOP")


@dataclass
class LayoutFixture:
    name: str
    decls: List[tuple]
    code: bytes
    runtime: bytes
    variables: List[Variable]

    @property
    def slots(self):
        return {v.slot for v in self.variables}

    @property
    def next_free(self):
        return max(self.slots) + 1

    def source(self):
        body = "\n".join(f"    {t} {n};" for t, n in self.decls)
        return f"contract {self.name} {{\n{body}\n}}"


def build_layout_fixture(name, decls, init=()):
    """Contract with a getter and setter per variable; ``init`` names value
    variables the constructor sets to 1."""
    variables = solidity_layout(decls)
    funcs, bodies = [], []
    for i, v in enumerate(variables):
        arg = "address" if v.is_mapping else ""
        funcs.append((f"{v.name}({arg})", f"get{i}"))
        bodies.append(f"get{i}: {nonpayable(f'get{i}')} {_getter(v)}")
        sig = f"set_{v.name}(address,uint256)" if v.is_mapping else f"set_{v.name}(uint256)"
        funcs.append((sig, f"set{i}"))
        bodies.append(f"set{i}: {nonpayable(f'set{i}')} {_setter(v)}")
    runtime_asm = dispatcher(funcs) + "\n" + "\n".join(bodies)
    ctor = []
    for v in variables:
        if v.name in init and not v.is_mapping:
            shift = 256 ** v.offset
            ctor.append(f"PUSH1 {v.slot:#x} SLOAD PUSH {_mask(v.size) * shift:#x} NOT AND "
                        f"PUSH {shift:#x} OR PUSH1 {v.slot:#x} SSTORE")
    code, runtime, _ = build_contract(" ".join(ctor), runtime_asm, name)
    return LayoutFixture(name, list(decls), code, runtime, variables)


LAYOUT_DECLS = {
    "Token": ([("address", "owner"), ("uint256", "totalSupply"),
               ("mapping(address => uint256)", "balances"), ("uint8", "decimals")],
              ("totalSupply", "decimals")),
    "Packed": ([("uint128", "a"), ("uint128", "b"), ("uint64", "c"), ("bool", "d"),
                ("address", "e")], ("a", "e")),
    "Flags": ([("bool", "paused"), ("bool", "locked"), ("uint8", "level"),
               ("address", "admin"), ("uint256", "fee")], ("paused",)),
    "Registry": ([("mapping(address => uint256)", "ids"),
                  ("mapping(address => bool)", "known"), ("uint32", "count")], ()),
    "Auction": ([("address", "seller"), ("uint64", "end"), ("uint256", "highest"),
                 ("address", "bidder"), ("bool", "ended"),
                 ("mapping(address => uint256)", "refunds")], ("end",)),
    "Wide": ([("bytes32", "root"), ("uint256", "x"), ("int256", "y"), ("bytes32", "salt")],
             ("x",)),
    "Signed": ([("int8", "a"), ("int16", "b"), ("int32", "c"), ("int64", "d"),
                ("int128", "e"), ("int256", "f")], ("c",)),
    "Mixed": ([("uint16", "u16"), ("mapping(address => uint256)", "m"), ("uint16", "v16"),
               ("bytes4", "tag"), ("uint256", "big"), ("bool", "flag")], ("u16", "flag")),
    "Vault": ([("address", "guardian"), ("address", "beneficiary"), ("uint96", "cap"),
               ("uint256", "released"), ("mapping(address => uint256)", "shares"),
               ("uint40", "start"), ("uint40", "duration")], ("cap", "start")),
    "Counter": ([("uint256", "count"), ("address", "lastCaller"), ("uint32", "calls"),
                 ("uint32", "resets"), ("bytes20", "note"), ("uint8", "version")],
                ("version",)),
    "Lottery": ([("mapping(address => uint256)", "tickets"), ("address", "winner"),
                 ("uint256", "pot"), ("bool", "drawn"), ("uint64", "round")], ()),
}


def layout_fixtures():
    return [build_layout_fixture(name, decls, init)
            for name, (decls, init) in LAYOUT_DECLS.items()]
