"""Disassembly, assembly and anatomy splitting of raw EVM bytecode."""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .errors import AnatomyError, AssemblyError
from .opcodes import OPCODES, Opcode, by_mnemonic, minimal_width, push_for_width


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    immediate: bytes = b""
    original_address: Optional[int] = None
    shadow_address: Optional[int] = None
    truncated: bool = False
    # Symbolic jump labels used by instantiated patches: ``label`` marks a
    # JUMPDEST as a target, ``target_label`` marks a PUSH that must point at it.
    label: Optional[str] = None
    target_label: Optional[str] = None
    # Set on instructions inserted by a patch (the bug id that produced them).
    tag: Optional[str] = None
    # Tombstone left where a patch deleted this instruction: it occupies no
    # bytes but keeps its original address for the relocation map.
    deleted: bool = False

    @property
    def mnemonic(self):
        return self.opcode.mnemonic

    @property
    def size(self):
        return 0 if self.deleted else 1 + len(self.immediate)

    @property
    def value(self):
        """Integer value of the immediate (PUSH only), else None."""
        if not self.opcode.is_push:
            return None
        return int.from_bytes(self.immediate, "big") if self.immediate else 0

    @property
    def address(self):
        return self.original_address

    def to_bytes(self):
        if self.deleted:
            return b""
        return bytes([self.opcode.byte_value]) + self.immediate

    def with_value(self, value, width=None):
        """Copy of a PUSH with a new value; ``width`` defaults to the current one."""
        width = width or self.opcode.immediate_width
        return replace(self, opcode=push_for_width(width),
                       immediate=value.to_bytes(width, "big"), truncated=False)

    def __str__(self):
        text = self.mnemonic
        if self.target_label is not None:
            text += f" @{self.target_label}"
        elif self.immediate:
            text += " 0x" + self.immediate.hex()
        if self.label is not None:
            text += f" [{self.label}]"
        return text


def make(mnemonic, value=None, width=None, **kwargs):
    """Build a fresh instruction from a mnemonic.

    ``make("PUSH", 0x1234)`` picks the minimal PUSH width.
    """
    name = mnemonic.upper()
    if name == "PUSH":
        width = width or minimal_width(value or 0)
        op = push_for_width(width)
    else:
        op = by_mnemonic(name)
    if op.is_push:
        value = 0 if value is None else value
        if value >= 1 << (8 * op.immediate_width):
            raise AssemblyError(f"{value:#x} does not fit {op.mnemonic}")
        return Instruction(op, value.to_bytes(op.immediate_width, "big"), **kwargs)
    if value is not None:
        raise AssemblyError(f"{op.mnemonic} takes no immediate")
    return Instruction(op, **kwargs)


def disassemble(code, start=0):
    """Decode ``code`` into instructions covering every byte.

    Unknown bytes decode as single-byte unassigned instructions. A PUSH whose
    immediate runs past the end keeps the bytes that exist and is flagged
    ``truncated``.
    """
    code = bytes(code)
    out = []
    pc = 0
    n = len(code)
    while pc < n:
        op = OPCODES[code[pc]]
        width = op.immediate_width
        imm = code[pc + 1 : pc + 1 + width]
        addr = start + pc
        out.append(Instruction(op, imm, addr, addr, truncated=len(imm) < width))
        pc += 1 + width
    return out


def assemble(instrs):
    """Serialize instructions in list order; addresses are ignored."""
    chunks = []
    for i, ins in enumerate(instrs):
        width = ins.opcode.immediate_width
        if ins.deleted:
            continue
        if len(ins.immediate) != width and not (ins.truncated and i == len(instrs) - 1):
            raise AssemblyError(
                f"instruction {i} ({ins.mnemonic}) has {len(ins.immediate)}-byte "
                f"immediate, expected {width}"
            )
        chunks.append(ins.to_bytes())
    return b"".join(chunks)


def relocate(instrs, start=0):
    """Recompute sequential original/shadow addresses from ``start``."""
    out = []
    pc = start
    for ins in instrs:
        out.append(replace(ins, original_address=pc, shadow_address=pc))
        pc += ins.size
    return out


def assemble_text(text):
    """Assemble whitespace-separated mnemonics, e.g. ``"PUSH1 0x01 PUSH1 2 ADD"``.

    Bare ``PUSH <n>`` selects the minimal width. Handy for fixtures and tests.
    """
    tokens = text.split()
    instrs = []
    i = 0
    while i < len(tokens):
        tok = tokens[i].upper()
        if tok.startswith("PUSH"):
            value = int(tokens[i + 1], 0)
            width = int(tok[4:]) if tok[4:] else None
            instrs.append(make("PUSH", value, width=width))
            i += 2
        else:
            instrs.append(make(tok))
            i += 1
    return assemble(instrs)


@dataclass(frozen=True)
class BytecodeAnatomy:
    deployment: bytes = b""
    runtime: bytes = b""
    metadata: bytes = b""
    constructor_args: bytes = b""
    # Offsets into the original input; handy when rewriting the deploy stub.
    runtime_offset: int = 0
    copy_length: int = 0

    @property
    def has_deployment(self):
        return bool(self.deployment)

    def concat(self):
        return self.deployment + self.runtime + self.metadata + self.constructor_args


def metadata_length(blob):
    """Length of a trailing CBOR metadata section including its 2-byte suffix.

    Returns 0 when the suffix is implausible (larger than the blob or not
    pointing at a CBOR map header).
    """
    if len(blob) < 2:
        return 0
    declared = int.from_bytes(blob[-2:], "big")
    total = declared + 2
    if declared == 0 or total > len(blob):
        return 0
    head = blob[-total]
    if not 0xA0 <= head <= 0xB7:
        return 0
    return total


def find_codecopy_stub(instrs):
    """Index of the first ``PUSH DUP1 PUSH PUSH CODECOPY`` that is followed
    (eventually) by a RETURN, or None."""
    names = [ins.mnemonic for ins in instrs]
    for i in range(len(instrs) - 4):
        if (
            instrs[i].opcode.is_push
            and names[i + 1] == "DUP1"
            and instrs[i + 2].opcode.is_push
            and instrs[i + 3].opcode.is_push
            and names[i + 4] == "CODECOPY"
            and "RETURN" in names[i + 5 :]
        ):
            return i
    return None


def split_anatomy(code):
    """Split contract bytes into deployment, runtime, metadata and
    constructor-argument regions."""
    code = bytes(code)
    instrs = disassemble(code)
    idx = find_codecopy_stub(instrs)
    # A stub copying from offset 0 copies itself; that is not a deploy stub.
    if idx is not None and instrs[idx + 2].value == 0:
        idx = None
    if idx is None:
        meta = metadata_length(code)
        cut = len(code) - meta
        return BytecodeAnatomy(b"", code[:cut], code[cut:], b"", 0, len(code))
    length = instrs[idx].value
    offset = instrs[idx + 2].value
    if offset + length > len(code):
        raise AnatomyError(
            f"CODECOPY stub at {instrs[idx].original_address:#x} copies "
            f"[{offset:#x}, {offset + length:#x}) but input is {len(code):#x} bytes"
        )
    deployed = code[offset : offset + length]
    meta = metadata_length(deployed)
    return BytecodeAnatomy(
        deployment=code[:offset],
        runtime=deployed[: length - meta],
        metadata=deployed[length - meta :],
        constructor_args=code[offset + length :],
        runtime_offset=offset,
        copy_length=length,
    )


def parse_hex(text):
    text = text.strip()
    if text[:2].lower() == "0x":
        text = text[2:]
    return bytes.fromhex(text)


def read_bytecode(path):
    """Read a bytecode file: hex text (optional 0x, surrounding whitespace) or
    raw binary when the file is not valid hex."""
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8").strip()
        if text[:2].lower() == "0x":
            text = text[2:]
        if len(text) % 2 == 0 and all(c in "0123456789abcdefABCDEF" for c in text):
            return bytes.fromhex(text)
    except UnicodeDecodeError:
        pass
    return raw


def write_bytecode(path, code):
    Path(path).write_text("0x" + bytes(code).hex() + "\n")
