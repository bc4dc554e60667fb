"""A two-pass assembler with labels, for writing contracts by hand.

Syntax, one token per whitespace-separated word (``;`` starts a comment)::

    start:          JUMPDEST marked with label ``start``
    =here           a label that emits nothing (marks an address)
    @start          PUSH2 of the label's address
    PUSH1 0x40      explicit push; ``PUSH 0x1234`` picks the minimal width
    PUSH4 @start    push of a label with an explicit width
    .bytes 0xdead   raw bytes
    ADD, SSTORE     any mnemonic

Labels may be used before they are defined.
"""

from .asm import make
from .errors import AssemblyError
from .opcodes import minimal_width, push_for_width

LABEL_PUSH_WIDTH = 2


def _tokens(text):
    for line in text.splitlines():
        line = line.split(";", 1)[0]
        yield from line.split()


def _value(tok):
    try:
        return int(tok, 0)
    except ValueError:
        raise AssemblyError(f"bad number {tok!r}") from None


def _parse(text):
    """List of items: ("label", name, jumpdest?), ("push", width, value|label),
    ("op", mnemonic), ("bytes", data)."""
    items = []
    toks = list(_tokens(text))
    i = 0
    while i < len(toks):
        tok = toks[i]
        up = tok.upper()
        if tok.endswith(":"):
            items.append(("label", tok[:-1], True))
        elif tok.startswith("="):
            items.append(("label", tok[1:], False))
        elif tok.startswith("@"):
            items.append(("push", LABEL_PUSH_WIDTH, tok[1:]))
        elif tok == ".bytes":
            raw = toks[i + 1]
            items.append(("bytes", bytes.fromhex(raw[2:] if raw.startswith("0x") else raw)))
            i += 1
        elif up.startswith("PUSH"):
            if i + 1 >= len(toks):
                raise AssemblyError(f"{tok} needs an operand")
            arg = toks[i + 1]
            width = int(up[4:]) if up[4:] else None
            if arg.startswith("@"):
                items.append(("push", width or LABEL_PUSH_WIDTH, arg[1:]))
            else:
                v = _value(arg)
                items.append(("push", width or minimal_width(v), v))
            i += 1
        else:
            items.append(("op", up))
        i += 1
    return items


def _size(item):
    kind = item[0]
    if kind == "label":
        return 1 if item[2] else 0
    if kind == "push":
        return 1 + item[1]
    if kind == "bytes":
        return len(item[1])
    return 1


def assemble_source(text):
    """Assemble ``text``; returns ``(code, labels)``."""
    items = _parse(text)
    labels = {}
    pc = 0
    for item in items:
        if item[0] == "label":
            if item[1] in labels:
                raise AssemblyError(f"label {item[1]!r} defined twice")
            labels[item[1]] = pc
        pc += _size(item)
    out = bytearray()
    for item in items:
        kind = item[0]
        if kind == "label":
            if item[2]:
                out.append(0x5B)
        elif kind == "push":
            width, v = item[1], item[2]
            if isinstance(v, str):
                if v not in labels:
                    raise AssemblyError(f"undefined label {v!r}")
                v = labels[v]
            if v >= 1 << (8 * width):
                raise AssemblyError(f"{v:#x} does not fit PUSH{width}")
            out.append(push_for_width(width).byte_value)
            out += v.to_bytes(width, "big")
        elif kind == "bytes":
            out += item[1]
        else:
            out += make(item[1]).to_bytes()
    return bytes(out), labels


def assemble_labels(text):
    return assemble_source(text)[0]
