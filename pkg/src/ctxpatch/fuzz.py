"""Random well-formed contracts for property tests.

Programs are lists of basic blocks.  Plain blocks start and end with an empty
stack; "subroutine" blocks are entered with a return label on the stack and
leave through ``JUMP``, like solc's internal functions.  Vulnerable-looking
opcodes are tagged so callers can build bug reports against them.
"""

import random
from dataclasses import dataclass, field
from typing import List

from .corpus import build_contract, metadata, owner_ctor
from .lasm import assemble_source
from .reports import BugEntry

_PRODUCERS = ["CALLER", "CALLVALUE", "GAS", "CALLDATASIZE", "ADDRESS", "SELFBALANCE"]
_UNARY = ["ISZERO", "NOT", "CALLDATALOAD", "SLOAD"]
_BINARY = ["DIV", "LT", "GT", "EQ", "AND", "OR", "XOR", "SHR", "SHL"]
_ARITH = {"ADD": "overflow_add", "MUL": "overflow_mul", "SUB": "underflow_sub"}


@dataclass
class FuzzContract:
    code: bytes
    runtime: bytes
    candidates: List[BugEntry] = field(default_factory=list)
    source: str = ""


class _Gen:
    def __init__(self, rng, n_blocks):
        self.rng = rng
        self.n = n_blocks
        self.bugs = []  # (marker, opcode, vulnerability)
        self.subs = {i for i in range(2, n_blocks) if rng.random() < 0.2}

    def marker(self, opcode, vuln):
        name = f"v{len(self.bugs)}"
        self.bugs.append((name, opcode, vuln))
        return f"={name} {opcode}"

    def push(self):
        r = self.rng
        width = r.choice([1, 1, 1, 2, 4, 20, 32])
        return f"PUSH{width} {r.getrandbits(8 * width):#x}"

    def body(self, floor):
        r = self.rng
        out, depth = [], floor
        for _ in range(r.randint(0, 12)):
            above = depth - floor
            k = r.random()
            if above == 0 or k < 0.25:
                out.append(self.push() if r.random() < 0.6 else r.choice(_PRODUCERS))
                depth += 1
            elif k < 0.4:
                out.append(r.choice(_UNARY))
            elif k < 0.6 and above >= 2:
                op = r.choice(list(_ARITH) + _BINARY)
                out.append(self.marker(op, _ARITH[op]) if op in _ARITH else op)
                depth -= 1
            elif k < 0.65 and above >= 2:
                out.append("SSTORE")
                depth -= 2
            elif k < 0.7:
                out.append("PUSH1 0x40 MSTORE")
                depth -= 1
            elif k < 0.78:
                out.append(f"DUP{r.randint(1, min(above, 16))}")
                depth += 1
            elif k < 0.85 and above >= 2:
                out.append(f"SWAP{r.randint(1, min(above - 1, 16))}")
            elif k < 0.9:
                out.append("PUSH1 0x00 PUSH1 0x00 PUSH1 0x00 PUSH1 0x00 PUSH1 0x00 CALLER GAS "
                           + self.marker("CALL", r.choice(["reentrancy", "leaking",
                                                          "unhandled_exception"])))
                depth += 1
            elif k < 0.93:
                out.append(self.marker("ORIGIN", "tx_origin"))
                depth += 1
            elif k < 0.95:
                # A data push that happens to equal a jump target.
                out.append(f"@b{r.randrange(1, self.n)} PUSH1 0x60 MSTORE")
            elif k < 0.97:
                out.append("PUSH1 0x00 PUSH1 0x00 PUSH1 0x00 PUSH1 0x00 CALLER GAS "
                           + self.marker("DELEGATECALL", "unsafe_delegatecall"))
                depth += 1
            else:
                out.append("POP")
                depth -= 1
        out.extend(["POP"] * (depth - floor))
        return " ".join(out)

    def terminator(self, i):
        r = self.rng
        nxt = i + 1
        plain = [j for j in range(i + 1, self.n) if j not in self.subs]
        must_leave = nxt >= self.n or nxt in self.subs
        choices = ["stop", "return", "revert", "jump"]
        if not must_leave:
            choices += ["fall", "fall", "jumpi", "jumpi"]
            if [s for s in self.subs if s > i]:
                choices += ["call"]
        if r.random() < 0.05:
            choices.append("selfdestruct")
        kind = r.choice(choices)
        if kind == "jump" and not plain:
            kind = "stop"
        if kind == "fall":
            return ""
        if kind == "stop":
            return "STOP"
        if kind == "return":
            return "PUSH1 0x20 PUSH1 0x00 RETURN"
        if kind == "revert":
            return "PUSH1 0x00 DUP1 REVERT"
        if kind == "selfdestruct":
            return "CALLER " + self.marker("SELFDESTRUCT", "suicidal")
        if kind == "jump":
            target = nxt if nxt in plain and r.random() < 0.5 else r.choice(plain)
            return f"@b{target} JUMP"
        if kind == "jumpi":
            back = r.random() < 0.1 and i > 1 and (i - 1) not in self.subs
            target = i - 1 if back else r.choice(plain)
            return f"PUSH1 0x00 CALLDATALOAD @b{target} JUMPI"
        sub = r.choice([s for s in self.subs if s > i])
        return f"@b{nxt} @b{sub} JUMP"

    def program(self):
        lines = ["PUSH1 0x80 PUSH1 0x40 MSTORE"]
        for i in range(self.n):
            head = f"b{i}:" if i else "=b0"
            if i in self.subs:
                lines.append(f"{head} {self.body(1)} JUMP")
            else:
                lines.append(f"{head} {self.body(0)} {self.terminator(i)}")
        return "\n".join(lines)


def random_contract(rng=None, n_blocks=None, deployment=None, with_metadata=None,
                    trailing_data=None):
    """Generate one :class:`FuzzContract`."""
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)
    n = n_blocks or rng.randint(2, 14)
    gen = _Gen(rng, n)
    source = gen.program()
    if trailing_data if trailing_data is not None else rng.random() < 0.2:
        source += f"\nINVALID .bytes 0x{rng.randbytes(rng.randint(1, 24)).hex()}"
    runtime, labels = assemble_source(source)
    candidates = [BugEntry(labels[m], op, vuln) for m, op, vuln in gen.bugs]
    if deployment if deployment is not None else rng.random() < 0.5:
        ctor = owner_ctor(rng.randrange(4)) if rng.random() < 0.5 else "PUSH1 0x01 PUSH1 0x00 SSTORE"
        name = f"fuzz{rng.getrandbits(32)}"
        code, _, _ = build_contract(ctor, source, name)
    elif with_metadata if with_metadata is not None else rng.random() < 0.5:
        code = runtime + metadata(f"fuzz{rng.getrandbits(32)}")
    else:
        code = runtime
    return FuzzContract(code, runtime, candidates, source)
