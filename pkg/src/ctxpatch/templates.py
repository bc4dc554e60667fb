"""Patch template DSL: parsing, the built-in catalog and instantiation.

A template is a JSON record::

    {"delete": "ORIGIN", "insert": "CALLER",
     "insert_mode": "before", "constructor": false}

``insert`` is a space-separated token list made of opcode mnemonics,
``PUSH<n>_0x<hex>`` literals and four placeholders: ``free_storage_location``,
``integer_bounds``, ``PUSH_jump_loc_<x>`` and ``JUMPDEST_jump_loc_<x>``.
"""

import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Tuple

from .asm import make
from .errors import ContextError, TemplateError
from .opcodes import by_mnemonic

FREE_STORAGE = "free_storage_location"
INTEGER_BOUNDS = "integer_bounds"
_PUSH_LABEL = re.compile(r"^PUSH_jump_loc_(\w+)$")
_JUMPDEST_LABEL = re.compile(r"^JUMPDEST_jump_loc_(\w+)$")
_PUSH_LITERAL = re.compile(r"^PUSH(\d+)_0x([0-9a-fA-F]+)$")

VULNERABILITIES = (
    "reentrancy", "tx_origin", "access_control", "overflow_add",
    "overflow_mul", "underflow_sub", "unhandled_exception",
)


@dataclass(frozen=True)
class PatchTemplate:
    delete: Tuple[str, ...] = ()
    insert: Tuple[str, ...] = ()
    insert_mode: str = "before"
    constructor: bool = False

    @property
    def labels(self):
        return sorted({m.group(1) for t in self.insert
                       for m in [_JUMPDEST_LABEL.match(t)] if m})

    def uses(self, keyword):
        return keyword in self.insert


def _check_token(tok):
    if tok in (FREE_STORAGE, INTEGER_BOUNDS) or _PUSH_LABEL.match(tok) \
            or _JUMPDEST_LABEL.match(tok):
        return
    m = _PUSH_LITERAL.match(tok)
    if m:
        width, value = int(m.group(1)), int(m.group(2), 16)
        if not 1 <= width <= 32 or value >= 1 << (8 * width):
            raise TemplateError(f"bad push literal {tok!r}")
        return
    try:
        op = by_mnemonic(tok)
    except KeyError:
        raise TemplateError(f"unknown token {tok!r}") from None
    if op.is_push:
        raise TemplateError(f"push without immediate {tok!r}; write {tok}_0x..")


def parse_template(record):
    """Parse a template from a dict or its JSON text."""
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise TemplateError(f"template is not valid JSON: {exc}") from None
    if not isinstance(record, dict):
        raise TemplateError("template must be a JSON object")
    missing = {"delete", "insert", "insert_mode", "constructor"} - set(record)
    if missing:
        raise TemplateError(f"template lacks field(s): {', '.join(sorted(missing))}")
    delete = tuple(str(record["delete"]).split())
    insert = tuple(str(record["insert"]).split())
    mode = record["insert_mode"]
    if mode not in ("before", "after"):
        raise TemplateError(f"insert_mode must be 'before' or 'after', got {mode!r}")
    if not isinstance(record["constructor"], bool):
        raise TemplateError("constructor flag must be a boolean")
    for tok in delete:
        try:
            by_mnemonic(tok)
        except KeyError:
            raise TemplateError(f"unknown token {tok!r} in delete") from None
    for tok in insert:
        _check_token(tok)
    pushes = Counter(m.group(1) for t in insert for m in [_PUSH_LABEL.match(t)] if m)
    dests = Counter(m.group(1) for t in insert for m in [_JUMPDEST_LABEL.match(t)] if m)
    for label in pushes:
        if dests[label] != 1:
            raise TemplateError(
                f"PUSH_jump_loc_{label} needs exactly one JUMPDEST_jump_loc_{label}, "
                f"found {dests[label]}")
    for label, n in dests.items():
        if n > 1:
            raise TemplateError(f"JUMPDEST_jump_loc_{label} defined {n} times")
    return PatchTemplate(delete, insert, mode, record["constructor"])


def serialize_template(t):
    return {
        "delete": " ".join(t.delete),
        "insert": " ".join(t.insert),
        "insert_mode": t.insert_mode,
        "constructor": t.constructor,
    }


_CATALOG_RECORDS = {
    "reentrancy": [
        {"delete": "", "insert": "free_storage_location SLOAD PUSH1_0x1 EQ ISZERO "
         "PUSH_jump_loc_1 JUMPI PUSH1_0x1 DUP1 REVERT JUMPDEST_jump_loc_1 "
         "PUSH1_0x1 free_storage_location SSTORE",
         "insert_mode": "before", "constructor": False},
        {"delete": "", "insert": "PUSH1_0x0 free_storage_location SSTORE",
         "insert_mode": "after", "constructor": False},
    ],
    "tx_origin": [
        {"delete": "ORIGIN", "insert": "CALLER", "insert_mode": "before",
         "constructor": False},
    ],
    "access_control": [
        {"delete": "", "insert": "CALLER free_storage_location SSTORE",
         "insert_mode": "after", "constructor": True},
        {"delete": "", "insert": "free_storage_location SLOAD "
         "PUSH20_0xffffffffffffffffffffffffffffffffffffffff AND CALLER EQ "
         "PUSH_jump_loc_1 JUMPI PUSH1_0x1 DUP1 REVERT JUMPDEST_jump_loc_1",
         "insert_mode": "before", "constructor": False},
    ],
    "overflow_add": [
        {"delete": "", "insert": "DUP2 DUP2 integer_bounds SUB LT ISZERO "
         "PUSH_jump_loc_1 JUMPI PUSH1_0x1 DUP1 REVERT JUMPDEST_jump_loc_1",
         "insert_mode": "before", "constructor": False},
    ],
    # Skips the division check when the operand below the top is zero (the
    # product cannot overflow), otherwise requires (a*b & bounds) / b == a.
    "overflow_mul": [
        {"delete": "", "insert": "DUP2 DUP2 MUL integer_bounds AND DUP3 ISZERO DUP1 "
         "PUSH_jump_loc_1 JUMPI POP DUP3 SWAP1 DIV DUP2 EQ DUP1 JUMPDEST_jump_loc_1 "
         "SWAP1 POP PUSH_jump_loc_2 JUMPI PUSH1_0x1 DUP1 REVERT JUMPDEST_jump_loc_2",
         "insert_mode": "before", "constructor": False},
    ],
    "underflow_sub": [
        {"delete": "", "insert": "DUP2 DUP2 LT ISZERO PUSH_jump_loc_1 JUMPI "
         "PUSH1_0x1 DUP1 REVERT JUMPDEST_jump_loc_1",
         "insert_mode": "before", "constructor": False},
    ],
    "unhandled_exception": [
        {"delete": "", "insert": "DUP1 ISZERO ISZERO PUSH_jump_loc_1 JUMPI "
         "PUSH1_0x1 DUP1 REVERT JUMPDEST_jump_loc_1",
         "insert_mode": "after", "constructor": False},
    ],
}


def builtin_catalog():
    return {vuln: [parse_template(r) for r in records]
            for vuln, records in _CATALOG_RECORDS.items()}


def load_templates(path_or_text):
    """Load user templates: a JSON object mapping vulnerability → list of
    template records (a single record is accepted in place of a list)."""
    text = path_or_text
    if not str(text).lstrip().startswith("{"):
        with open(path_or_text) as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TemplateError(f"template file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise TemplateError("template file must map vulnerability names to templates")
    out = {}
    for vuln, records in data.items():
        if isinstance(records, dict):
            records = [records]
        if not isinstance(records, list):
            raise TemplateError(f"templates for {vuln!r} must be a record or a list")
        out[vuln] = [parse_template(r) for r in records]
    return out


def check_only(lock):
    """The lock-check prefix of a lock template: everything up to and
    including its last jump label, without the lock acquisition."""
    cut = max(i for i, t in enumerate(lock.insert) if _JUMPDEST_LABEL.match(t))
    return PatchTemplate(lock.delete, lock.insert[: cut + 1], lock.insert_mode,
                         lock.constructor)


@dataclass
class PatchContext:
    free_storage_key: Optional[int] = None
    integer_bounds: Optional[int] = None
    base_label_counter: int = 0


@dataclass
class InstantiatedPatch:
    delete_count: int
    insert_instructions: list
    insert_mode: str
    constructor: bool
    anchor_pc: int
    vulnerability: str
    delete: Tuple[str, ...] = ()
    tag: Optional[str] = None

    @property
    def labels(self):
        return {i.label for i in self.insert_instructions if i.label}


def instantiate(tmpl, ctx, anchor_pc, vuln, tag=None):
    """Turn a template into concrete instructions.

    Jump-label placeholders become symbolic PUSH/JUMPDEST pairs whose labels
    are offset by ``ctx.base_label_counter``; the counter is advanced past the
    labels used so the same context can instantiate further patches.
    """
    local = {}
    for name in tmpl.labels:
        local[name] = f"jump_loc_{ctx.base_label_counter + len(local) + 1}"
    instrs = []
    for tok in tmpl.insert:
        if tok == FREE_STORAGE:
            if ctx.free_storage_key is None:
                raise ContextError("template needs free_storage_location")
            instrs.append(make("PUSH", ctx.free_storage_key, tag=tag))
        elif tok == INTEGER_BOUNDS:
            if ctx.integer_bounds is None:
                raise ContextError("template needs integer_bounds")
            instrs.append(make("PUSH", ctx.integer_bounds, tag=tag))
        elif (m := _PUSH_LABEL.match(tok)):
            instrs.append(make("PUSH1", 0, target_label=local[m.group(1)], tag=tag))
        elif (m := _JUMPDEST_LABEL.match(tok)):
            instrs.append(make("JUMPDEST", label=local[m.group(1)], tag=tag))
        elif (m := _PUSH_LITERAL.match(tok)):
            instrs.append(make(f"PUSH{m.group(1)}", int(m.group(2), 16), tag=tag))
        else:
            instrs.append(make(tok, tag=tag))
    ctx.base_label_counter += len(local)
    return InstantiatedPatch(len(tmpl.delete), instrs, tmpl.insert_mode, tmpl.constructor,
                             anchor_pc, vuln, tmpl.delete, tag)


def stack_effects(tmpl):
    """Net stack effect of every non-reverting route through the insert
    sequence, plus the deepest pre-existing slot it touches.

    Returns ``(effects, min_depth)`` where ``effects`` is the set of net
    depth changes observed at the end of the sequence.
    """
    ctx = PatchContext(free_storage_key=0, integer_bounds=0)
    instrs = instantiate(tmpl, ctx, 0, "check").insert_instructions
    where = {ins.label: i for i, ins in enumerate(instrs) if ins.label}
    effects = set()
    low = 0
    todo = [(0, 0, ())]
    while todo:
        i, depth, seen = todo.pop()
        if i == len(instrs):
            effects.add(depth)
            continue
        if (i, depth) in seen:
            continue
        seen = seen + ((i, depth),)
        ins = instrs[i]
        name = ins.mnemonic
        if name in ("REVERT", "INVALID", "STOP", "RETURN", "SELFDESTRUCT"):
            continue
        low = min(low, depth - ins.opcode.stack_pops)
        if name == "JUMPI":
            after = depth - 2
            target = instrs[i - 1].target_label if i else None
            if target is not None:
                todo.append((where[target], after, seen))
            todo.append((i + 1, after, seen))
            continue
        if name == "JUMP":
            target = instrs[i - 1].target_label if i else None
            if target is not None:
                todo.append((where[target], depth - 1, seen))
            continue
        todo.append((i + 1, depth - ins.opcode.stack_pops + ins.opcode.stack_pushes, seen))
    return effects, -low


def net_stack_effects(tmpl):
    """Stack effects of the insert sequence relative to the instructions the
    template deletes.  A replacement template is neutral when its insert
    leaves the stack as the deleted code would have; ``{0}`` means neutral."""
    removed = 0
    for tok in tmpl.delete:
        op = by_mnemonic(tok.split("_")[0])
        removed += op.stack_pushes - op.stack_pops
    return {e - removed for e in stack_effects(tmpl)[0]}
