"""In-place bytecode rewriting: splice patches, repair jumps, re-emit code.

Instructions keep their ``original_address``; after every change the code is
laid out again and each instruction gets a fresh ``shadow_address``. Jump
repair then rewrites PUSH constants that pointed at a moved JUMPDEST.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict

from . import cfg as cfglib
from .asm import assemble, disassemble, find_codecopy_stub
from .errors import (AnatomyError, PatchError, ReassemblyError, RelocationError,
                     SafetyError)
from .opcodes import minimal_width

log = logging.getLogger(__name__)

MAX_FIXUP_ROUNDS = 16


@dataclass
class RelocationMap:
    entries: Dict[int, int] = field(default_factory=dict)

    def __getitem__(self, addr):
        return self.entries[addr]

    def get(self, addr, default=None):
        return self.entries.get(addr, default)

    def __len__(self):
        return len(self.entries)

    def is_identity(self):
        return all(a == b for a, b in self.entries.items())

    def is_monotone(self, strict=False):
        """Shadow addresses never decrease with the original address; with
        ``strict`` they must increase (no tombstones)."""
        shadows = [b for _, b in sorted(self.entries.items())]
        pairs = list(zip(shadows, shadows[1:]))
        return all(x < y for x, y in pairs) if strict else all(x <= y for x, y in pairs)


def copy_cfg(cfg):
    blocks = {s: cfglib.BasicBlock(s, list(b.instructions), set(b.successors),
                                   dict(b.edge_kinds))
              for s, b in cfg.blocks.items()}
    return cfglib.ControlFlowGraph(blocks, cfg.entry, set(cfg.unresolved_jumps),
                                   {k: set(v) for k, v in cfg.jump_targets.items()},
                                   set(cfg.jump_pushes), set(cfg.data_pushes), cfg.passes,
                                   list(cfg.warnings), dict(cfg.push_origins))


def relayout(cfg):
    """Assign sequential shadow addresses over blocks in ascending start order."""
    pc = 0
    for s in cfg.starts:
        b = cfg.blocks[s]
        out = []
        for ins in b.instructions:
            out.append(ins if ins.shadow_address == pc else replace(ins, shadow_address=pc))
            pc += ins.size
        b.instructions = out
    return cfg


def relocation_map(cfg):
    """original → shadow address for every original instruction (tombstones
    included) of a laid-out graph."""
    return RelocationMap({ins.original_address: ins.shadow_address
                          for ins in cfg.instructions() if ins.tag is None})


def apply_patch(cfg, patch, force=False):
    """Return a copy of ``cfg`` with ``patch`` spliced in at its anchor."""
    block = cfglib.find_block_containing(cfg, patch.anchor_pc)
    if block.start in cfglib.unreachable_blocks(cfg) and not force:
        raise SafetyError(
            f"anchor {patch.anchor_pc:#x} lies in unreachable block {block.start:#x}")
    cfg = copy_cfg(cfg)
    block = cfg.blocks[block.start]
    instrs = block.instructions
    i = next(k for k, ins in enumerate(instrs)
             if ins.original_address == patch.anchor_pc and ins.tag is None)
    n = patch.delete_count
    doomed = instrs[i: i + n]
    if len(doomed) != n or any(d.deleted or d.tag is not None for d in doomed):
        raise PatchError(f"cannot delete {n} instruction(s) at {patch.anchor_pc:#x}")
    if patch.delete and [d.mnemonic for d in doomed] != list(patch.delete):
        raise PatchError(
            f"patch deletes {' '.join(patch.delete)} but code at {patch.anchor_pc:#x} is "
            f"{' '.join(d.mnemonic for d in doomed)}")
    if any(d.mnemonic == "JUMPDEST" for d in doomed):
        raise PatchError(f"refusing to delete a JUMPDEST at {patch.anchor_pc:#x}")
    tombs = [replace(d, deleted=True) for d in doomed]
    if n:
        cut = i + n
    elif patch.insert_mode == "after":
        cut = i + 1
    else:
        cut = i
    block.instructions = instrs[:i] + tombs + instrs[i + n: cut] + \
        list(patch.insert_instructions) + instrs[max(cut, i + n):]
    return relayout(cfg)


def _data_only(cfg, addr):
    return addr in cfg.data_pushes and addr not in cfg.jump_pushes


def fix_jump_targets(cfg, reloc=None, pinned=()):
    """Retarget PUSHes aimed at moved JUMPDESTs and resolve patch labels.

    PUSHes widen when a new value no longer fits; layout and retargeting then
    repeat until no width changes. ``pinned`` lists original PUSH addresses
    that must be left alone (the deploy stub's length and offset). ``reloc``
    is accepted for symmetry with :func:`relocation_map`; it is recomputed
    after every widening round.
    """
    cfg = relayout(copy_cfg(cfg))
    pinned = set(pinned)
    origins = cfg.push_origins
    for ins in cfg.instructions():
        if ins.opcode.is_push and ins.tag is None and ins.original_address not in origins:
            origins[ins.original_address] = ins.value
    jumpdests = {ins.original_address for ins in cfg.instructions()
                 if ins.mnemonic == "JUMPDEST" and ins.tag is None}
    warned = set()

    for _ in range(MAX_FIXUP_ROUNDS):
        reloc = relocation_map(cfg)
        labels = {ins.label: ins.shadow_address for ins in cfg.instructions()
                  if ins.label is not None}
        widened = False
        for s in cfg.starts:
            b = cfg.blocks[s]
            out = []
            for ins in b.instructions:
                new = None
                if ins.target_label is not None:
                    if ins.target_label not in labels:
                        raise RelocationError(f"undefined label {ins.target_label}")
                    new = labels[ins.target_label]
                elif ins.opcode.is_push and ins.tag is None and not ins.deleted and not ins.truncated \
                        and ins.original_address not in pinned:
                    v = origins[ins.original_address]
                    if v in jumpdests and reloc[v] != v:
                        addr = ins.original_address
                        if _data_only(cfg, addr):
                            if addr not in warned:
                                warned.add(addr)
                                cfg.warnings.append(
                                    f"PUSH at {addr:#x} equals moved JUMPDEST {v:#x} but "
                                    "is only used as data; left unchanged")
                            new = v
                        else:
                            if addr in cfg.data_pushes and addr not in warned:
                                warned.add(addr)
                                cfg.warnings.append(
                                    f"PUSH at {addr:#x} feeds both jumps and data; "
                                    f"retargeted {v:#x}->{reloc[v]:#x}")
                            new = reloc[v]
                    elif v in jumpdests:
                        new = v
                if new is not None and new != ins.value:
                    width = max(ins.opcode.immediate_width, minimal_width(new))
                    widened |= width != ins.opcode.immediate_width
                    ins = ins.with_value(new, width)
                out.append(ins)
            b.instructions = out
        relayout(cfg)
        if not widened:
            return cfg
    raise RelocationError(f"jump fixup did not converge in {MAX_FIXUP_ROUNDS} rounds")


def reassemble(cfg):
    """Serialize the graph and check every jump PUSH lands on a JUMPDEST."""
    cfg = relayout(cfg)
    instrs = cfg.instructions()
    code = assemble(instrs)
    dests = {ins.shadow_address for ins in instrs
             if ins.mnemonic == "JUMPDEST" and not ins.deleted}
    origins = cfg.push_origins
    originally_valid = {ins.original_address for ins in instrs
                        if ins.mnemonic == "JUMPDEST" and ins.tag is None}
    offenders = []
    for ins in instrs:
        if ins.deleted or not ins.opcode.is_push:
            continue
        if ins.target_label is not None:
            ok = ins.value in dests
        elif ins.tag is None and ins.original_address in cfg.jump_pushes:
            before = origins.get(ins.original_address, ins.value)
            if before not in originally_valid:
                continue
            ok = ins.value in dests
        else:
            continue
        if not ok:
            offenders.append((ins.shadow_address, ins.value))
    if offenders:
        raise ReassemblyError(
            "jump PUSH(es) not landing on JUMPDEST: "
            + ", ".join(f"{a:#x}->{v:#x}" for a, v in offenders), offenders)
    return code


def _args_offset_pushes(instrs, stub_idx, old_total):
    """Deployment PUSHes holding the start of the constructor arguments
    (``PUSH <len> CODESIZE SUB`` and the matching CODECOPY source)."""
    hits = []
    for k, ins in enumerate(instrs):
        if stub_idx <= k < stub_idx + 5 or not ins.opcode.is_push:
            continue
        if ins.value == old_total and old_total > 0:
            hits.append(ins.original_address)
    return hits


def fix_deployment(anatomy, new_runtime, constructor_patches=(), force=True):
    """Rebuild full deployment bytecode around ``new_runtime``.

    ``new_runtime`` excludes the metadata, which is re-appended verbatim along
    with the constructor arguments. Returns ``(code, warnings)``.
    """
    warnings = []
    if not anatomy.has_deployment:
        return bytes(new_runtime) + anatomy.metadata, warnings
    instrs = disassemble(anatomy.deployment)
    idx = find_codecopy_stub(instrs)
    if idx is None:
        raise AnatomyError("deployment stub PUSH DUP1 PUSH PUSH CODECOPY not found")
    length_pc = instrs[idx].original_address
    offset_pc = instrs[idx + 2].original_address
    old_total = anatomy.runtime_offset + anatomy.copy_length
    uses_codesize = any(i.mnemonic == "CODESIZE" for i in instrs)
    args_pcs = _args_offset_pushes(instrs, idx, old_total) if uses_codesize else []
    if args_pcs:
        warnings.append("constructor-argument offset PUSH(es) at "
                        + ", ".join(f"{a:#x}" for a in args_pcs) + " updated")

    copy_len = len(new_runtime) + len(anatomy.metadata)
    extra = sum(i.size for p in constructor_patches for i in p.insert_instructions)
    # Widen the pinned pushes up front so their final values cannot move code.
    need = {
        length_pc: minimal_width(copy_len),
        offset_pc: minimal_width(len(anatomy.deployment) + extra + 8),
    }
    for a in args_pcs:
        need[a] = minimal_width(len(anatomy.deployment) + extra + 8 + copy_len)
    instrs = [ins.with_value(ins.value, max(ins.opcode.immediate_width, need[ins.original_address]))
              if ins.original_address in need else ins for ins in instrs]

    graph = cfglib.build_cfg(instrs)
    for p in constructor_patches:
        p = replace(p, anchor_pc=length_pc, insert_mode="before", delete_count=0, delete=())
        graph = apply_patch(graph, p, force=force)
    graph = fix_jump_targets(graph, pinned=set(need))
    warnings.extend(graph.warnings)

    deploy_len = sum(i.size for i in graph.instructions())
    values = {length_pc: copy_len, offset_pc: deploy_len}
    for a in args_pcs:
        values[a] = deploy_len + copy_len
    for s in graph.starts:
        b = graph.blocks[s]
        b.instructions = [ins.with_value(values[ins.original_address])
                          if ins.tag is None and ins.original_address in values else ins
                          for ins in b.instructions]
    deployment = reassemble(graph)
    return deployment + bytes(new_runtime) + anatomy.metadata + anatomy.constructor_args, warnings
