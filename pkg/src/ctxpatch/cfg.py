"""Control-flow graph recovery and path enumeration over decoded bytecode.

Jump targets are resolved in two stages: the ``PUSH; JUMP`` peephole, then
a bounded abstract stack simulation that carries PUSH constants across
blocks until no new edge appears.
"""

import bisect
import json
from dataclasses import dataclass, field
from typing import Dict, List, Set

from .errors import LocationError, UnreachableError
from .opcodes import halts

MAX_ABSTRACT_SLOTS = 32
MAX_FIXPOINT_PASSES = 50
MAX_STATES_PER_BLOCK = 256
DEFAULT_MAX_PATHS = 10_000
DEFAULT_MAX_DEPTH = 512
LOOP_BOUND = 2

FALLTHROUGH = "fallthrough"
JUMP = "jump"
BRANCH = "branch-taken"


@dataclass
class BasicBlock:
    start: int
    instructions: list
    successors: Set[int] = field(default_factory=set)
    edge_kinds: Dict[int, str] = field(default_factory=dict)

    @property
    def last(self):
        return self.instructions[-1]

    def _last_original(self):
        for ins in reversed(self.instructions):
            if ins.original_address is not None and ins.tag is None:
                return ins
        return self.instructions[-1]

    @property
    def end(self):
        """Address of the final original instruction."""
        return self._last_original().original_address

    @property
    def stop(self):
        """First original address past the block."""
        last = self._last_original()
        return last.original_address + max(last.size, 1)

    def contains(self, pc):
        return any(ins.original_address == pc for ins in self.instructions)

    def index_of(self, pc):
        for i, ins in enumerate(self.instructions):
            if ins.original_address == pc:
                return i
        raise LocationError(f"pc {pc:#x} not in block {self.start:#x}")

    def add_edge(self, target, kind):
        self.successors.add(target)
        self.edge_kinds.setdefault(target, kind)

    @property
    def falls_through(self):
        name = self.last.mnemonic
        return name != "JUMP" and not halts(self.last.opcode)


@dataclass
class ControlFlowGraph:
    blocks: Dict[int, BasicBlock]
    entry: int = 0
    unresolved_jumps: Set[int] = field(default_factory=set)
    # Every target value seen for each JUMP/JUMPI, valid or not.
    jump_targets: Dict[int, Set[int]] = field(default_factory=dict)
    # PUSH addresses whose constant was consumed as a jump target, and those
    # consumed by anything else.
    jump_pushes: Set[int] = field(default_factory=set)
    data_pushes: Set[int] = field(default_factory=set)
    passes: int = 0
    # Filled in while rewriting: diagnostics, and the value each original
    # PUSH carried before any retargeting.
    warnings: List[str] = field(default_factory=list)
    push_origins: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self._starts = sorted(self.blocks)

    @property
    def starts(self):
        return self._starts

    def instructions(self):
        return [ins for s in self._starts for ins in self.blocks[s].instructions]

    def next_block(self, start):
        i = bisect.bisect_right(self._starts, start)
        return self._starts[i] if i < len(self._starts) else None

    def predecessors(self, start):
        return sorted(s for s, b in self.blocks.items() if start in b.successors)

    def jumpdests(self):
        return {s for s, b in self.blocks.items()
                if b.instructions[0].mnemonic == "JUMPDEST"}

    def reachable(self):
        if not self.blocks:
            return set()
        seen = {self.entry}
        todo = [self.entry]
        while todo:
            for s in self.blocks[todo.pop()].successors:
                if s not in seen:
                    seen.add(s)
                    todo.append(s)
        return seen

    def recovery_ratio(self):
        """Fraction of code bytes lying inside reachable blocks."""
        total = sum(b.stop - b.start for b in self.blocks.values())
        if not total:
            return 1.0
        reach = self.reachable()
        covered = sum(self.blocks[s].stop - s for s in reach)
        return covered / total

    def to_json(self):
        blocks = []
        for s in self._starts:
            b = self.blocks[s]
            blocks.append({
                "start": s,
                "end": b.end,
                "instrs": [f"{ins.original_address:#06x} {ins}" for ins in b.instructions],
                "succs": sorted(b.successors),
            })
        return json.dumps({"blocks": blocks, "unresolved": sorted(self.unresolved_jumps)},
                          indent=2)

    def to_dot(self):
        lines = ["digraph cfg {", '  node [shape=box fontname="monospace"];']
        for s in self._starts:
            b = self.blocks[s]
            body = "\\l".join(f"{ins.original_address:#06x} {ins}" for ins in b.instructions)
            lines.append(f'  b{s} [label="{body}\\l"];')
        for s in self._starts:
            for t in sorted(self.blocks[s].successors):
                kind = self.blocks[s].edge_kinds[t]
                style = "dashed" if kind == FALLTHROUGH else "solid"
                lines.append(f'  b{s} -> b{t} [style={style} label="{kind}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _leaders(instrs):
    leaders = set()
    if instrs:
        leaders.add(instrs[0].original_address)
    for i, ins in enumerate(instrs):
        if ins.mnemonic == "JUMPDEST":
            leaders.add(ins.original_address)
        if i + 1 < len(instrs) and (ins.mnemonic in ("JUMP", "JUMPI") or halts(ins.opcode)):
            leaders.add(instrs[i + 1].original_address)
    return leaders


def _split(instrs):
    leaders = _leaders(instrs)
    blocks = {}
    current = None
    for ins in instrs:
        if ins.original_address in leaders:
            current = BasicBlock(ins.original_address, [])
            blocks[current.start] = current
        current.instructions.append(ins)
    return blocks


def simulate_block(block, stack, on_consume=None):
    """Run the constant-stack abstraction over one block.

    ``stack`` is a tuple of slots (top last); each slot is ``(value, push_pc)``
    or None for unknown. Slots below the tuple are unknown. Returns the output
    stack and, for a trailing JUMP/JUMPI, the popped target slot.
    ``on_consume(slot, as_jump)`` is called for every known slot popped.
    """
    st = list(stack)
    target = None

    def pop(as_jump=False):
        slot = st.pop() if st else None
        if slot is not None and on_consume is not None:
            on_consume(slot, as_jump)
        return slot

    for ins in block.instructions:
        op = ins.opcode
        if op.is_push:
            st.append(None if ins.truncated else (ins.value, ins.original_address))
        elif op.is_dup:
            n = op.stack_pops
            st.append(st[-n] if len(st) >= n else None)
        elif op.is_swap:
            n = op.stack_pops
            while len(st) < n:
                st.insert(0, None)
            st[-1], st[-n] = st[-n], st[-1]
        elif op.mnemonic in ("JUMP", "JUMPI"):
            target = pop(as_jump=True)
            if op.mnemonic == "JUMPI":
                pop()
        elif op.mnemonic == "POP":
            # Discarding a value says nothing about how it is used.
            if st:
                st.pop()
        else:
            for _ in range(op.stack_pops):
                pop()
            st.extend([None] * op.stack_pushes)
        if len(st) > MAX_ABSTRACT_SLOTS:
            del st[: len(st) - MAX_ABSTRACT_SLOTS]
    return tuple(st), target


def build_cfg(instrs):
    """Recover the CFG of a decoded instruction stream."""
    blocks = _split(instrs)
    starts = sorted(blocks)
    next_of = {s: starts[i + 1] if i + 1 < len(starts) else None
               for i, s in enumerate(starts)}
    jumpdests = {s for s, b in blocks.items() if b.instructions[0].mnemonic == "JUMPDEST"}
    cfg = ControlFlowGraph(blocks)

    for s, b in blocks.items():
        nxt = next_of[s]
        if b.falls_through and nxt is not None:
            b.add_edge(nxt, FALLTHROUGH)

    def link(b, t):
        jaddr = b.end
        cfg.jump_targets.setdefault(jaddr, set()).add(t)
        if t in jumpdests:
            b.add_edge(t, BRANCH if b.last.mnemonic == "JUMPI" else JUMP)
            return True
        return False

    # Peephole: PUSH immediately before the jump.
    for b in blocks.values():
        ins = b.instructions
        if ins[-1].mnemonic in ("JUMP", "JUMPI") and len(ins) >= 2 and ins[-2].opcode.is_push \
                and not ins[-2].truncated:
            link(b, ins[-2].value)
            cfg.jump_pushes.add(ins[-2].original_address)

    # Constant-stack simulation to a fixpoint.
    def consume(slot, as_jump):
        (cfg.jump_pushes if as_jump else cfg.data_pushes).add(slot[1])

    if blocks:
        states = {s: set() for s in blocks}
        frontier = [(starts[0], ())]
        states[starts[0]].add(())
        passes = 0
        while frontier and passes < MAX_FIXPOINT_PASSES:
            passes += 1
            nxt_frontier = []
            for s, stack in frontier:
                b = blocks[s]
                out, target = simulate_block(b, stack, consume)
                succ = []
                if b.last.mnemonic in ("JUMP", "JUMPI"):
                    if target is not None:
                        if link(b, target[0]):
                            succ.append(target[0])
                    else:
                        succ.extend(t for t, k in b.edge_kinds.items() if k != FALLTHROUGH)
                if b.falls_through and next_of[s] is not None:
                    succ.append(next_of[s])
                for t in succ:
                    if out not in states[t] and len(states[t]) < MAX_STATES_PER_BLOCK:
                        states[t].add(out)
                        nxt_frontier.append((t, out))
            frontier = sorted(nxt_frontier, key=lambda x: x[0])
        cfg.passes = passes

    for b in blocks.values():
        if b.last.mnemonic in ("JUMP", "JUMPI") and not any(
            k != FALLTHROUGH for k in b.edge_kinds.values()
        ):
            cfg.unresolved_jumps.add(b.end)
    return cfg


def find_block_containing(cfg, pc):
    starts = cfg.starts
    i = bisect.bisect_right(starts, pc) - 1
    if i >= 0:
        b = cfg.blocks[starts[i]]
        if pc < b.stop and b.contains(pc):
            return b
    raise LocationError(f"no instruction at pc {pc:#x}")


def _successors(cfg, block, target):
    """Successor block starts given the simulated jump target slot."""
    out = []
    if block.last.mnemonic in ("JUMP", "JUMPI"):
        if target is not None:
            # A known target that is not a JUMPDEST block ends the path.
            if target[0] in block.successors:
                out.append(target[0])
        else:
            out.extend(t for t, k in block.edge_kinds.items() if k != FALLTHROUGH)
    if block.falls_through:
        nxt = cfg.next_block(block.start)
        if nxt is not None and nxt in block.successors:
            out.append(nxt)
    return sorted(set(out))


def path_to_root(cfg, pc, max_depth=DEFAULT_MAX_DEPTH):
    """One execution path (list of instructions) from the entry up to and
    including the instruction at ``pc``.

    The search walks forward from the entry, letting the simulated stack pick
    the successor of each jump, and explores successors in ascending address
    order; the first path to reach the target block wins.
    """
    goal = find_block_containing(cfg, pc)
    if goal.start not in cfg.reachable():
        raise UnreachableError(f"block {goal.start:#x} holding pc {pc:#x} is unreachable")

    seen = set()
    # Stack entries: (block start, abstract stack, block path so far)
    todo = [(cfg.entry, (), (cfg.entry,))]
    found = None
    while todo:
        s, stack, path = todo.pop()
        if s == goal.start:
            found = path
            break
        if (s, stack) in seen or len(path) > max_depth:
            continue
        seen.add((s, stack))
        b = cfg.blocks[s]
        out, target = simulate_block(b, stack)
        for t in reversed(_successors(cfg, b, target)):
            if path.count(t) < LOOP_BOUND:
                todo.append((t, out, path + (t,)))
    if found is None:
        raise UnreachableError(f"no path from entry to pc {pc:#x}")
    instrs = []
    for s in found[:-1]:
        instrs.extend(cfg.blocks[s].instructions)
    last = cfg.blocks[found[-1]]
    instrs.extend(last.instructions[: last.index_of(pc) + 1])
    return instrs


@dataclass
class PathEnumeration:
    paths: List[list]
    truncated: bool = False

    def __iter__(self):
        return iter(self.paths)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        return self.paths[i]


def enumerate_paths(cfg, max_paths=DEFAULT_MAX_PATHS, max_depth=DEFAULT_MAX_DEPTH):
    """Depth-first enumeration of execution paths from the entry.

    A path ends at a halting instruction, at the end of code, or at a jump
    whose target is unknown. JUMPI forks the path; each block may occur at
    most twice on one path.
    """
    result = PathEnumeration([])
    if not cfg.blocks:
        return result
    todo = [((cfg.entry,), ())]
    while todo:
        path, stack = todo.pop()
        b = cfg.blocks[path[-1]]
        out, target = simulate_block(b, stack)
        succ = [] if halts(b.last.opcode) else _successors(cfg, b, target)
        succ = [t for t in succ if path.count(t) < LOOP_BOUND]
        if not succ or len(path) >= max_depth:
            if len(result.paths) >= max_paths:
                result.truncated = True
                break
            result.paths.append([ins for s in path for ins in cfg.blocks[s].instructions])
            if len(path) >= max_depth and succ:
                result.truncated = True
            continue
        for t in reversed(succ):
            todo.append((path + (t,), out))
    return result


def unreachable_blocks(cfg):
    """Blocks that could run but that the entry cannot reach through
    recovered edges.

    Only JUMPDEST blocks and whatever they fall or jump into count: a block
    that neither starts with JUMPDEST nor follows a fall-through edge (the
    INVALID padding solc leaves after a JUMP, say) can never execute, so it
    says nothing about missing edges.
    """
    reach = cfg.reachable()
    seeds = [s for s in cfg.jumpdests() if s not in reach]
    island = set(seeds)
    while seeds:
        for t in cfg.blocks[seeds.pop()].successors:
            if t not in island and t not in reach:
                island.add(t)
                seeds.append(t)
    return island


def invalid_jump_targets(cfg):
    """``(jump address, target)`` for every statically resolved jump target
    that is not a JUMPDEST."""
    dests = cfg.jumpdests()
    return sorted((j, t) for j, targets in cfg.jump_targets.items()
                  for t in targets if t not in dests)
