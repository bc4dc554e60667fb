import json

import pytest

from ctxpatch.asm import disassemble, split_anatomy
from ctxpatch.cfg import (FALLTHROUGH, JUMP, build_cfg, enumerate_paths, find_block_containing,
                          invalid_jump_targets, path_to_root, unreachable_blocks)
from ctxpatch.corpus import UINT16_ANCHOR, mask_trace_runtime
from ctxpatch.errors import LocationError, UnreachableError
from ctxpatch.lasm import assemble_source


def graph(text):
    code, labels = assemble_source(text)
    return build_cfg(disassemble(code)), labels


def test_direct_jump_example():
    g = build_cfg(disassemble(bytes.fromhex("600456fe5b00")))
    assert sorted(g.blocks) == [0, 3, 4]
    assert g.blocks[0].successors == {4}
    assert g.blocks[0].edge_kinds[4] == JUMP
    assert g.reachable() == {0, 4}
    assert 3 not in g.reachable()
    # INVALID padding after a JUMP can never run, so the safety gate ignores it.
    assert unreachable_blocks(g) == set()


def test_stack_simulation_finds_indirect_edge():
    g, l = graph("""
        @target @mid JUMP
        mid: PUSH1 0x01 POP JUMP
        target: STOP
    """)
    # No PUSH sits right before the JUMP in `mid`; only simulation resolves it.
    assert g.blocks[l["mid"]].successors == {l["target"]}
    assert not g.unresolved_jumps


def test_return_labels_with_two_callers():
    g, l = graph("""
        @r1 @sub JUMP
        r1: @r2 @sub JUMP
        r2: STOP
        sub: JUMP
    """)
    assert g.blocks[l["sub"]].successors == {l["r1"], l["r2"]}


def test_unresolved_dynamic_jump_triggers_gate():
    g, l = graph("""
        PUSH1 0x00 CALLDATALOAD JUMP
        island: PUSH1 0x01 PUSH1 0x00 SSTORE STOP
    """)
    assert g.unresolved_jumps == {3}
    assert unreachable_blocks(g) == {l["island"]}


def test_dead_island():
    g, l = graph("""
        PUSH1 0x00 CALLDATALOAD @live JUMPI STOP
        live: STOP
        dead: PUSH1 0x01 @dead2 JUMP
        dead2: STOP
    """)
    assert unreachable_blocks(g) == {l["dead"], l["dead2"]}


def test_fixtures_are_fully_connected(fixtures):
    for fx in fixtures.values():
        g = build_cfg(disassemble(fx.runtime))
        assert unreachable_blocks(g) == set(), fx.name
        assert not g.unresolved_jumps, fx.name
        reach = g.reachable()
        for s in g.jumpdests():
            assert s in reach and g.predecessors(s), (fx.name, hex(s))


def test_partition_and_edge_soundness(fixtures):
    for fx in fixtures.values():
        instrs = disassemble(fx.runtime)
        g = build_cfg(instrs)
        assert sum(len(b.instructions) for b in g.blocks.values()) == len(instrs)
        dests = g.jumpdests()
        for b in g.blocks.values():
            for t, kind in b.edge_kinds.items():
                if kind != FALLTHROUGH:
                    assert t in dests
            for ins in b.instructions[:-1]:
                assert ins.mnemonic not in ("JUMP", "JUMPI", "STOP", "RETURN", "REVERT")
        assert invalid_jump_targets(g) == []


def test_deterministic(fixtures):
    fx = fixtures["reentrancy_cross"]
    a = build_cfg(disassemble(fx.runtime)).to_json()
    b = build_cfg(disassemble(fx.runtime)).to_json()
    assert a == b
    g = build_cfg(disassemble(fx.runtime))
    p1 = [i.original_address for i in path_to_root(g, fx.bug_pc)]
    p2 = [i.original_address for i in path_to_root(build_cfg(disassemble(fx.runtime)), fx.bug_pc)]
    assert p1 == p2


def test_find_block_containing(fixtures):
    fx = fixtures["overflow_uint16"]
    g = build_cfg(disassemble(fx.runtime))
    b = find_block_containing(g, UINT16_ANCHOR)
    assert b.start < UINT16_ANCHOR < b.stop
    assert find_block_containing(g, b.start) is b
    # The CFG covers runtime code only; metadata offsets are not code.
    meta = split_anatomy(fx.code).metadata
    for pc in (len(fx.runtime), len(fx.runtime) + len(meta) - 1):
        with pytest.raises(LocationError):
            find_block_containing(g, pc)


def test_path_to_root_in_entry_block():
    g, _ = graph("PUSH1 0x01 PUSH1 0x02 ADD STOP")
    path = path_to_root(g, 4)
    assert [i.mnemonic for i in path] == ["PUSH1", "PUSH1", "ADD"]


def test_path_to_root_mask_trace():
    code, labels = mask_trace_runtime()
    path = path_to_root(build_cfg(disassemble(code)), labels["bug"])
    tail = [i.original_address for i in path if i.original_address >= 0x9C]
    assert tail[0] == 0x9C and tail[1] == 0xA1 and tail[-1] == 0xA6
    assert path[-1].mnemonic == "ADD"


def test_path_to_root_diamond_takes_ascending_route():
    g, l = graph("""
        PUSH1 0x00 CALLDATALOAD @right JUMPI
        left: @join JUMP
        right: @join JUMP
        join: PUSH1 0x01 PUSH1 0x01 =bug ADD STOP
    """)
    runs = {tuple(i.original_address for i in path_to_root(g, l["bug"])) for _ in range(5)}
    assert len(runs) == 1
    path = runs.pop()
    assert l["left"] in path and l["right"] not in path


def test_path_to_root_unreachable():
    g, l = graph("STOP dead: PUSH1 0x01 PUSH1 0x01 =bug ADD STOP")
    with pytest.raises(UnreachableError):
        path_to_root(g, l["bug"])


def test_enumerate_paths_counts():
    g, _ = graph("PUSH1 0x01 POP STOP")
    assert len(enumerate_paths(g)) == 1
    g, _ = graph("PUSH1 0x00 CALLDATALOAD @t JUMPI STOP t: STOP")
    paths = enumerate_paths(g)
    assert len(paths) == 2 and not paths.truncated


def test_enumerate_paths_loop_bound():
    g, l = graph("""
        PUSH1 0x03
        loop: PUSH1 0x01 SWAP1 SUB DUP1 @loop JUMPI STOP
    """)
    paths = enumerate_paths(g)
    for p in paths:
        visits = sum(1 for i in p if i.original_address == l["loop"])
        assert visits <= 2
    assert max(sum(1 for i in p if i.original_address == l["loop"]) for p in paths) == 2


def test_enumerate_paths_truncation():
    text = "".join(f"PUSH1 0x00 CALLDATALOAD @t{i} JUMPI GAS POP t{i}: " for i in range(8)) + "STOP"
    g, _ = graph(text)
    assert len(enumerate_paths(g)) == 2 ** 8
    few = enumerate_paths(g, max_paths=10)
    assert len(few) == 10 and few.truncated


def test_dumps(fixtures):
    g = build_cfg(disassemble(fixtures["tx_origin"].runtime))
    data = json.loads(g.to_json())
    assert {"blocks", "unresolved"} <= set(data)
    assert {"start", "end", "instrs", "succs"} <= set(data["blocks"][0])
    dot = g.to_dot()
    assert dot.startswith("digraph") and dot.rstrip().endswith("}")


def test_recovery_ratio(fixtures):
    g = build_cfg(disassemble(fixtures["overflow_mul"].runtime))
    assert g.recovery_ratio() == 1.0
