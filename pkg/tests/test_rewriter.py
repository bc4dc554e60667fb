import pytest

from ctxpatch.asm import disassemble, split_anatomy
from ctxpatch.cfg import build_cfg
from ctxpatch.corpus import ALICE, DEPLOYER, UINT16_ANCHOR, TARGET
from ctxpatch.errors import PatchError, SafetyError
from ctxpatch.evm import WorldState, deploy
from ctxpatch.lasm import assemble_source
from ctxpatch.rewriter import (apply_patch, fix_deployment, fix_jump_targets, reassemble,
                               relocation_map)
from ctxpatch.templates import PatchContext, builtin_catalog, instantiate

CAT = builtin_catalog()


def add_guard(pc, bounds=0xFFFF, tag="bug0"):
    return instantiate(CAT["overflow_add"][0], PatchContext(integer_bounds=bounds), pc,
                       "overflow_add", tag=tag)


def by_original(graph):
    return {i.original_address: i for i in graph.instructions() if i.tag is None}


@pytest.fixture(scope="module")
def u16(fixtures):
    fx = fixtures["overflow_uint16"]
    g = build_cfg(disassemble(fx.runtime))
    return fx, g, fix_jump_targets(apply_patch(g, add_guard(fx.bug_pc)))


def test_uint16_guard_layout(u16):
    fx, _, g = u16
    assert fx.bug_pc == UINT16_ANCHOR
    guard = [i for i in g.instructions() if i.tag == "bug0"]
    assert guard[0].shadow_address == 0xA5
    assert guard[-1].shadow_address == 0xB4 and guard[-1].mnemonic == "JUMPDEST"
    assert sum(i.size for i in guard) == 16
    assert by_original(g)[0xA5].shadow_address == 0xB5
    assert by_original(g)[0xA5].mnemonic == "ADD"


def test_uint16_later_jumps_shift(u16):
    _, before, after = u16
    old, new = by_original(before), by_original(after)
    moved = 0
    for addr in before.jump_pushes:
        v = old[addr].value
        if v > UINT16_ANCHOR:
            assert new[addr].value == v + 0x10
            moved += 1
        else:
            assert new[addr].value == v
    assert moved >= 2
    # The guard's own label resolves to its JUMPDEST.
    push = next(i for i in after.instructions() if i.tag == "bug0" and i.target_label)
    assert push.value == 0xB4


def test_uint16_reassembled_length(u16):
    fx, _, g = u16
    code = reassemble(g)
    assert len(code) == len(fx.runtime) + 16
    # Re-disassembling gives a graph with no invalid jumps.
    from ctxpatch.cfg import invalid_jump_targets
    assert invalid_jump_targets(build_cfg(disassemble(code))) == []


def test_tx_origin_replacement_is_identity(fixtures):
    fx = fixtures["tx_origin"]
    g = build_cfg(disassemble(fx.runtime))
    p = instantiate(CAT["tx_origin"][0], PatchContext(), fx.bug_pc, "tx_origin", tag="bug0")
    g2 = fix_jump_targets(apply_patch(g, p))
    assert relocation_map(g2).is_identity()
    code = reassemble(g2)
    assert len(code) == len(fx.runtime)
    assert code[fx.bug_pc] == 0x33  # CALLER
    assert code[:fx.bug_pc] == fx.runtime[:fx.bug_pc]


def test_delete_mismatch_raises(fixtures):
    fx = fixtures["overflow_uint16"]
    g = build_cfg(disassemble(fx.runtime))
    p = instantiate(CAT["tx_origin"][0], PatchContext(), fx.bug_pc, "tx_origin")
    with pytest.raises(PatchError, match="deletes ORIGIN"):
        apply_patch(g, p)


def test_two_patches_in_one_block():
    code, l = assemble_source("""
        PUSH1 0x04 CALLDATALOAD DUP1 =a ADD DUP1 =b ADD @end JUMP
        end: STOP
    """)
    g = build_cfg(disassemble(code))
    g = apply_patch(g, add_guard(l["b"], tag="bug1"))
    g = apply_patch(g, add_guard(l["a"], tag="bug0"))
    g = fix_jump_targets(g)
    out = reassemble(g)
    assert len(out) == len(code) + 32
    reloc = relocation_map(g)
    assert reloc[l["a"]] == l["a"] + 16
    assert reloc[l["b"]] == l["b"] + 32
    assert reloc[l["end"]] == l["end"] + 32
    assert reloc.is_monotone(strict=True)


def test_push1_widens_across_0x100():
    from ctxpatch.corpus import _padding
    # 6 bytes of head, then padding, then PUSH1 <t> JUMP and the JUMPDEST at 0xf0.
    code, l = assemble_source(f"""
        PUSH1 0x04 CALLDATALOAD DUP1 =bug ADD POP {_padding(0xF0 - 9)}
        =j PUSH1 0xf0 JUMP
        t:
    """)
    assert l["t"] == 0xF0
    g = build_cfg(disassemble(code))
    g = fix_jump_targets(apply_patch(g, add_guard(l["bug"])))
    jump_push = by_original(g)[l["j"]]
    assert jump_push.mnemonic == "PUSH2"
    assert jump_push.value == 0xF0 + 16 + 1
    out = reassemble(g)
    assert len(out) == len(code) + 17


def test_identity_without_patches(fixtures):
    for fx in fixtures.values():
        g = fix_jump_targets(build_cfg(disassemble(fx.runtime)))
        assert relocation_map(g).is_identity()
        assert reassemble(g) == fx.runtime


def test_unreachable_anchor_needs_force():
    code, l = assemble_source("""
        @end JUMP
        dead: PUSH1 0x01 DUP1 =bug ADD POP STOP
        end: STOP
    """)
    g = build_cfg(disassemble(code))
    with pytest.raises(SafetyError):
        apply_patch(g, add_guard(l["bug"]))
    g = fix_jump_targets(apply_patch(g, add_guard(l["bug"]), force=True))
    assert len(reassemble(g)) == len(code) + 16


def test_data_push_equal_to_target_is_left_alone():
    code, l = assemble_source("""
        PUSH1 0x04 CALLDATALOAD DUP1 =bug ADD POP
        @end PUSH1 0x00 MSTORE
        @end JUMP
        end: STOP
    """)
    g = build_cfg(disassemble(code))
    g = fix_jump_targets(apply_patch(g, add_guard(l["bug"])))
    pushes = [i for i in g.instructions() if i.tag is None and i.mnemonic == "PUSH2"]
    data, jump = pushes
    assert data.value == l["end"]
    assert jump.value == l["end"] + 16
    assert any("only used as data" in w for w in g.warnings)


def test_fix_deployment_updates_length(fixtures):
    fx = fixtures["overflow_uint16"]
    anatomy = split_anatomy(fx.code)
    g = fix_jump_targets(apply_patch(build_cfg(disassemble(anatomy.runtime)),
                                     add_guard(fx.bug_pc)))
    new_runtime = reassemble(g)
    code, warnings = fix_deployment(anatomy, new_runtime)
    new = split_anatomy(code)
    assert new.copy_length == anatomy.copy_length + 0x10
    assert new.runtime == new_runtime
    assert new.metadata == anatomy.metadata
    # Only the copy-length PUSH of the deploy stub changed.
    diff = [k for k in range(len(new.deployment)) if new.deployment[k] != anatomy.deployment[k]]
    assert len(new.deployment) == len(anatomy.deployment) and len(diff) == 1
    world, res = deploy(WorldState(), DEPLOYER, code, TARGET)
    assert res.success and world.get(TARGET).code == new_runtime + anatomy.metadata


def test_fix_deployment_constructor_patch(fixtures):
    fx = fixtures["suicidal"]
    anatomy = split_anatomy(fx.code)
    ctor = instantiate(CAT["access_control"][0], PatchContext(free_storage_key=5), 0,
                       "access_control", tag="bug0")
    code, _ = fix_deployment(anatomy, anatomy.runtime, [ctor])
    assert len(code) == len(fx.code) + 4  # CALLER PUSH1 0x05 SSTORE
    world, res = deploy(WorldState(), ALICE, code, TARGET)
    assert res.success
    assert world.storage_of(TARGET)[5] == ALICE
    assert world.storage_of(TARGET)[0] == 7
    assert world.get(TARGET).code == anatomy.runtime + anatomy.metadata


def test_fix_deployment_runtime_only():
    code, _ = assemble_source("PUSH1 0x01 STOP")
    anatomy = split_anatomy(code)
    out, warnings = fix_deployment(anatomy, code + b"\x00")
    assert out == code + b"\x00" and warnings == []
