import random

import pytest
from hypothesis import given, settings, strategies as st

from ctxpatch.asm import disassemble, make
from ctxpatch.cfg import build_cfg, path_to_root
from ctxpatch.corpus import TRACE_ADD, TRACE_AND, TRACE_MASK, mask_trace_runtime
from ctxpatch.errors import TaintError
from ctxpatch.lasm import assemble_source
from ctxpatch.opcodes import OPCODES
from ctxpatch.taint import (CONCRETE_OPS, MASK, ShadowState, TaintedValue, mnemonics,
                            run_path, step, trace_path)


def straight(text):
    code, labels = assemble_source(text)
    return disassemble(code), labels


def test_push_example():
    ins = disassemble(bytes.fromhex("6005"))[0]
    state = step(ShadowState(), ins, mnemonics("PUSH"))
    assert state.stack == [TaintedValue(5, frozenset({(0, "PUSH1")}), frozenset({(0, "PUSH1")}))]


def test_step_does_not_mutate_input():
    ins = disassemble(bytes.fromhex("6005"))[0]
    before = ShadowState()
    step(before, ins, mnemonics("PUSH"))
    assert before.stack == []


def test_mask_trace_operands_carry_mask_and_and():
    code, labels = mask_trace_runtime()
    g = build_cfg(disassemble(code))
    ops = run_path(path_to_root(g, TRACE_ADD), mnemonics("PUSH", "AND"))
    operands = ops[TRACE_ADD]
    assert len(operands) == 2
    for op in operands:
        assert (TRACE_MASK, "PUSH4") in op.sources
        assert (TRACE_AND, "AND") in op.sources
        assert (TRACE_AND, "AND") in op.lineage


def test_memory_round_trip_at_0x40():
    path, _ = straight("PUSH1 0x2a PUSH1 0x40 MSTORE PUSH1 0x40 MLOAD")
    trace = trace_path(path, mnemonics("PUSH"))
    state = ShadowState()
    for ins in path:
        state = step(state, ins, mnemonics("PUSH"))
    top = state.stack[-1]
    assert top.concrete == 0x2A
    assert (0, "PUSH1") in top.sources
    assert trace[2][0].mnemonic == "MSTORE"


def test_unknown_offset_memory_taints_later_loads():
    path, _ = straight("CALLER CALLDATASIZE MSTORE PUSH1 0x00 MLOAD POP")
    ops = run_path(path, mnemonics("CALLER"))
    loaded = ops[path[-1].original_address][0]
    assert loaded.concrete is None
    assert any(name == "CALLER" for _, name in loaded.sources)


def test_empty_path():
    assert run_path([], mnemonics("PUSH")) == {}
    assert trace_path([], mnemonics("PUSH")) == []


def test_jumpi_condition_recorded():
    path, labels = straight("CALLER PUSH1 0x00 EQ @end JUMPI end: STOP")
    ops = run_path(path, mnemonics("CALLER"))
    jumpi = next(i.original_address for i in path if i.mnemonic == "JUMPI")
    target, cond = ops[jumpi]
    assert target.concrete == labels["end"]
    assert {name for _, name in cond.sources} == {"CALLER"}


def test_underflow_raises():
    with pytest.raises(TaintError):
        trace_path(disassemble(bytes.fromhex("600101")), mnemonics("PUSH"))


def test_sha3_seed_is_slot_constant():
    path, _ = straight("CALLER PUSH1 0x00 MSTORE PUSH1 0x03 PUSH1 0x20 MSTORE "
                       "PUSH1 0x40 PUSH1 0x00 SHA3 SLOAD")
    ops = run_path(path, mnemonics("PUSH"))
    sload = next(i.original_address for i in path if i.mnemonic == "SLOAD")
    key = ops[sload][0]
    assert key.concrete is None
    assert key.seed == 3


def test_storage_round_trip():
    path, _ = straight("CALLER PUSH1 0x05 SSTORE PUSH1 0x05 SLOAD POP")
    ops = run_path(path, mnemonics("CALLER"))
    pop = path[-1].original_address
    assert {n for _, n in ops[pop][0].sources} == {"CALLER"}


def test_dup_and_swap_move_values():
    path, _ = straight("PUSH1 0x01 PUSH1 0x02 SWAP1 DUP2")
    state = ShadowState()
    for ins in path:
        state = step(state, ins, mnemonics())
    assert [v.concrete for v in state.stack] == [2, 1, 2]


def _stack_opcodes():
    return [op for op in OPCODES.values()
            if op.assigned and op.mnemonic not in ("INVALID",)]


def test_stack_effects_match_opcode_table():
    for op in _stack_opcodes():
        ins = make(op.mnemonic, 0) if op.is_push else make(op.mnemonic)
        state = ShadowState(stack=[TaintedValue(i) for i in range(20)])
        after = step(state, ins, mnemonics())
        assert len(after.stack) == 20 - op.stack_pops + op.stack_pushes, op.mnemonic


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(sorted(CONCRETE_OPS)), st.lists(st.integers(0, MASK), min_size=3,
                                                       max_size=3))
def test_concrete_matches_step(name, values):
    op = make(name)
    args = values[:op.opcode.stack_pops]
    # Operand 0 is the top of the stack.
    state = ShadowState(stack=[TaintedValue(v) for v in reversed(args)])
    after = step(state, op, mnemonics())
    assert after.stack[-1].concrete == CONCRETE_OPS[name](*args)


def test_signextend_and_sar_examples():
    assert CONCRETE_OPS["SIGNEXTEND"](0, 0xFF) == MASK
    assert CONCRETE_OPS["SIGNEXTEND"](0, 0x7F) == 0x7F
    assert CONCRETE_OPS["SAR"](4, MASK) == MASK
    assert CONCRETE_OPS["SDIV"](MASK, 1) == MASK
    assert CONCRETE_OPS["BYTE"](31, 0x1234) == 0x34


def test_random_straight_line_programs_do_not_crash():
    rng = random.Random(7)
    for _ in range(200):
        depth, body = 0, []
        for _ in range(30):
            if depth < 2 or rng.random() < 0.4:
                body.append(f"PUSH1 {rng.randrange(256):#x}")
                depth += 1
            else:
                name = rng.choice(sorted(n for n in CONCRETE_OPS
                                         if make(n).opcode.stack_pops <= 2))
                body.append(name)
                depth += 1 - make(name).opcode.stack_pops
        trace_path(disassemble(assemble_source(" ".join(body))[0]), mnemonics("PUSH"))
