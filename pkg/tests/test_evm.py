import pytest
from hypothesis import given, settings, strategies as st

from ctxpatch import evm
from ctxpatch.evm import (INVALID, OUT_OF_GAS, REVERT, SUCCESS, Transaction, WorldState,
                          deploy, execute, intrinsic_gas, keccak256)
from ctxpatch.lasm import assemble_source
from ctxpatch.taint import CONCRETE_OPS

ME, YOU, THEM = 0xC0DE, 0xA11CE, 0xB0B


def world_with(code, balance=0, **others):
    w = WorldState()
    acct = w.account(ME)
    acct.code = assemble_source(code)[0] if isinstance(code, str) else code
    acct.balance = balance
    w.account(YOU).balance = 10 ** 20
    for addr, src in others.items():
        w.account(int(addr, 16)).code = assemble_source(src)[0]
    return w


def run(code, data=b"", value=0, gas=1_000_000, **kw):
    return execute(world_with(code, **kw), Transaction(YOU, ME, value, data, gas))


def test_keccak_empty():
    assert keccak256(b"").hex() == \
        "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"


def test_one_plus_two():
    _, res = run("PUSH1 0x02 PUSH1 0x01 ADD PUSH1 0x00 MSTORE PUSH1 0x20 PUSH1 0x00 RETURN")
    assert res.status == SUCCESS
    assert int.from_bytes(res.return_data, "big") == 3


def test_signextend_example():
    _, res = run("PUSH1 0xff PUSH1 0x00 SIGNEXTEND PUSH1 0x00 MSTORE PUSH1 0x20 PUSH1 0x00 RETURN")
    assert int.from_bytes(res.return_data, "big") == evm.MAX_WORD


def test_storage_delta_and_gas():
    w, res = run("PUSH1 0x2a PUSH1 0x01 SSTORE PUSH1 0x2b PUSH1 0x01 SSTORE STOP")
    assert res.storage_delta == {ME: {1: 0x2B}}
    # 21000 base + 4 pushes + 20000 fresh store + 5000 overwrite.
    assert res.gas_used == 21000 + 4 * 3 + 20000 + 5000
    assert w.storage_of(ME) == {1: 0x2B}


def test_revert_rolls_back_state():
    w0 = world_with("PUSH1 0x01 PUSH1 0x00 SSTORE PUSH1 0x00 DUP1 REVERT")
    w1, res = execute(w0, Transaction(YOU, ME, 5, b""))
    assert res.status == REVERT
    assert w1 is w0
    assert res.storage_delta == {}
    assert w0.balance_of(ME) == 0


def test_gas_used_never_exceeds_limit():
    for gas in (21000, 21010, 25000, 60000):
        _, res = run("loop: PUSH1 0x01 POP @loop JUMP", gas=gas)
        assert res.status == OUT_OF_GAS
        assert res.gas_used == gas


def test_intrinsic_gas():
    assert intrinsic_gas(b"") == 21000
    assert intrinsic_gas(b"\x00\x01") == 21000 + 4 + 16
    _, res = run("STOP", data=b"\x01" * 10, gas=21000)
    assert res.status == OUT_OF_GAS


@pytest.mark.parametrize("code, status", [
    ("PUSH1 0x05 JUMP STOP STOP JUMPDEST STOP", SUCCESS),
    ("PUSH1 0x04 JUMP STOP STOP JUMPDEST STOP", INVALID),
    ("PUSH1 0x03 JUMP PUSH1 0x5b STOP", INVALID),   # JUMPDEST byte inside a PUSH
    ("ADD", INVALID),
    ("INVALID", INVALID),
    (bytes([0x0C]), INVALID),                       # unassigned byte
    ("PUSH1 0x00 PUSH1 0x00 CREATE", INVALID),
])
def test_halts(code, status):
    _, res = run(code)
    assert res.status == status


def test_stack_overflow():
    _, res = run("loop: PUSH1 0x01 @loop JUMP")
    assert res.status == INVALID


def test_value_transfer_and_balance():
    w, res = run("SELFBALANCE PUSH1 0x00 MSTORE PUSH1 0x20 PUSH1 0x00 RETURN", value=7)
    assert int.from_bytes(res.return_data, "big") == 7
    assert w.balance_of(ME) == 7


def test_insufficient_balance_reverts():
    w = world_with("STOP")
    w.account(THEM).balance = 1
    _, res = execute(w, Transaction(THEM, ME, 2, b""))
    assert res.status == REVERT


def test_call_forwards_value_and_records_nesting():
    caller = ("PUSH1 0x00 DUP1 DUP1 DUP1 PUSH1 0x03 PUSH2 0x0b0b GAS CALL "
              "PUSH1 0x00 SSTORE STOP")
    w = world_with(caller, balance=10, **{"0xb0b": "CALLER PUSH1 0x00 SSTORE STOP"})
    w2, res = execute(w, Transaction(YOU, ME, 0, b""))
    assert res.success
    assert w2.storage_of(ME) == {0: 1}
    assert w2.storage_of(THEM) == {0: ME}
    assert w2.balance_of(THEM) == 3
    assert res.max_nesting == {ME: 1}


def test_failed_subcall_returns_zero_and_rolls_back_callee():
    caller = "PUSH1 0x00 DUP1 DUP1 DUP1 DUP1 PUSH2 0x0b0b GAS CALL PUSH1 0x05 SSTORE STOP"
    w = world_with(caller, **{"0xb0b": "PUSH1 0x01 PUSH1 0x00 SSTORE INVALID"})
    w2, res = execute(w, Transaction(YOU, ME, 0, b""))
    assert res.success
    assert w2.storage_of(THEM) == {}
    assert 5 not in w2.storage_of(ME)


def test_reentry_counts_nesting():
    # ME calls THEM, which calls back into ME once (guarded by slot 0 of THEM).
    me = ("PUSH1 0x00 DUP1 DUP1 DUP1 DUP1 PUSH2 0x0b0b GAS CALL STOP")
    them = ("PUSH1 0x00 SLOAD @done JUMPI PUSH1 0x01 PUSH1 0x00 SSTORE "
            "PUSH1 0x00 DUP1 DUP1 DUP1 DUP1 PUSH2 0xc0de GAS CALL POP done: STOP")
    w = world_with(me, **{"0xb0b": them})
    _, res = execute(w, Transaction(YOU, ME, 0, b""))
    assert res.success
    assert res.max_nesting[ME] == 2


def test_deep_self_recursion_terminates():
    me = "PUSH1 0x00 DUP1 DUP1 DUP1 DUP1 ADDRESS GAS CALL PUSH1 0x00 SSTORE STOP"
    _, res = run(me, gas=30_000_000)
    assert res.status in (SUCCESS, OUT_OF_GAS)


def test_selfdestruct_sends_balance():
    w, res = run("PUSH2 0x0b0b SELFDESTRUCT", balance=9)
    assert res.success
    assert w.balance_of(THEM) == 9
    assert w.get(ME).code == b""


def test_delegatecall_uses_caller_storage():
    me = "PUSH1 0x00 DUP1 DUP1 DUP1 PUSH2 0x0b0b GAS DELEGATECALL STOP"
    w = world_with(me, **{"0xb0b": "CALLER PUSH1 0x07 SSTORE STOP"})
    w2, res = execute(w, Transaction(YOU, ME, 0, b""))
    assert w2.storage_of(ME) == {7: YOU}
    assert w2.storage_of(THEM) == {}


def test_deploy_installs_runtime():
    runtime = assemble_source("PUSH1 0x01 STOP")[0]
    init = assemble_source(f"PUSH1 {len(runtime)} DUP1 PUSH1 0x0b PUSH1 0x00 CODECOPY "
                           "PUSH1 0x00 RETURN")[0]
    assert len(init) == 11
    w, res = deploy(WorldState(), YOU, init + runtime, ME)
    assert res.success and w.get(ME).code == runtime


def test_origin_differs_from_caller():
    me = "PUSH1 0x00 DUP1 DUP1 DUP1 DUP1 PUSH2 0x0b0b GAS CALL STOP"
    w = world_with(me, **{"0xb0b": "ORIGIN PUSH1 0x00 SSTORE CALLER PUSH1 0x01 SSTORE STOP"})
    w2, _ = execute(w, Transaction(YOU, ME, 0, b""))
    assert w2.storage_of(THEM) == {0: YOU, 1: ME}


def test_trace_records_steps():
    w = world_with("PUSH1 0x01 POP STOP")
    _, res = execute(w, Transaction(YOU, ME, 0, b""), trace=True)
    assert res.trace == [(ME, 0, "PUSH1"), (ME, 2, "POP"), (ME, 3, "STOP")]


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(sorted(evm.ARITHMETIC)),
       st.lists(st.integers(0, evm.MAX_WORD), min_size=3, max_size=3))
def test_interpreter_matches_taint_evaluator(name, args):
    fn = evm.ARITHMETIC[name]
    n = fn.__code__.co_argcount
    assert fn(*args[:n]) == CONCRETE_OPS[name](*args[:n])


def test_signextend_32_bit_example():
    assert evm.op_signextend(3, 0x80000000) == evm.MAX_WORD - 0x7FFFFFFF
    assert evm.op_signextend(3, 0x80000000) == CONCRETE_OPS["SIGNEXTEND"](3, 0x80000000)


def test_reentrancy_attacker_drains_unpatched_bank(fixtures, patched):
    from ctxpatch.corpus import ATTACKER, ETHER, TARGET
    from ctxpatch.harness import replay
    fx = fixtures["reentrancy_same"]
    i = fx.scenario.labels.index("attack")
    world, results = replay(fx.code, fx.scenario)
    attack = results[i]
    assert attack.success
    # The attacker paid in 1 ether and leaves with more than that.
    assert world.balance_of(ATTACKER) > 1 * ETHER
    assert attack.max_nesting[TARGET] >= 2
    world, results = replay(patched["reentrancy_same"][0], fx.scenario)
    assert results[i].status == REVERT
    assert world.balance_of(ATTACKER) == 0
