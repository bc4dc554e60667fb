import random

from ctxpatch.asm import disassemble, split_anatomy
from ctxpatch.cfg import build_cfg
from ctxpatch.corpus import ALICE, TARGET, calldata
from ctxpatch.evm import REVERT, SUCCESS
from ctxpatch.fuzz import random_contract
from ctxpatch.evm import Transaction, execute
from ctxpatch.harness import build_world, replay
from ctxpatch.lasm import assemble_source
from ctxpatch.pipeline import PatchOptions, patch_contract
from ctxpatch.reports import BugEntry
from ctxpatch.templates import load_templates


def test_reentrancy_lock_wraps_the_call(fixtures, patched):
    fx = fixtures["reentrancy_same"]
    out, report = patched["reentrancy_same"]
    (slot,) = report.allocated_slots
    runtime = split_anatomy(out).runtime
    ins = disassemble(runtime)
    call = next(k for k, i in enumerate(ins) if i.mnemonic == "CALL")
    before = [i.mnemonic for i in ins[call - 14: call]]
    # ... PUSH slot SSTORE (lock taken) right before the call's arguments.
    lock = [k for k in range(call) if ins[k].mnemonic == "SSTORE"
            and ins[k - 1].opcode.is_push and ins[k - 1].value == slot
            and ins[k - 2].opcode.is_push and ins[k - 2].value == 1]
    assert lock, before
    after = ins[call + 1: call + 4]
    assert [i.mnemonic for i in after][2] == "SSTORE"
    assert after[0].value == 0 and after[1].value == slot
    # Plain withdrawal still works and the attack reverts.
    _, orig = replay(fx.code, fx.scenario)
    _, new = replay(out, fx.scenario)
    for label, a, b in zip(fx.scenario.labels, orig, new):
        if label == "benign":
            assert a.status == b.status == SUCCESS
        else:
            assert b.status == REVERT


def test_reentrancy_guards_exposed_shared_writes(fixtures, patched):
    fx = fixtures["reentrancy_same"]
    out, report = patched["reentrancy_same"]
    # Lock 20 bytes, unlock 5 and the lock check before the deposit store 15;
    # the lock's label PUSH widens to PUSH2 because its target passes 0xff.
    assert report.entries[0].bytes_inserted == 20 + 5 + 15 + 1
    assert len(split_anatomy(out).runtime) == len(fx.runtime) + 41


def test_uint32_overflow(fixtures, patched):
    fx = fixtures["overflow_uint32"]
    out, report = patched["overflow_uint32"]
    w_orig, orig = replay(fx.code, fx.scenario)
    w_new, new = replay(out, fx.scenario)
    attack = fx.scenario.labels.index("attack")
    assert orig[attack].status == SUCCESS and new[attack].status == REVERT
    # In-bounds buys leave identical storage.
    for k, label in enumerate(fx.scenario.labels):
        if label == "benign":
            assert orig[k].storage_delta == new[k].storage_delta


def test_empty_report_is_identity(fixtures):
    for fx in fixtures.values():
        out, report = patch_contract(fx.code, [])
        assert out == fx.code
        assert report.entries == [] and report.patched_size == len(fx.code)


def test_empty_report_identity_on_fuzz():
    rng = random.Random(11)
    for _ in range(100):
        c = random_contract(rng)
        assert patch_contract(c.code, [])[0] == c.code


def test_partial_failure_keeps_other_patches(fixtures):
    fx = fixtures["overflow_uint32"]
    # A template whose delete does not match the code fails that bug only.
    broken = load_templates('{"overflow_mul": {"delete": "MUL", "insert": "ADD", '
                            '"insert_mode": "before", "constructor": false}}')
    bugs = fx.bugs + [BugEntry(fx.bug_pc, "MUL", "overflow_mul")]
    out, report = patch_contract(fx.code, bugs, PatchOptions(templates=broken))
    assert [e.status for e in report.entries] == ["patched", "failed"]
    assert "deletes MUL" in report.entries[1].reason
    assert report.entries[1].bytes_inserted == 0
    assert len(out) == len(fx.code) + 18


def test_missing_template_fails_bug():
    code, l = assemble_source("PUSH1 0x01 DUP1 =bug ADD POP STOP")
    out, report = patch_contract(code, [BugEntry(l["bug"], "ADD", "overflow_add")],
                                 PatchOptions(templates={"overflow_add": []}))
    assert report.entries[0].status == "failed"
    assert "no template" in report.entries[0].reason
    assert out == code


def test_unreachable_gate_skips_then_force_patches():
    code, l = assemble_source("""
        PUSH1 0x00 CALLDATALOAD @end JUMPI
        PUSH1 0x04 CALLDATALOAD DUP1 =bug ADD POP STOP
        island: PUSH1 0x00 POP STOP
        end: STOP
    """)
    bugs = [BugEntry(l["bug"], "ADD", "overflow_add")]
    out, report = patch_contract(code, bugs)
    assert out == code
    assert report.entries[0].status == "skipped"
    assert any("unreachable" in w for w in report.warnings)
    out, report = patch_contract(code, bugs, PatchOptions(force=True))
    assert report.all_patched
    assert len(out) == len(code) + 46  # PUSH32 bounds: the ADD is unmasked


def test_access_control_reuses_owner(fixtures, patched):
    _, report = patched["leaking"]
    assert report.allocated_slots == []
    _, report = patched["suicidal"]
    assert len(report.allocated_slots) == 1


def test_shared_owner_slot_across_bugs():
    from ctxpatch.corpus import build_contract
    code, runtime, l = build_contract("PUSH1 0x01 PUSH1 0x00 SSTORE", """
        PUSH1 0x00 CALLDATALOAD @two JUMPI
        CALLER =one SELFDESTRUCT
        two: CALLER =bug SELFDESTRUCT
    """, "twokill")
    bugs = [BugEntry(l["one"], "SELFDESTRUCT", "suicidal"),
            BugEntry(l["bug"], "SELFDESTRUCT", "suicidal")]
    out, report = patch_contract(code, bugs)
    assert report.all_patched
    # Both guards read one fresh slot; only the first bug pays for the
    # constructor store.
    assert [e.storage_slots_allocated for e in report.entries] == [[1], [1]]
    assert report.entries[0].bytes_inserted == report.entries[1].bytes_inserted + 4


def test_report_sizes_and_timings(patched, fixtures):
    for name, (out, report) in patched.items():
        assert report.original_size == len(fixtures[name].code)
        assert report.patched_size == len(out)
        growth = len(out) - len(fixtures[name].code)
        # The tx-origin patch swaps one byte for one byte.
        deleted = sum(e.bug.vulnerability == "tx_origin" for e in report.entries)
        assert sum(e.bytes_inserted for e in report.entries) - deleted == growth
        assert all(v >= 0 for v in report.timings.values())


def test_pipeline_output_has_no_invalid_jumps(patched):
    from ctxpatch.cfg import invalid_jump_targets
    for name, (out, _) in patched.items():
        g = build_cfg(disassemble(split_anatomy(out).runtime))
        assert invalid_jump_targets(g) == [], name


def test_signed_add_guard_limitation(fixtures, patched):
    # The int32 guard compares unsigned words against 0x7fffffff.  A real
    # signed underflow is blocked, but so is adding to a negative balance.
    fx = fixtures["overflow_int32"]
    out, _ = patched["overflow_int32"]
    word = 1 << 256

    def run(code, amounts):
        world, statuses = build_world(code, fx.scenario), []
        for v in amounts:
            world, res = execute(world, Transaction(ALICE, TARGET, 0,
                                                    calldata("buy(int32)", v)))
            statuses.append(res.status)
        return statuses

    assert run(out, [5, word - 1]) == [SUCCESS, SUCCESS]
    assert run(out, [word - 2 ** 31, word - 1]) == [SUCCESS, REVERT]
    assert run(fx.code, [word - 1, 5]) == [SUCCESS, SUCCESS]
    assert run(out, [word - 1, 5]) == [SUCCESS, REVERT]  # false positive
