import json

import pytest
from hypothesis import given, strategies as st

from ctxpatch.errors import ReportError
from ctxpatch.pipeline import PatchOptions, patch_contract
from ctxpatch.reports import (BUG_VULNERABILITIES, COMPATIBLE, STATUSES, BugEntry, PatchEntry,
                              PatchReport, emit_patch_report, load_bug_report,
                              load_patch_report, template_class)


def test_example_entry(fixtures):
    fx = fixtures["overflow_uint16"]
    bugs = load_bug_report('[{"pc": 165, "opcode": "ADD", "vulnerability": "overflow_add"}]',
                           code=fx.runtime)
    assert bugs == [BugEntry(0xA5, "ADD", "overflow_add")]


def test_hex_pc_alias_and_object_form():
    bugs = load_bug_report({"bugs": [{"pc": "0x10", "opcode": "suicide",
                                      "vulnerability": "suicidal", "detector": "x"}]})
    assert bugs == [BugEntry(0x10, "SELFDESTRUCT", "suicidal", "x")]


def test_duplicates_collapse():
    rec = {"pc": 3, "opcode": "ADD", "vulnerability": "overflow_add"}
    assert len(load_bug_report([rec, rec])) == 1


@pytest.mark.parametrize("report, pointer", [
    ([{"opcode": "ADD", "vulnerability": "overflow_add"}], "/0"),
    ([{"pc": -1, "opcode": "ADD", "vulnerability": "overflow_add"}], "/0/pc"),
    ([{"pc": "zz", "opcode": "ADD", "vulnerability": "overflow_add"}], "/0/pc"),
    ([{"pc": True, "opcode": "ADD", "vulnerability": "overflow_add"}], "/0/pc"),
    ([{"pc": 1, "opcode": 5, "vulnerability": "overflow_add"}], "/0/opcode"),
    ([{"pc": 1, "opcode": "ADD", "vulnerability": "gremlins"}], "/0/vulnerability"),
    ([{"pc": 1, "opcode": "MUL", "vulnerability": "overflow_add"}], "/0/opcode"),
    ([{"pc": 1, "opcode": "ADD", "vulnerability": "overflow_add", "detector": 3}],
     "/0/detector"),
    ({"bugs": [5]}, "/bugs/0"),
    ({"nope": []}, ""),
    ("5", ""),
])
def test_bad_reports_name_a_pointer(report, pointer):
    with pytest.raises(ReportError) as exc:
        load_bug_report(report)
    assert exc.value.pointer == pointer


def test_pc_checked_against_code(fixtures):
    fx = fixtures["overflow_uint16"]
    with pytest.raises(ReportError, match="instruction boundary") as exc:
        load_bug_report([{"pc": 0xA7, "opcode": "ADD", "vulnerability": "overflow_add"}],
                        code=fx.runtime)
    assert exc.value.pointer == "/0/pc"
    with pytest.raises(ReportError, match="code has") as exc:
        load_bug_report([{"pc": 0, "opcode": "ADD", "vulnerability": "overflow_add"}],
                        code=fx.runtime)
    assert exc.value.pointer == "/0/opcode"


def test_invalid_json_and_missing_file(tmp_path):
    with pytest.raises(ReportError, match="invalid JSON"):
        load_bug_report("[1,")
    with pytest.raises(ReportError, match="cannot read"):
        load_bug_report(str(tmp_path / "missing.json"))


def test_compatibility_table_is_exhaustive():
    opcodes = {"ADD", "MUL", "SUB", "CALL", "ORIGIN", "SELFDESTRUCT", "DELEGATECALL"}
    assert set(COMPATIBLE) == set(BUG_VULNERABILITIES)
    for vuln in BUG_VULNERABILITIES:
        for op in opcodes:
            rec = [{"pc": 0, "opcode": op, "vulnerability": vuln}]
            if op in COMPATIBLE[vuln]:
                assert load_bug_report(rec)[0].opcode == op
            else:
                with pytest.raises(ReportError):
                    load_bug_report(rec)


def test_template_classes():
    assert template_class("suicidal") == "access_control"
    assert template_class("leaking") == "access_control"
    assert template_class("unsafe_delegatecall") == "access_control"
    assert template_class("reentrancy") == "reentrancy"


def test_patch_report_round_trip(patched):
    for name, (_, report) in patched.items():
        text = emit_patch_report(report)
        back = load_patch_report(text)
        assert emit_patch_report(back) == text
        assert json.loads(text)["contract_id"] == name


def test_patch_report_fields(patched):
    _, report = patched["overflow_uint16"]
    data = report.to_json()
    assert set(data) == {"contract_id", "entries", "timings", "warnings", "original_size",
                         "patched_size"}
    entry = data["entries"][0]
    assert entry["bug"] == {"pc": 0xA5, "opcode": "ADD", "vulnerability": "overflow_add"}
    assert entry["status"] == "patched" and entry["bytes_inserted"] == 16
    assert data["patched_size"] == data["original_size"] + 16
    assert set(data["timings"]) == {"anatomy", "cfg", "inference", "generation", "rewriting"}


def test_uint32_guard_is_18_bytes(patched):
    _, report = patched["overflow_uint32"]
    assert report.entries[0].bytes_inserted == 18


def test_skipped_unreachable_reason():
    from ctxpatch.lasm import assemble_source
    code, l = assemble_source("""
        PUSH1 0x00 CALLDATALOAD @end JUMPI STOP
        dead: PUSH1 0x01 DUP1 =bug ADD POP STOP
        end: STOP
    """)
    bugs = [BugEntry(l["bug"], "ADD", "overflow_add")]
    out, report = patch_contract(code, bugs)
    assert out == code
    assert report.entries[0].status == "skipped"
    assert report.entries[0].reason == "unreachable block"
    assert any("--force" in w for w in report.warnings)
    back = load_patch_report(emit_patch_report(report))
    assert back.entries[0].reason == "unreachable block"
    out, report = patch_contract(code, bugs, PatchOptions(force=True))
    # No path reaches the ADD, so the guard falls back to full-word bounds.
    assert report.all_patched and len(out) == len(code) + 16 + 30
    assert any("assuming uint256" in w for w in report.warnings)


def test_load_patch_report_rejects_bad_status():
    rep = PatchReport("c", [PatchEntry(BugEntry(1, "ADD", "overflow_add"), status="weird")])
    with pytest.raises(ReportError) as exc:
        load_patch_report(rep.to_json())
    assert exc.value.pointer == "/entries/0/status"
    with pytest.raises(ReportError):
        load_patch_report({"entries": []})


@given(st.lists(st.tuples(st.integers(0, 2**20), st.sampled_from(BUG_VULNERABILITIES),
                          st.sampled_from(STATUSES), st.lists(st.integers(0, 2**64)))))
def test_random_patch_reports_round_trip(rows):
    entries = [PatchEntry(BugEntry(pc, sorted(COMPATIBLE[v])[0], v), s, "r", pc % 40, slots)
               for pc, v, s, slots in rows]
    rep = PatchReport("x", entries, {"cfg": 1.5}, ["w"], 10, 20)
    assert load_patch_report(emit_patch_report(rep)) == rep


def test_empty_bug_report():
    assert load_bug_report("[]") == []


def test_empty_patch_report_shape(fixtures):
    out, report = patch_contract(fixtures["tx_origin"].code, [],
                                 PatchOptions(contract_id="tx_origin"))
    data = json.loads(emit_patch_report(report))
    assert data["contract_id"] == "tx_origin" and data["entries"] == []
    assert isinstance(data["timings"], dict)
    assert list(data) == sorted(data)
