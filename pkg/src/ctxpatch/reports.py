"""Bug-report ingestion and patch-report emission.

A bug report is a JSON list of ``{"pc", "opcode", "vulnerability"}`` records
(plus an optional ``"detector"`` string), or an object holding such a list
under ``"bugs"``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .asm import disassemble
from .errors import ReportError
from .opcodes import ALIASES

BUG_VULNERABILITIES = (
    "reentrancy", "tx_origin", "suicidal", "leaking", "unsafe_delegatecall",
    "overflow_add", "overflow_mul", "underflow_sub", "unhandled_exception",
)

# Which opcode each vulnerability class may be reported at.
COMPATIBLE = {
    "overflow_add": {"ADD"},
    "overflow_mul": {"MUL"},
    "underflow_sub": {"SUB"},
    "reentrancy": {"CALL"},
    "tx_origin": {"ORIGIN"},
    "unhandled_exception": {"CALL"},
    "suicidal": {"SELFDESTRUCT"},
    "leaking": {"CALL"},
    "unsafe_delegatecall": {"DELEGATECALL"},
}

# Vulnerability class in the bug report → template class that fixes it.
TEMPLATE_FOR = {
    "suicidal": "access_control",
    "leaking": "access_control",
    "unsafe_delegatecall": "access_control",
}

STATUSES = ("patched", "skipped", "failed")


def template_class(vulnerability):
    return TEMPLATE_FOR.get(vulnerability, vulnerability)


@dataclass(frozen=True)
class BugEntry:
    pc: int
    opcode: str
    vulnerability: str
    detector: Optional[str] = None

    def to_json(self):
        out = {"pc": self.pc, "opcode": self.opcode, "vulnerability": self.vulnerability}
        if self.detector is not None:
            out["detector"] = self.detector
        return out


def _load_json(source):
    if isinstance(source, (list, dict)):
        return source
    text = str(source)
    if not text.lstrip().startswith(("[", "{")):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ReportError(f"cannot read bug report: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportError(f"invalid JSON: {exc}") from None


def _parse_entry(rec, pointer):
    if not isinstance(rec, dict):
        raise ReportError("entry must be an object", pointer)
    for key in ("pc", "opcode", "vulnerability"):
        if key not in rec:
            raise ReportError(f"missing field {key!r}", pointer)
    pc = rec["pc"]
    if isinstance(pc, str):
        try:
            pc = int(pc, 0)
        except ValueError:
            raise ReportError(f"pc {pc!r} is not an integer", pointer + "/pc") from None
    if isinstance(pc, bool) or not isinstance(pc, int) or pc < 0:
        raise ReportError("pc must be a non-negative integer", pointer + "/pc")
    opcode = rec["opcode"]
    if not isinstance(opcode, str):
        raise ReportError("opcode must be a string", pointer + "/opcode")
    opcode = ALIASES.get(opcode.upper(), opcode.upper())
    vuln = rec["vulnerability"]
    if vuln not in BUG_VULNERABILITIES:
        raise ReportError(f"unknown vulnerability {vuln!r}", pointer + "/vulnerability")
    if opcode not in COMPATIBLE[vuln]:
        raise ReportError(
            f"vulnerability {vuln} cannot occur at opcode {opcode} "
            f"(expected {'/'.join(sorted(COMPATIBLE[vuln]))})", pointer + "/opcode")
    detector = rec.get("detector")
    if detector is not None and not isinstance(detector, str):
        raise ReportError("detector must be a string", pointer + "/detector")
    return BugEntry(pc, opcode, vuln, detector)


def load_bug_report(source, code=None):
    """Parse and validate a bug report; ``code`` (runtime bytes) enables the
    opcode-at-pc check."""
    data = _load_json(source)
    base = ""
    if isinstance(data, dict):
        if "bugs" not in data:
            raise ReportError("object report needs a 'bugs' list", "")
        data, base = data["bugs"], "/bugs"
    if not isinstance(data, list):
        raise ReportError("bug report must be a list", base)
    at = None
    if code is not None:
        at = {ins.original_address: ins for ins in disassemble(code)}
    out, seen = [], set()
    for i, rec in enumerate(data):
        pointer = f"{base}/{i}"
        entry = _parse_entry(rec, pointer)
        if at is not None:
            ins = at.get(entry.pc)
            if ins is None:
                raise ReportError(
                    f"pc {entry.pc:#x} is not an instruction boundary of the "
                    f"{len(code)}-byte runtime code", pointer + "/pc")
            if ins.mnemonic != entry.opcode:
                raise ReportError(
                    f"pc {entry.pc:#x}: report declares {entry.opcode} but code has "
                    f"{ins.mnemonic}", pointer + "/opcode")
        key = (entry.pc, entry.vulnerability)
        if key not in seen:
            seen.add(key)
            out.append(entry)
    return out


@dataclass
class PatchEntry:
    bug: BugEntry
    status: str = "patched"
    reason: str = ""
    bytes_inserted: int = 0
    storage_slots_allocated: List[int] = field(default_factory=list)

    def to_json(self):
        return {
            "bug": self.bug.to_json(),
            "status": self.status,
            "reason": self.reason,
            "bytes_inserted": self.bytes_inserted,
            "storage_slots_allocated": [hex(s) for s in self.storage_slots_allocated],
        }


@dataclass
class PatchReport:
    contract_id: str
    entries: List[PatchEntry] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    original_size: int = 0
    patched_size: int = 0

    @property
    def all_patched(self):
        return all(e.status == "patched" for e in self.entries)

    @property
    def allocated_slots(self):
        return sorted({s for e in self.entries for s in e.storage_slots_allocated})

    def to_json(self):
        return {
            "contract_id": self.contract_id,
            "entries": [e.to_json() for e in self.entries],
            "timings": {k: round(v, 3) for k, v in self.timings.items()},
            "warnings": list(self.warnings),
            "original_size": self.original_size,
            "patched_size": self.patched_size,
        }


def emit_patch_report(report):
    return json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"


def load_patch_report(source):
    data = _load_json(source)
    if not isinstance(data, dict) or "contract_id" not in data or "entries" not in data:
        raise ReportError("patch report needs 'contract_id' and 'entries'", "")
    entries = []
    for i, rec in enumerate(data["entries"]):
        pointer = f"/entries/{i}"
        if rec.get("status") not in STATUSES:
            raise ReportError(f"bad status {rec.get('status')!r}", pointer + "/status")
        entries.append(PatchEntry(
            _parse_entry(rec.get("bug"), pointer + "/bug"),
            rec["status"], rec.get("reason", ""), int(rec.get("bytes_inserted", 0)),
            [int(s, 16) if isinstance(s, str) else int(s)
             for s in rec.get("storage_slots_allocated", [])],
        ))
    return PatchReport(data["contract_id"], entries, dict(data.get("timings", {})),
                       list(data.get("warnings", [])), int(data.get("original_size", 0)),
                       int(data.get("patched_size", 0)))
