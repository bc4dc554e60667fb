"""Differential replay of transaction scenarios on original and patched code.

A scenario is JSON::

    {"target": "0xc0de", "deployer": "0xd0", "deploy_value": 0,
     "accounts": [{"address": "0xa77", "balance": 10, "code": "0x..."}],
     "transactions": [{"from": "0xa11ce", "to": "0xc0de", "value": 0,
                       "data": "0x...", "gas_limit": 300000, "label": "benign"}]}

The code under test is installed at ``target``: deployment bytecode is run
as a constructor, runtime-only bytecode is installed directly.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .asm import split_anatomy
from .evm import SUCCESS, Account, Transaction, WorldState, deploy, execute

GAS_RETRY_FACTOR = 1.25
LABELS = ("benign", "attack")


def _int(v, default=0):
    if v is None:
        return default
    return int(v, 0) if isinstance(v, str) else int(v)


def _bytes(v):
    if not v:
        return b""
    if isinstance(v, (bytes, bytearray)):
        return bytes(v)
    v = v[2:] if v[:2].lower() == "0x" else v
    return bytes.fromhex(v)


@dataclass
class AccountSpec:
    address: int
    balance: int = 0
    code: bytes = b""
    storage: dict = field(default_factory=dict)


@dataclass
class Scenario:
    target: int = 0xC0DE
    deployer: int = 0xD0
    deploy_value: int = 0
    accounts: List[AccountSpec] = field(default_factory=list)
    transactions: List[Transaction] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)

    @classmethod
    def from_json(cls, data):
        if isinstance(data, (str, Path)):
            text = str(data)
            if not text.lstrip().startswith("{"):
                text = Path(data).read_text()
            data = json.loads(text)
        accounts = [AccountSpec(_int(a["address"]), _int(a.get("balance")),
                                _bytes(a.get("code")),
                                {_int(k): _int(v) for k, v in a.get("storage", {}).items()})
                    for a in data.get("accounts", [])]
        txs, labels = [], []
        for t in data.get("transactions", []):
            label = t.get("label", "benign")
            if label not in LABELS:
                raise ValueError(f"transaction label must be benign or attack, got {label!r}")
            txs.append(Transaction(_int(t["from"]), _int(t.get("to", data.get("target"))),
                                   _int(t.get("value")), _bytes(t.get("data")),
                                   _int(t.get("gas_limit"), 3_000_000),
                                   _int(t["origin"]) if "origin" in t else None))
            labels.append(label)
        return cls(_int(data.get("target"), 0xC0DE), _int(data.get("deployer"), 0xD0),
                   _int(data.get("deploy_value")), accounts, txs, labels)

    def to_json(self):
        return {
            "target": hex(self.target),
            "deployer": hex(self.deployer),
            "deploy_value": self.deploy_value,
            "accounts": [{"address": hex(a.address), "balance": a.balance,
                          "code": "0x" + a.code.hex(),
                          "storage": {hex(k): hex(v) for k, v in a.storage.items()}}
                         for a in self.accounts],
            "transactions": [{"from": hex(t.sender), "to": hex(t.to), "value": t.value,
                              "data": "0x" + t.data.hex(), "gas_limit": t.gas_limit,
                              "origin": hex(t.origin), "label": label}
                             for t, label in zip(self.transactions, self.labels)],
        }


@dataclass
class TxVerdict:
    index: int
    label: str
    passed: bool
    original_status: str
    patched_status: str
    gas_original: int
    gas_patched: int
    reason: str = ""
    # Whether the benign comparison also holds with 1.25x the gas limit.
    match_with_more_gas: Optional[bool] = None

    @property
    def gas_delta(self):
        return self.gas_patched - self.gas_original


@dataclass
class DifferentialVerdict:
    transactions: List[TxVerdict] = field(default_factory=list)
    size_original: int = 0
    size_patched: int = 0
    error: Optional[str] = None

    @property
    def size_delta(self):
        return self.size_patched - self.size_original

    @property
    def passed(self):
        return self.error is None and all(t.passed for t in self.transactions)

    @property
    def failures(self):
        return [t for t in self.transactions if not t.passed]

    def benign_gas_deltas(self):
        return [t.gas_delta for t in self.transactions if t.label == "benign"]

    def table(self):
        rows = [f"{'#':>3} {'label':<7} {'original':<11} {'patched':<11} {'gas delta':>9}  verdict"]
        for t in self.transactions:
            rows.append(f"{t.index:>3} {t.label:<7} {t.original_status:<11} "
                        f"{t.patched_status:<11} {t.gas_delta:>9}  "
                        f"{'ok' if t.passed else 'FAIL ' + t.reason}")
        rows.append(f"code size: {self.size_original} -> {self.size_patched} "
                    f"({self.size_delta:+d} bytes)")
        if self.error:
            rows.append(f"error: {self.error}")
        return "\n".join(rows)


def build_world(code, scenario):
    """World with the scenario accounts and ``code`` installed at the target."""
    world = WorldState()
    for a in scenario.accounts:
        world.accounts[a.address] = Account(a.balance, a.code, dict(a.storage))
    if split_anatomy(code).has_deployment:
        world, result = deploy(world, scenario.deployer, code, scenario.target,
                               scenario.deploy_value)
        if result.status != SUCCESS:
            raise RuntimeError(f"deployment failed: {result.status}")
    else:
        acct = world.account(scenario.target)
        acct.code = bytes(code)
        acct.balance += scenario.deploy_value
    return world


def replay(code, scenario, gas_factor=1.0):
    world = build_world(code, scenario)
    results = []
    for tx in scenario.transactions:
        if gas_factor != 1.0:
            tx = Transaction(tx.sender, tx.to, tx.value, tx.data,
                             int(tx.gas_limit * gas_factor), tx.origin)
        world, res = execute(world, tx)
        results.append(res)
    return world, results


def _strip(delta, target, excluded):
    out = {}
    for addr, slots in delta.items():
        kept = {k: v for k, v in slots.items() if not (addr == target and k in excluded)}
        if kept:
            out[addr] = kept
    return out


def _same(a, b, target, excluded):
    if a.status != b.status:
        return f"status {a.status} vs {b.status}"
    if a.return_data != b.return_data:
        return "return data differs"
    if _strip(a.storage_delta, target, excluded) != _strip(b.storage_delta, target, excluded):
        return "storage differs"
    if a.logs != b.logs:
        return "logs differ"
    return ""


def differential_run(original, patched, scenario, labels=None, excluded_slots=()):
    """Replay ``scenario`` on both codes in fresh worlds and judge each tx.

    Benign transactions must match the original run (status, return data,
    logs and storage writes outside ``excluded_slots``); attack transactions
    must fail on the patched code.
    """
    labels = list(labels if labels is not None else scenario.labels)
    if len(labels) != len(scenario.transactions):
        raise ValueError("labels must parallel the scenario transactions")
    excluded = set(excluded_slots)
    verdict = DifferentialVerdict(size_original=len(original), size_patched=len(patched))
    try:
        _, orig = replay(original, scenario)
        _, new = replay(patched, scenario)
        _, orig_more = replay(original, scenario, GAS_RETRY_FACTOR)
        _, new_more = replay(patched, scenario, GAS_RETRY_FACTOR)
    except RuntimeError as exc:
        verdict.error = str(exc)
        return verdict
    for i, label in enumerate(labels):
        a, b = orig[i], new[i]
        if label == "benign":
            reason = _same(a, b, scenario.target, excluded)
            more = not _same(orig_more[i], new_more[i], scenario.target, excluded)
            tv = TxVerdict(i, label, not reason, a.status, b.status, a.gas_used,
                           b.gas_used, reason, more)
        else:
            blocked = b.status != SUCCESS
            tv = TxVerdict(i, label, blocked, a.status, b.status, a.gas_used, b.gas_used,
                           "" if blocked else "attack not blocked")
        verdict.transactions.append(tv)
    return verdict
