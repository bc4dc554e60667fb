"""
Locking out a reentrant withdrawal
==================================

``withdrawBalance`` sends ether before it zeroes the caller's balance.  An
attacker contract re-enters from its fallback and drains the bank.  The patch
wraps the call in a storage mutex held in a slot nobody else uses.
"""

from ctxpatch import corpus
from ctxpatch.asm import disassemble, split_anatomy
from ctxpatch.cfg import build_cfg
from ctxpatch.corpus import ATTACKER, ETHER, TARGET
from ctxpatch.harness import differential_run, replay
from ctxpatch.inference import infer_storage_layout
from ctxpatch.pipeline import patch_contract

fx = corpus.fixture("reentrancy_same")
attack = fx.scenario.labels.index("attack")

###############################################################################
# Unpatched, the attacker pays in one ether and leaves with more.

world, results = replay(fx.code, fx.scenario)
print("attack status:", results[attack].status)
print("bank re-entered", results[attack].max_nesting[TARGET], "times deep")
print("attacker balance:", world.balance_of(ATTACKER) / ETHER, "ether")

###############################################################################
# The lock needs a fresh key.  Storage inference finds every statically
# addressed slot; the lock goes one past the highest.

layout = infer_storage_layout(build_cfg(disassemble(fx.runtime)))
print(layout.to_json())

###############################################################################
# Patch and look at the code around the ``CALL``.

out, report = patch_contract(fx.code, fx.bugs)
print("lock slot:", report.allocated_slots)
ins = disassemble(split_anatomy(out).runtime)
call = next(k for k, i in enumerate(ins) if i.mnemonic == "CALL")
for i in ins[call - 20: call + 6]:
    print(f"  {i.address:#06x}  {i}")

###############################################################################
# The same attack now reverts and the attacker keeps nothing.

world, results = replay(out, fx.scenario)
print("attack status:", results[attack].status)
print("attacker balance:", world.balance_of(ATTACKER) / ETHER, "ether")

###############################################################################
# Benign users pay for two extra stores per withdrawal: about 25k gas.

verdict = differential_run(fx.code, out, fx.scenario,
                           excluded_slots=report.allocated_slots)
print(verdict.table())
print("benign gas deltas:", verdict.benign_gas_deltas())
