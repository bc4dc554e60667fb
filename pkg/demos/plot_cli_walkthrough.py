"""
The command line, end to end
============================

Write every fixture to a scratch directory, then drive ``analyze``, ``patch``
and ``verify`` the way a shell user would.
"""

import json
import tempfile
from pathlib import Path

from ctxpatch import corpus
from ctxpatch.cli import main

work = Path(tempfile.mkdtemp(prefix="ctxpatch-demo-"))
for fx in corpus.all_fixtures():
    fx.write(work)
print(sorted(p.name for p in work.iterdir())[:6], "...")

###############################################################################
# ``analyze`` prints the recovered CFG summary, storage layout and, given a
# bug report, the inferred integer types.

main(["analyze", "--input", str(work / "overflow_uint32.hex"),
      "--bugs", str(work / "overflow_uint32.json")])

###############################################################################
# ``patch`` writes the patched bytecode and a report next to it.

out = work / "tx_origin.patched.hex"
rc = main(["patch", "--input", str(work / "tx_origin.hex"),
           "--bugs", str(work / "tx_origin.json"), "--out", str(out)])
print("exit code", rc)
print(json.dumps(json.loads(Path(str(out) + ".report.json").read_text()), indent=2))

###############################################################################
# ``verify`` replays a scenario against original and patched code and prints
# one line per transaction.

rc = main(["verify", "--input", str(work / "tx_origin.hex"), "--patched", str(out),
           "--report", str(out) + ".report.json",
           "--scenario", str(work / "tx_origin.scenario.json")])
print("exit code", rc)
