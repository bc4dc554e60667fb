"""Command-line front end: ``patch``, ``analyze`` and ``verify``.

Exit codes: 0 when everything succeeded, 2 when a bug was skipped or failed
(or a differential check failed), 1 on a fatal error.  Diagnostics go to
stderr; data goes only to the paths named on the command line (``analyze``
prints its JSON to stdout when ``--out`` is absent).
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import cfg as cfglib
from .asm import disassemble, read_bytecode, split_anatomy, write_bytecode
from .errors import PatchError
from .harness import Scenario, differential_run
from .inference import infer_integer_type, infer_storage_layout
from .pipeline import PatchOptions, patch_contract
from .reports import emit_patch_report, load_bug_report, load_patch_report
from .templates import load_templates

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2
CODE_SUFFIXES = (".hex", ".bin", ".evm")

log = logging.getLogger("ctxpatch")


def _err(msg):
    print(f"ctxpatch: {msg}", file=sys.stderr)


def _options(args, contract_id):
    templates = load_templates(args.templates) if args.templates else None
    return PatchOptions(force=args.force, max_paths=args.max_paths, max_depth=args.max_depth,
                        templates=templates, contract_id=contract_id)


def _patch_one(args, inp, bugs_path, out, report_path):
    """Patch one contract; returns ``(exit code, messages)``."""
    code = read_bytecode(inp)
    runtime = split_anatomy(code).runtime
    bugs = load_bug_report(bugs_path, code=runtime)
    patched, report = patch_contract(code, bugs, _options(args, Path(inp).stem))
    write_bytecode(out, patched)
    Path(report_path).write_text(emit_patch_report(report))
    msgs = [f"{inp}: warning: {w}" for w in report.warnings]
    for e in report.entries:
        if e.status != "patched":
            msgs.append(f"{inp}: {e.bug.vulnerability} at {e.bug.pc:#x} {e.status}: {e.reason}")
    n = sum(e.status == "patched" for e in report.entries)
    msgs.append(f"{inp}: patched {n}/{len(report.entries)} bug(s), "
                f"{report.original_size} -> {report.patched_size} bytes")
    return (EXIT_OK if report.all_patched else EXIT_PARTIAL), msgs


def _patch_job(job):
    args, inp, bugs, out, rep = job
    try:
        return _patch_one(args, inp, bugs, out, rep)
    except (PatchError, OSError, ValueError) as exc:
        return EXIT_FATAL, [f"{inp}: {exc}"]


def _batch_jobs(args):
    src, bugs, out = Path(args.input), Path(args.bugs), Path(args.out)
    if not bugs.is_dir():
        raise PatchError("with a directory --input, --bugs must be a directory of "
                         "<name>.json reports")
    out.mkdir(parents=True, exist_ok=True)
    report_dir = Path(args.report) if args.report else out
    report_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for path in sorted(src.iterdir()):
        if path.suffix not in CODE_SUFFIXES:
            continue
        jobs.append((args, str(path), str(bugs / f"{path.stem}.json"),
                     str(out / f"{path.stem}.patched.hex"),
                     str(report_dir / f"{path.stem}.report.json")))
    if not jobs:
        raise PatchError(f"no {'/'.join(CODE_SUFFIXES)} files in {src}")
    return jobs


def cmd_patch(args):
    if Path(args.input).is_dir():
        jobs = _batch_jobs(args)
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_patch_job, jobs))
        else:
            results = [_patch_job(j) for j in jobs]
    else:
        if not args.out:
            raise PatchError("patch needs --out")
        report = args.report or f"{args.out}.report.json"
        results = [_patch_job((args, args.input, args.bugs, args.out, report))]
    for _, msgs in results:
        for m in msgs:
            _err(m)
    codes = {c for c, _ in results}
    return EXIT_FATAL if EXIT_FATAL in codes else max(codes)


def cmd_analyze(args):
    code = read_bytecode(args.input)
    anatomy = split_anatomy(code)
    kw = dict(max_paths=args.max_paths, max_depth=args.max_depth)
    graph = cfglib.build_cfg(disassemble(anatomy.runtime))
    layout = infer_storage_layout(graph, **kw)
    if anatomy.has_deployment:
        layout = layout.merge(infer_storage_layout(
            cfglib.build_cfg(disassemble(anatomy.deployment)), **kw))
    types = {}
    if args.bugs:
        for bug in load_bug_report(args.bugs, code=anatomy.runtime):
            if bug.opcode in ("ADD", "MUL", "SUB"):
                t = infer_integer_type(graph, bug.pc, args.max_depth)
                types[f"{bug.pc:#x}"] = {"bits": t.bits, "signed": t.signed}
    dead = cfglib.unreachable_blocks(graph)
    result = {
        "runtime_size": len(anatomy.runtime),
        "has_deployment": anatomy.has_deployment,
        "cfg": {"blocks": len(graph.blocks),
                "unresolved_jumps": [f"{a:#x}" for a in sorted(graph.unresolved_jumps)],
                "unreachable_blocks": [f"{a:#x}" for a in sorted(dead)]},
        "layout": layout.to_json(),
        "types": types,
    }
    for w in layout.warnings:
        _err(f"warning: {w}")
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.emit_cfg:
        Path(args.emit_cfg).write_text(graph.to_dot())
    if args.emit_layout:
        Path(args.emit_layout).write_text(json.dumps(layout.to_json(), indent=2) + "\n")
    return EXIT_OK


def cmd_verify(args):
    if not args.scenario:
        raise PatchError("verify needs --scenario")
    original = read_bytecode(args.input)
    excluded = []
    if args.patched:
        patched = read_bytecode(args.patched)
        if args.report:
            excluded = load_patch_report(args.report).allocated_slots
    elif args.bugs:
        bugs = load_bug_report(args.bugs, code=split_anatomy(original).runtime)
        patched, report = patch_contract(original, bugs, _options(args, Path(args.input).stem))
        excluded = report.allocated_slots
    else:
        raise PatchError("verify needs --patched or --bugs")
    scenario = Scenario.from_json(args.scenario)
    verdict = differential_run(original, patched, scenario, excluded_slots=excluded)
    print(verdict.table(), file=sys.stderr)
    for t in verdict.failures:
        _err(f"transaction {t.index} ({t.label}) failed: {t.reason}")
    return EXIT_OK if verdict.passed else EXIT_PARTIAL


def build_parser():
    p = argparse.ArgumentParser(prog="ctxpatch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--input", required=True,
                        help="bytecode file (hex or binary); a directory for batch patching")
        sp.add_argument("--templates", help="JSON file overriding built-in templates")
        sp.add_argument("--force", action="store_true",
                        help="patch even when the CFG has unreachable blocks")
        sp.add_argument("--max-paths", type=int, default=cfglib.DEFAULT_MAX_PATHS)
        sp.add_argument("--max-depth", type=int, default=cfglib.DEFAULT_MAX_DEPTH)

    sp = sub.add_parser("patch", help="patch the bugs in a bug report")
    common(sp)
    sp.add_argument("--bugs", required=True, help="bug report JSON (directory in batch mode)")
    sp.add_argument("--out", help="patched bytecode output (directory in batch mode)")
    sp.add_argument("--report", help="patch report output (default: <out>.report.json)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes in batch mode")
    sp.set_defaults(func=cmd_patch)

    sp = sub.add_parser("analyze", help="CFG, storage layout and integer types")
    common(sp)
    sp.add_argument("--bugs", help="bug report; integer types are inferred at its pcs")
    sp.add_argument("--out", help="analysis JSON output (default: stdout)")
    sp.add_argument("--emit-cfg", metavar="PATH", help="write the runtime CFG as graphviz dot")
    sp.add_argument("--emit-layout", metavar="PATH", help="write the storage layout JSON")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("verify", help="differential replay of a scenario")
    common(sp)
    sp.add_argument("--scenario", help="scenario JSON")
    sp.add_argument("--patched", help="patched bytecode to compare against --input")
    sp.add_argument("--bugs", help="patch --input in memory instead of reading --patched")
    sp.add_argument("--report", help="patch report naming the slots the patch may write")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (PatchError, OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
