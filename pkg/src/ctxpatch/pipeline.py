"""End-to-end patching: anatomy, CFG, context inference, templates, rewriting."""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from . import cfg as cfglib
from .asm import disassemble, split_anatomy
from .errors import PatchError, SafetyError, UnreachableError
from .inference import (IntegerType, bounds_of, find_owner_variable, infer_integer_type,
                        infer_storage_layout, shared_state_sites)
from .reports import PatchEntry, PatchReport, template_class
from .rewriter import apply_patch, fix_deployment, fix_jump_targets, reassemble
from .templates import PatchContext, builtin_catalog, check_only, instantiate

log = logging.getLogger(__name__)

UNREACHABLE_REASON = "unreachable block"


@dataclass
class PatchOptions:
    force: bool = False
    max_paths: int = cfglib.DEFAULT_MAX_PATHS
    max_depth: int = cfglib.DEFAULT_MAX_DEPTH
    templates: Optional[dict] = None
    contract_id: str = "contract"


@dataclass
class _Plan:
    """Patches derived for one bug before anything is rewritten."""
    runtime: list = field(default_factory=list)
    constructor: list = field(default_factory=list)
    slots: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


class _Allocator:
    """Hands out fresh storage keys past the inferred layout, once per role."""

    def __init__(self, next_free):
        self.next_free = next_free
        self.roles = {}

    def get(self, role):
        if role not in self.roles:
            self.roles[role] = self.next_free
            self.next_free += 1
        return self.roles[role]


def _catalog(options):
    cat = builtin_catalog()
    if options.templates:
        cat.update(options.templates)
    return cat


def _plan_bug(bug, tag, runtime_cfg, deploy_cfg, catalog, alloc, ctx, options, guarded):
    cls = template_class(bug.vulnerability)
    templates = catalog.get(cls)
    if not templates:
        raise PatchError(f"no template for {cls}")
    plan = _Plan()
    kw = dict(max_paths=options.max_paths, max_depth=options.max_depth)

    def make(tmpl, anchor, **ctx_fields):
        for k, v in ctx_fields.items():
            setattr(ctx, k, v)
        return instantiate(tmpl, ctx, anchor, cls, tag=tag)

    if cls == "reentrancy":
        slot = alloc.get("mutex")
        plan.slots.append(slot)
        lock, unlock = templates[0], templates[1]
        plan.runtime.append(make(lock, bug.pc, free_storage_key=slot))
        plan.runtime.append(make(unlock, bug.pc, free_storage_key=slot))
        sites = shared_state_sites(runtime_cfg, bug.pc, **kw)
        for site, exposed in sorted(sites.items()):
            # Stores reached only after the CALL already run under the lock.
            if exposed and site not in guarded:
                guarded.add(site)
                plan.runtime.append(make(check_only(lock), site, free_storage_key=slot))
    elif cls == "access_control":
        owner = find_owner_variable(deploy_cfg, **kw) if deploy_cfg is not None else None
        ctor, guard = templates[0], templates[1]
        if owner is None:
            if deploy_cfg is None:
                raise PatchError("no constructor code to initialise an owner slot")
            owner = alloc.get("owner")
            plan.slots.append(owner)
            if "owner" not in guarded:
                guarded.add("owner")
                plan.constructor.append(make(ctor, 0, free_storage_key=owner))
        plan.runtime.append(make(guard, bug.pc, free_storage_key=owner))
    elif cls in ("overflow_add", "overflow_mul"):
        try:
            itype = infer_integer_type(runtime_cfg, bug.pc, options.max_depth)
        except UnreachableError:
            if not options.force:
                raise
            # No path from the entry to reason about: guard full-word wraparound.
            itype = IntegerType(256, False)
            plan.warnings.append(f"{bug.pc:#x}: no path to the bug; assuming uint256")
        plan.runtime.append(make(templates[0], bug.pc, integer_bounds=bounds_of(itype).max))
    else:
        for tmpl in templates:
            if tmpl.constructor:
                continue
            plan.runtime.append(make(tmpl, bug.pc))
    return plan


def patch_contract(code, bugs, options=None):
    """Patch ``code`` for every entry of ``bugs``; returns ``(bytes, PatchReport)``."""
    options = options or PatchOptions()
    code = bytes(code)
    report = PatchReport(options.contract_id, original_size=len(code))
    entries = [PatchEntry(bug) for bug in bugs]
    report.entries = entries
    timings = report.timings
    clock = time.perf_counter()

    def lap(stage):
        nonlocal clock
        now = time.perf_counter()
        timings[stage] = timings.get(stage, 0.0) + (now - clock) * 1000
        clock = now

    def give_up(reason, status="failed"):
        for e in entries:
            if e.status == "patched":
                e.status, e.reason, e.bytes_inserted, e.storage_slots_allocated = \
                    status, reason, 0, []
        report.patched_size = len(code)
        return code, report

    anatomy = split_anatomy(code)
    lap("anatomy")
    runtime_cfg = cfglib.build_cfg(disassemble(anatomy.runtime))
    deploy_cfg = cfglib.build_cfg(disassemble(anatomy.deployment)) \
        if anatomy.has_deployment else None
    lap("cfg")
    dead = cfglib.unreachable_blocks(runtime_cfg)
    if dead:
        msg = (f"CFG has {len(dead)} unreachable block(s) at "
               + ", ".join(f"{s:#x}" for s in sorted(dead))
               + "; patching may break semantics")
        report.warnings.append(msg)
        if not options.force and entries:
            report.warnings.append("rerun with --force to patch anyway")
            return give_up(UNREACHABLE_REASON, "skipped")

    kw = dict(max_paths=options.max_paths, max_depth=options.max_depth)
    layout = infer_storage_layout(runtime_cfg, **kw)
    if deploy_cfg is not None:
        layout = layout.merge(infer_storage_layout(deploy_cfg, **kw))
    report.warnings.extend(layout.warnings)
    lap("inference")

    catalog = _catalog(options)
    alloc = _Allocator(layout.next_free)
    ctx = PatchContext()
    guarded = set()
    runtime_patches, ctor_patches = [], []
    for n, entry in enumerate(entries):
        tag = f"bug{n}"
        try:
            plan = _plan_bug(entry.bug, tag, runtime_cfg, deploy_cfg, catalog, alloc, ctx,
                             options, guarded)
        except PatchError as exc:
            entry.status, entry.reason = "failed", str(exc)
            continue
        entry.storage_slots_allocated = plan.slots
        report.warnings.extend(plan.warnings)
        runtime_patches.extend(plan.runtime)
        ctor_patches.extend(plan.constructor)
    lap("generation")

    # Highest anchors first so lower offsets stay valid; patches sharing an
    # anchor keep their planning order.
    order = sorted(range(len(runtime_patches)), key=lambda k: -runtime_patches[k].anchor_pc)
    graph = runtime_cfg
    for k in order:
        p = runtime_patches[k]
        entry = entries[int(p.tag[3:])]
        if entry.status != "patched":
            continue
        try:
            graph = apply_patch(graph, p, force=options.force)
        except SafetyError as exc:
            entry.status, entry.reason = "skipped", f"{UNREACHABLE_REASON}: {exc}"
        except PatchError as exc:
            entry.status, entry.reason = "failed", str(exc)
    # Drop everything a later failure left half-applied for that bug.
    bad = {f"bug{n}" for n, e in enumerate(entries) if e.status != "patched"}
    if bad:
        for b in graph.blocks.values():
            b.instructions = [i for i in b.instructions if i.tag not in bad]
    try:
        graph = fix_jump_targets(graph)
        new_runtime = reassemble(graph)
        report.warnings.extend(graph.warnings)
        ctor_patches = [p for p in ctor_patches if p.tag not in bad]
        out, dwarn = fix_deployment(anatomy, new_runtime, ctor_patches)
        report.warnings.extend(dwarn)
    except PatchError as exc:
        lap("rewriting")
        return give_up(f"rewriting failed: {exc}")
    lap("rewriting")

    runtime_instrs = graph.instructions()
    ctor_instrs = [i for p in ctor_patches for i in p.insert_instructions]
    for n, entry in enumerate(entries):
        if entry.status == "patched":
            tag = f"bug{n}"
            entry.bytes_inserted = sum(i.size for i in runtime_instrs + ctor_instrs
                                       if i.tag == tag)
        else:
            entry.storage_slots_allocated = []
    report.patched_size = len(out)
    return out, report
