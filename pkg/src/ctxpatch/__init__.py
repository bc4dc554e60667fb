"""Context-aware patching of EVM bytecode.

The pipeline reads deployment or runtime bytecode plus a bug report, infers
the context each fix needs (integer widths, free storage, owner variables),
instantiates patch templates and rewrites the code in place.
"""

from .asm import (BytecodeAnatomy, Instruction, assemble, assemble_text, disassemble,
                  read_bytecode, split_anatomy, write_bytecode)
from .cfg import build_cfg, enumerate_paths, path_to_root, unreachable_blocks
from .errors import *  # noqa: F401,F403
from .inference import (IntegerType, StorageLayout, bounds_of, find_owner_variable,
                        find_shared_state_writes, infer_integer_type, infer_storage_layout)
from .pipeline import PatchOptions, patch_contract
from .reports import (BugEntry, PatchReport, emit_patch_report, load_bug_report,
                      load_patch_report)
from .templates import (PatchContext, PatchTemplate, builtin_catalog, instantiate,
                        parse_template)

__version__ = "0.1.0"
