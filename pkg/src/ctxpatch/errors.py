"""Exception hierarchy shared by every stage of the patching pipeline."""


class PatchError(Exception):
    """Base class for all errors raised by ctxpatch."""


class AssemblyError(PatchError):
    pass


class AnatomyError(PatchError):
    pass


class LocationError(PatchError):
    pass


class UnreachableError(PatchError):
    pass


class TaintError(PatchError):
    def __init__(self, message, pc=None):
        super().__init__(message)
        self.pc = pc


class TemplateError(PatchError):
    pass


class ContextError(PatchError):
    pass


class SafetyError(PatchError):
    pass


class RelocationError(PatchError):
    pass


class ReassemblyError(PatchError):
    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class ReportError(PatchError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer
