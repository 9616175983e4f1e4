"""Exception types raised by the solvers and the benchmark harness."""


class OadmError(Exception):
    """Base class; ``kind`` is the short tag the CLI prints."""

    kind = "error"


class ParameterError(OadmError, ValueError):
    kind = "parameter"


class StructureError(OadmError, ValueError):
    kind = "structure"


class CapabilityError(OadmError, NotImplementedError):
    kind = "capability"


class ConfigError(OadmError, ValueError):
    kind = "config"


class UsageError(OadmError, RuntimeError):
    kind = "usage"
