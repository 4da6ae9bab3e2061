"""Exception hierarchy.

Every error carries a short ``category`` string that the command-line front
end prints verbatim, so scripts can dispatch on it.
"""


class GafAttnError(ValueError):
    category = "error"


class TranscriptError(GafAttnError):
    category = "invalid-transcript"


class SchemaError(GafAttnError):
    category = "schema"


class BoundsError(GafAttnError):
    category = "bounds"


class LoadError(GafAttnError):
    category = "load"


class ConfigError(GafAttnError):
    category = "config"


class PartitionError(GafAttnError):
    category = "partition"


class EncodeError(GafAttnError):
    category = "encode"


class ShapeError(GafAttnError):
    category = "shape"


class CheckError(GafAttnError):
    category = "check"


class EvaluationError(GafAttnError):
    category = "evaluation"


class HarnessError(GafAttnError):
    category = "harness"


class ArgumentError(GafAttnError):
    category = "argument"


class CheckpointError(GafAttnError):
    category = "checkpoint"
