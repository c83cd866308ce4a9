"""Exception hierarchy. Each class carries a short category used by the CLI."""


class AmpCausalError(Exception):
    category = "internal"


class FormatError(AmpCausalError):
    category = "format"


class DataError(AmpCausalError):
    category = "data"


class RoleError(AmpCausalError):
    category = "role"


class DegenerateDataError(DataError):
    category = "degenerate"


class SampleSizeError(DataError):
    category = "sample-size"


class OrientationConflictError(AmpCausalError):
    category = "orientation"


class AcyclicityError(AmpCausalError):
    category = "cycle"


class UnknownNodeError(AmpCausalError):
    category = "unknown-node"


class TrainingDivergenceError(AmpCausalError):
    category = "divergence"


class UnidentifiableEffectError(AmpCausalError):
    category = "unidentifiable"


class ConfigError(AmpCausalError):
    category = "config"
