"""Exception taxonomy, mirrored by the CLI exit codes."""


class RanlabError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(RanlabError):
    """Operands have incompatible extents."""


class ConfigError(RanlabError):
    """Invalid configuration value or combination."""


class ContractError(RanlabError):
    """An operation was called outside its documented domain."""


class IngestionError(RanlabError):
    """A corpus or input file is missing, empty, or unusable."""


class NumericError(RanlabError):
    """Training produced a non-finite value."""


class IntegrityError(RanlabError):
    """A persisted artifact failed validation."""


class VersionError(IntegrityError):
    """Checkpoint format version is not supported."""


class ChecksumError(IntegrityError):
    """Checkpoint payload does not match its CRC."""


class DigestError(IntegrityError):
    """Vocabulary digest does not match the stored one."""


class TruncatedError(IntegrityError):
    """File ended before the declared length."""
