"""Exception taxonomy shared across the package."""


class GeoprogError(Exception):
    """Base class for all errors raised by this package."""


# --- registry construction / lookup ---

class RegistryError(GeoprogError):
    pass


class InvalidRegistryDoc(RegistryError):
    pass


class DuplicateSymbol(RegistryError):
    pass


class UnknownProblemType(RegistryError):
    pass


# --- program parsing / validation ---

class ProgramError(GeoprogError):
    pass


class UnknownSymbol(ProgramError):
    pass


class OperatorInArgPosition(ProgramError):
    pass


class CacheTokenForwardReference(ProgramError):
    pass


class Truncated(ProgramError):
    pass


class MalformedProgram(ProgramError):
    pass


# --- program execution ---

class ExecutionError(GeoprogError):
    pass


class DivisionByZero(ExecutionError):
    pass


class UnboundNumber(ExecutionError):
    pass


class NonExecutableOperator(ExecutionError):
    pass


# --- numerics / decoding ---

class AllMasked(GeoprogError):
    """A masked distribution was requested with no allowed entries."""


class NonFiniteLoss(GeoprogError):
    pass


class GoldSymbolMasked(GeoprogError):
    """A gold target fell outside the active mask; registry and data disagree."""


class SpaceTooLarge(GeoprogError):
    """Exhaustive enumeration would exceed the configured bound."""


# --- data and checkpoint I/O ---

class DataError(GeoprogError):
    pass


class MalformedRecord(DataError):
    pass


class UnresolvableSymbol(DataError):
    pass


class CheckpointError(DataError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptTensor(CheckpointError):
    pass
