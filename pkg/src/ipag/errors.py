"""Shared exception types for the ipag package."""


class IpagError(Exception):
    """Base class for all errors raised by this package."""


class MiniCSyntaxError(IpagError):
    """Source text does not conform to the mini-C grammar."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class UnsupportedConstructError(MiniCSyntaxError):
    """Source uses a construct outside the mini-C subset."""

    def __init__(self, construct: str, line: int, col: int):
        super().__init__(f"unsupported construct: {construct}", line, col)
        self.construct = construct


class InterchangeError(IpagError):
    """AST interchange file is malformed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class AstValidationError(IpagError):
    """An Ast violates its structural invariants."""


class StageError(IpagError):
    """A graph was fed to a pipeline step that expects a different stage."""


class RulesetError(IpagError):
    """A property name is missing from the compression ruleset."""


class VocabularyError(IpagError):
    """A property name is missing from a closed vocabulary."""


class LabelOverflowError(IpagError):
    """A merged label packs more names than the fixed-width embedding holds."""


class EmbedServiceError(IpagError):
    """The external embedding service could not produce vectors."""


class CorpusMismatchError(IpagError):
    """Two corpora that must describe the same routines do not line up."""


class CheckpointError(IpagError):
    """A model checkpoint file is unreadable or incompatible."""
