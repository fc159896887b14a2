##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# Exception classes of the package. All of them are RuntimeErrors, so
# callers which only care about "something went wrong" may keep
# catching RuntimeError.
#
##########################################################################


class TopoAlignError(RuntimeError):
    """Base class of all errors raised by this package."""

    exit_code = 2


class InvalidInput(TopoAlignError):
    """An argument violates the precondition of an operation."""

    exit_code = 1


class InvalidConfig(TopoAlignError):
    """A configuration value is out of its valid range."""

    exit_code = 1


class ShapeError(TopoAlignError):
    """Operands have incompatible shapes."""


class ZeroNormError(TopoAlignError):
    """A vector with zero norm was passed to a cosine similarity."""

    def __init__(self, message: str, index: int = None):
        super().__init__(message)
        self.index = index


class NondeterminismError(TopoAlignError):
    """Two evaluations of the same function disagree."""


class NumericError(TopoAlignError):
    """An operation produced a non-finite value."""


class ParseError(TopoAlignError):
    """A file record could not be parsed."""

    exit_code = 1

    def __init__(self, message: str, line: int = None):
        super().__init__(message)
        self.line = line


class DuplicateError(TopoAlignError):
    """An identifier occurs more than once."""

    exit_code = 1


class IoError(TopoAlignError):
    """A file could not be read or written."""
