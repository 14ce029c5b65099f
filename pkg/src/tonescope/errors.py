"""Exception types shared across the package.

The split matters for the CLI exit-code contract: format/parse problems map
to exit 2, contract violations (shape, domain, range) map to exit 3.
"""


class TonescopeError(Exception):
    """Base class for all package errors."""


class FormatError(TonescopeError):
    """A file or byte stream does not conform to its declared format."""


class ContractError(TonescopeError):
    """An argument or value violates a documented precondition."""


class ShapeError(ContractError):
    """Operands have incompatible shapes. Message names both shapes."""


class DomainError(ContractError):
    """A math op was applied outside its domain (log of <= 0, etc.)."""


class RangeError(ContractError):
    """A parameter lies outside its documented interval."""


class NonFiniteError(TonescopeError):
    """A NaN or inf surfaced. Message names the offending tensor."""
