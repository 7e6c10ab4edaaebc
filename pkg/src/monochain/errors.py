"""Shared exception types."""


class ShapeError(ValueError):
    """Operands do not share an alphabet spec / expected shape."""


class DomainError(ValueError):
    """A symbol, component index or rate is out of range."""


class ContradictionError(ValueError):
    """Elementwise product of two tensors is identically zero.

    Signals incompatible evidence; the list decoder maps this to a path
    log-likelihood of -inf instead of raising.
    """


class UnsupportedChainError(ValueError):
    """The requested decoding order is outside an engine's supported class."""


class CapacityError(RuntimeError):
    """A preallocated pool ran out of records (indicates a logic bug)."""


class InternalStateError(RuntimeError):
    """A structural invariant of the decoder state was violated."""
